#include "toppo/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace toppo {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor shape has negative extent");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape.size() > 2) throw std::invalid_argument("tensor rank > 2 unsupported");
  if (shape_size(shape) != data.size())
    throw std::invalid_argument("tensor shape does not match data length");
}

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> d) {
  int n = static_cast<int>(d.size());
  return Tensor({n}, std::move(d));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> d) {
  return Tensor({rows, cols}, std::move(d));
}

int Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows() on non-matrix tensor");
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols() on non-matrix tensor");
  return shape[1];
}

double& Tensor::at(int r, int c) {
  return data[static_cast<std::size_t>(r) * shape[1] + c];
}

double Tensor::at(int r, int c) const {
  return data[static_cast<std::size_t>(r) * shape[1] + c];
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void check_finite(const Tensor& t, const char* where) {
  for (double v : t.data) {
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("non-finite value in ") + where);
  }
}

namespace kernels {

void affine(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  int batch = x.rows();
  int in_dim = x.cols();
  int out_dim = w.rows();
  if (w.cols() != in_dim)
    throw std::invalid_argument("affine: weight shape " + w.shape_str() +
                                " does not accept input " + x.shape_str());
  if (b.rank() != 1 || b.shape[0] != out_dim)
    throw std::invalid_argument("affine: bias shape mismatch");
  y = Tensor::zeros({batch, out_dim});
  for (int r = 0; r < batch; ++r) {
    const double* xr = &x.data[static_cast<std::size_t>(r) * in_dim];
    double* yr = &y.data[static_cast<std::size_t>(r) * out_dim];
    for (int o = 0; o < out_dim; ++o) {
      const double* wo = &w.data[static_cast<std::size_t>(o) * in_dim];
      double acc = b.data[o];
      for (int i = 0; i < in_dim; ++i) acc += xr[i] * wo[i];
      yr[o] = acc;
    }
  }
}

void tanh_inplace(Tensor& t) {
  for (double& v : t.data) v = std::tanh(v);
}

void log_softmax(const Tensor& logits, Tensor& out) {
  int batch = logits.rows();
  int n = logits.cols();
  out = Tensor::zeros({batch, n});
  for (int r = 0; r < batch; ++r) {
    const double* row = &logits.data[static_cast<std::size_t>(r) * n];
    double* orow = &out.data[static_cast<std::size_t>(r) * n];
    double m = row[0];
    for (int i = 1; i < n; ++i) m = std::max(m, row[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(row[i] - m);
    double lse = m + std::log(z);
    for (int i = 0; i < n; ++i) orow[i] = row[i] - lse;
  }
}

void gaussian_log_prob(const Tensor& mean, const Tensor& log_std,
                       const Tensor& actions, Tensor& out) {
  int batch = mean.rows();
  int dim = mean.cols();
  if (!actions.same_shape(mean))
    throw std::invalid_argument("gaussian_log_prob: action shape mismatch");
  if (log_std.rank() != 1 || log_std.shape[0] != dim)
    throw std::invalid_argument("gaussian_log_prob: log_std shape mismatch");
  constexpr double kLogTwoPi = 1.8378770664093454836;
  out = Tensor::zeros({batch});
  for (int r = 0; r < batch; ++r) {
    double acc = -0.5 * dim * kLogTwoPi;
    for (int d = 0; d < dim; ++d) {
      double ls = log_std.data[d];
      double z = (actions.at(r, d) - mean.at(r, d)) * std::exp(-ls);
      acc -= 0.5 * z * z + ls;
    }
    out.data[r] = acc;
  }
}

}  // namespace kernels

}  // namespace toppo
