#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace toppo {

// Dense row-major tensor of doubles, rank 1 or 2. The autodiff tape, the
// policy networks, and the exact-DP oracle all move data through this type.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> d);
  static Tensor matrix(int rows, int cols, std::vector<double> d);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int r, int c);
  double at(int r, int c) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_str() const;
};

// Throws std::runtime_error naming `where` if any element is NaN or Inf.
void check_finite(const Tensor& t, const char* where);

// Shared numeric kernels. Both the tape operations and the gradient-free
// policy forward pass call these, so the two paths agree bitwise.
namespace kernels {

// y = x * w^T + b with x [B x I], w [O x I], b [O]; y [B x O].
void affine(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);

void tanh_inplace(Tensor& t);

// Row-wise log softmax of a [B x A] matrix.
void log_softmax(const Tensor& logits, Tensor& out);

// Joint log density of a diagonal Gaussian, one row per sample.
// mean [B x D], log_std [D], actions [B x D]; out [B].
void gaussian_log_prob(const Tensor& mean, const Tensor& log_std,
                       const Tensor& actions, Tensor& out);

}  // namespace kernels

}  // namespace toppo
