#include "toppo/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace toppo::ad {

Tape::Node& Tape::node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
const Tape::Node& Tape::node(int id) const {
  return nodes_[static_cast<std::size_t>(id)];
}

void Tape::check_var(Var v, const char* op_name) const {
  if (!v.valid() || v.id >= size())
    throw std::invalid_argument(std::string(op_name) + ": var not on this tape");
}

void Tape::check_same_shape(Var a, Var b, const char* op_name) const {
  if (!node(a.id).value.same_shape(node(b.id).value))
    throw std::invalid_argument(std::string(op_name) + ": shape mismatch " +
                                node(a.id).value.shape_str() + " vs " +
                                node(b.id).value.shape_str());
}

int Tape::push(Tensor value, bool needs_grad, std::vector<int> parents,
               std::function<void(Tape&, int)> backward_fn,
               const char* op_name) {
  check_finite(value, op_name);
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.parents = std::move(parents);
  n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return size() - 1;
}

Tensor& Tape::grad_slot(int id) {
  Node& n = node(id);
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  Tensor& slot = grad_slot(id);
  for (std::size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
}

Var Tape::leaf(Tensor value) {
  return {push(std::move(value), true, {}, nullptr, "leaf")};
}

Var Tape::constant(Tensor value) {
  return {push(std::move(value), false, {}, nullptr, "constant")};
}

Var Tape::add(Var a, Var b) {
  check_var(a, "add");
  check_var(b, "add");
  check_same_shape(a, b, "add");
  const Tensor& av = node(a.id).value;
  const Tensor& bv = node(b.id).value;
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  bool ng = node(a.id).needs_grad || node(b.id).needs_grad;
  int pa = a.id, pb = b.id;
  return {push(std::move(out), ng, {pa, pb},
               [pa, pb](Tape& t, int self) {
                 const Tensor& g = t.node(self).grad;
                 if (t.node(pa).needs_grad) t.accumulate(pa, g);
                 if (t.node(pb).needs_grad) t.accumulate(pb, g);
               },
               "add")};
}

Var Tape::sub(Var a, Var b) {
  check_var(a, "sub");
  check_var(b, "sub");
  check_same_shape(a, b, "sub");
  const Tensor& av = node(a.id).value;
  const Tensor& bv = node(b.id).value;
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  bool ng = node(a.id).needs_grad || node(b.id).needs_grad;
  int pa = a.id, pb = b.id;
  return {push(std::move(out), ng, {pa, pb},
               [pa, pb](Tape& t, int self) {
                 const Tensor& g = t.node(self).grad;
                 if (t.node(pa).needs_grad) t.accumulate(pa, g);
                 if (t.node(pb).needs_grad) {
                   Tensor& slot = t.grad_slot(pb);
                   for (std::size_t i = 0; i < slot.data.size(); ++i)
                     slot.data[i] -= g.data[i];
                 }
               },
               "sub")};
}

Var Tape::mul(Var a, Var b) {
  check_var(a, "mul");
  check_var(b, "mul");
  check_same_shape(a, b, "mul");
  const Tensor& av = node(a.id).value;
  const Tensor& bv = node(b.id).value;
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  bool ng = node(a.id).needs_grad || node(b.id).needs_grad;
  int pa = a.id, pb = b.id;
  return {push(std::move(out), ng, {pa, pb},
               [pa, pb](Tape& t, int self) {
                 const Tensor& g = t.node(self).grad;
                 const Tensor& av2 = t.node(pa).value;
                 const Tensor& bv2 = t.node(pb).value;
                 if (t.node(pa).needs_grad) {
                   Tensor& slot = t.grad_slot(pa);
                   for (std::size_t i = 0; i < slot.data.size(); ++i)
                     slot.data[i] += g.data[i] * bv2.data[i];
                 }
                 if (t.node(pb).needs_grad) {
                   Tensor& slot = t.grad_slot(pb);
                   for (std::size_t i = 0; i < slot.data.size(); ++i)
                     slot.data[i] += g.data[i] * av2.data[i];
                 }
               },
               "mul")};
}

Var Tape::div(Var a, Var b) {
  check_var(a, "div");
  check_var(b, "div");
  check_same_shape(a, b, "div");
  const Tensor& av = node(a.id).value;
  const Tensor& bv = node(b.id).value;
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= bv.data[i];
  bool ng = node(a.id).needs_grad || node(b.id).needs_grad;
  int pa = a.id, pb = b.id;
  return {push(std::move(out), ng, {pa, pb},
               [pa, pb](Tape& t, int self) {
                 const Tensor& g = t.node(self).grad;
                 const Tensor& av2 = t.node(pa).value;
                 const Tensor& bv2 = t.node(pb).value;
                 if (t.node(pa).needs_grad) {
                   Tensor& slot = t.grad_slot(pa);
                   for (std::size_t i = 0; i < slot.data.size(); ++i)
                     slot.data[i] += g.data[i] / bv2.data[i];
                 }
                 if (t.node(pb).needs_grad) {
                   Tensor& slot = t.grad_slot(pb);
                   for (std::size_t i = 0; i < slot.data.size(); ++i)
                     slot.data[i] -= g.data[i] * av2.data[i] /
                                     (bv2.data[i] * bv2.data[i]);
                 }
               },
               "div")};
}

Var Tape::add_scalar(Var a, double c) {
  check_var(a, "add_scalar");
  Tensor out = node(a.id).value;
  for (double& v : out.data) v += c;
  int pa = a.id;
  return {push(std::move(out), node(a.id).needs_grad, {pa},
               [pa](Tape& t, int self) {
                 if (t.node(pa).needs_grad) t.accumulate(pa, t.node(self).grad);
               },
               "add_scalar")};
}

Var Tape::mul_scalar(Var a, double c) {
  check_var(a, "mul_scalar");
  Tensor out = node(a.id).value;
  for (double& v : out.data) v *= c;
  int pa = a.id;
  return {push(std::move(out), node(a.id).needs_grad, {pa},
               [pa, c](Tape& t, int self) {
                 if (!t.node(pa).needs_grad) return;
                 const Tensor& g = t.node(self).grad;
                 Tensor& slot = t.grad_slot(pa);
                 for (std::size_t i = 0; i < slot.data.size(); ++i)
                   slot.data[i] += g.data[i] * c;
               },
               "mul_scalar")};
}

Var Tape::affine(Var x, Var w, Var b) {
  check_var(x, "affine");
  check_var(w, "affine");
  check_var(b, "affine");
  const Tensor& xv = node(x.id).value;
  const Tensor& wv = node(w.id).value;
  const Tensor& bv = node(b.id).value;
  if (xv.rank() != 2 || wv.rank() != 2)
    throw std::invalid_argument("affine: input and weight must be matrices");
  Tensor out;
  kernels::affine(xv, wv, bv, out);
  bool ng = node(x.id).needs_grad || node(w.id).needs_grad ||
            node(b.id).needs_grad;
  int px = x.id, pw = w.id, pb = b.id;
  return {push(std::move(out), ng, {px, pw, pb},
               [px, pw, pb](Tape& t, int self) {
                 const Tensor& g = t.node(self).grad;  // [B x O]
                 const Tensor& xv2 = t.node(px).value; // [B x I]
                 const Tensor& wv2 = t.node(pw).value; // [O x I]
                 int batch = xv2.rows(), in_dim = xv2.cols(), out_dim = wv2.rows();
                 if (t.node(px).needs_grad) {
                   Tensor& gx = t.grad_slot(px);
                   for (int r = 0; r < batch; ++r)
                     for (int o = 0; o < out_dim; ++o) {
                       double go = g.at(r, o);
                       for (int i = 0; i < in_dim; ++i)
                         gx.at(r, i) += go * wv2.at(o, i);
                     }
                 }
                 if (t.node(pw).needs_grad) {
                   Tensor& gw = t.grad_slot(pw);
                   for (int r = 0; r < batch; ++r)
                     for (int o = 0; o < out_dim; ++o) {
                       double go = g.at(r, o);
                       for (int i = 0; i < in_dim; ++i)
                         gw.at(o, i) += go * xv2.at(r, i);
                     }
                 }
                 if (t.node(pb).needs_grad) {
                   Tensor& gb = t.grad_slot(pb);
                   for (int r = 0; r < batch; ++r)
                     for (int o = 0; o < out_dim; ++o) gb.data[o] += g.at(r, o);
                 }
               },
               "affine")};
}

Var Tape::tanh(Var a) {
  check_var(a, "tanh");
  Tensor out = node(a.id).value;
  kernels::tanh_inplace(out);
  int pa = a.id;
  return {push(std::move(out), node(a.id).needs_grad, {pa},
               [pa](Tape& t, int self) {
                 if (!t.node(pa).needs_grad) return;
                 const Tensor& g = t.node(self).grad;
                 const Tensor& y = t.node(self).value;
                 Tensor& slot = t.grad_slot(pa);
                 for (std::size_t i = 0; i < slot.data.size(); ++i)
                   slot.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
               },
               "tanh")};
}

Var Tape::exp(Var a) {
  check_var(a, "exp");
  Tensor out = node(a.id).value;
  for (double& v : out.data) v = std::exp(v);
  int pa = a.id;
  return {push(std::move(out), node(a.id).needs_grad, {pa},
               [pa](Tape& t, int self) {
                 if (!t.node(pa).needs_grad) return;
                 const Tensor& g = t.node(self).grad;
                 const Tensor& y = t.node(self).value;
                 Tensor& slot = t.grad_slot(pa);
                 for (std::size_t i = 0; i < slot.data.size(); ++i)
                   slot.data[i] += g.data[i] * y.data[i];
               },
               "exp")};
}

Var Tape::log(Var a) {
  check_var(a, "log");
  Tensor out = node(a.id).value;
  for (double& v : out.data) v = std::log(v);
  int pa = a.id;
  return {push(std::move(out), node(a.id).needs_grad, {pa},
               [pa](Tape& t, int self) {
                 if (!t.node(pa).needs_grad) return;
                 const Tensor& g = t.node(self).grad;
                 const Tensor& xv = t.node(pa).value;
                 Tensor& slot = t.grad_slot(pa);
                 for (std::size_t i = 0; i < slot.data.size(); ++i)
                   slot.data[i] += g.data[i] / xv.data[i];
               },
               "log")};
}

Var Tape::square(Var a) {
  check_var(a, "square");
  Tensor out = node(a.id).value;
  for (double& v : out.data) v *= v;
  int pa = a.id;
  return {push(std::move(out), node(a.id).needs_grad, {pa},
               [pa](Tape& t, int self) {
                 if (!t.node(pa).needs_grad) return;
                 const Tensor& g = t.node(self).grad;
                 const Tensor& xv = t.node(pa).value;
                 Tensor& slot = t.grad_slot(pa);
                 for (std::size_t i = 0; i < slot.data.size(); ++i)
                   slot.data[i] += g.data[i] * 2.0 * xv.data[i];
               },
               "square")};
}

Var Tape::sum(Var a) {
  check_var(a, "sum");
  double acc = 0.0;
  for (double v : node(a.id).value.data) acc += v;
  int pa = a.id;
  return {push(Tensor::scalar(acc), node(a.id).needs_grad, {pa},
               [pa](Tape& t, int self) {
                 if (!t.node(pa).needs_grad) return;
                 double g = t.node(self).grad.data[0];
                 Tensor& slot = t.grad_slot(pa);
                 for (double& v : slot.data) v += g;
               },
               "sum")};
}

Var Tape::mean(Var a) {
  check_var(a, "mean");
  const Tensor& av = node(a.id).value;
  if (av.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (double v : av.data) acc += v;
  double inv_n = 1.0 / static_cast<double>(av.size());
  int pa = a.id;
  return {push(Tensor::scalar(acc * inv_n), node(a.id).needs_grad, {pa},
               [pa, inv_n](Tape& t, int self) {
                 if (!t.node(pa).needs_grad) return;
                 double g = t.node(self).grad.data[0] * inv_n;
                 Tensor& slot = t.grad_slot(pa);
                 for (double& v : slot.data) v += g;
               },
               "mean")};
}

Var Tape::min(Var a, Var b) {
  check_var(a, "min");
  check_var(b, "min");
  check_same_shape(a, b, "min");
  const Tensor& av = node(a.id).value;
  const Tensor& bv = node(b.id).value;
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = av.data[i] <= bv.data[i] ? av.data[i] : bv.data[i];
  bool ng = node(a.id).needs_grad || node(b.id).needs_grad;
  int pa = a.id, pb = b.id;
  return {push(std::move(out), ng, {pa, pb},
               [pa, pb](Tape& t, int self) {
                 const Tensor& g = t.node(self).grad;
                 const Tensor& av2 = t.node(pa).value;
                 const Tensor& bv2 = t.node(pb).value;
                 bool na = t.node(pa).needs_grad, nb = t.node(pb).needs_grad;
                 for (std::size_t i = 0; i < g.data.size(); ++i) {
                   if (av2.data[i] <= bv2.data[i]) {
                     if (na) t.grad_slot(pa).data[i] += g.data[i];
                   } else if (nb) {
                     t.grad_slot(pb).data[i] += g.data[i];
                   }
                 }
               },
               "min")};
}

Var Tape::max(Var a, Var b) {
  check_var(a, "max");
  check_var(b, "max");
  check_same_shape(a, b, "max");
  const Tensor& av = node(a.id).value;
  const Tensor& bv = node(b.id).value;
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = av.data[i] >= bv.data[i] ? av.data[i] : bv.data[i];
  bool ng = node(a.id).needs_grad || node(b.id).needs_grad;
  int pa = a.id, pb = b.id;
  return {push(std::move(out), ng, {pa, pb},
               [pa, pb](Tape& t, int self) {
                 const Tensor& g = t.node(self).grad;
                 const Tensor& av2 = t.node(pa).value;
                 const Tensor& bv2 = t.node(pb).value;
                 bool na = t.node(pa).needs_grad, nb = t.node(pb).needs_grad;
                 for (std::size_t i = 0; i < g.data.size(); ++i) {
                   if (av2.data[i] >= bv2.data[i]) {
                     if (na) t.grad_slot(pa).data[i] += g.data[i];
                   } else if (nb) {
                     t.grad_slot(pb).data[i] += g.data[i];
                   }
                 }
               },
               "max")};
}

Var Tape::clip(Var x, const Tensor& lo, const Tensor& hi) {
  check_var(x, "clip");
  const Tensor& xv = node(x.id).value;
  if (!lo.same_shape(xv) || !hi.same_shape(xv))
    throw std::invalid_argument("clip: bound shape mismatch");
  for (std::size_t i = 0; i < xv.data.size(); ++i)
    if (lo.data[i] > hi.data[i])
      throw std::invalid_argument("clip: lower bound exceeds upper bound");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (out.data[i] < lo.data[i]) out.data[i] = lo.data[i];
    if (out.data[i] > hi.data[i]) out.data[i] = hi.data[i];
  }
  int px = x.id;
  Tensor lo_c = lo, hi_c = hi;
  return {push(std::move(out), node(x.id).needs_grad, {px},
               [px, lo_c, hi_c](Tape& t, int self) {
                 if (!t.node(px).needs_grad) return;
                 const Tensor& g = t.node(self).grad;
                 const Tensor& xv2 = t.node(px).value;
                 Tensor& slot = t.grad_slot(px);
                 for (std::size_t i = 0; i < g.data.size(); ++i) {
                   if (xv2.data[i] >= lo_c.data[i] && xv2.data[i] <= hi_c.data[i])
                     slot.data[i] += g.data[i];
                 }
               },
               "clip")};
}

Var Tape::log_softmax(Var logits) {
  check_var(logits, "log_softmax");
  const Tensor& lv = node(logits.id).value;
  if (lv.rank() != 2) throw std::invalid_argument("log_softmax: matrix expected");
  Tensor out;
  kernels::log_softmax(lv, out);
  int pl = logits.id;
  return {push(std::move(out), node(logits.id).needs_grad, {pl},
               [pl](Tape& t, int self) {
                 if (!t.node(pl).needs_grad) return;
                 const Tensor& g = t.node(self).grad;
                 const Tensor& y = t.node(self).value;
                 Tensor& slot = t.grad_slot(pl);
                 int batch = y.rows(), n = y.cols();
                 for (int r = 0; r < batch; ++r) {
                   double gsum = 0.0;
                   for (int c = 0; c < n; ++c) gsum += g.at(r, c);
                   for (int c = 0; c < n; ++c)
                     slot.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gsum;
                 }
               },
               "log_softmax")};
}

Var Tape::gather_rows(Var values, const std::vector<int>& idx) {
  check_var(values, "gather_rows");
  const Tensor& vv = node(values.id).value;
  if (vv.rank() != 2) throw std::invalid_argument("gather_rows: matrix expected");
  int batch = vv.rows(), n = vv.cols();
  if (static_cast<int>(idx.size()) != batch)
    throw std::invalid_argument("gather_rows: index count mismatch");
  Tensor out = Tensor::zeros({batch});
  for (int r = 0; r < batch; ++r) {
    if (idx[r] < 0 || idx[r] >= n)
      throw std::invalid_argument("gather_rows: index out of range");
    out.data[r] = vv.at(r, idx[r]);
  }
  int pv = values.id;
  std::vector<int> idx_c = idx;
  return {push(std::move(out), node(values.id).needs_grad, {pv},
               [pv, idx_c](Tape& t, int self) {
                 if (!t.node(pv).needs_grad) return;
                 const Tensor& g = t.node(self).grad;
                 Tensor& slot = t.grad_slot(pv);
                 for (std::size_t r = 0; r < idx_c.size(); ++r)
                   slot.at(static_cast<int>(r), idx_c[r]) += g.data[r];
               },
               "gather_rows")};
}

Var Tape::categorical_log_prob(Var logits, const std::vector<int>& actions) {
  return gather_rows(log_softmax(logits), actions);
}

Var Tape::gaussian_log_prob(Var mean, Var log_std, const Tensor& actions) {
  check_var(mean, "gaussian_log_prob");
  check_var(log_std, "gaussian_log_prob");
  const Tensor& mv = node(mean.id).value;
  const Tensor& lsv = node(log_std.id).value;
  Tensor out;
  kernels::gaussian_log_prob(mv, lsv, actions, out);
  bool ng = node(mean.id).needs_grad || node(log_std.id).needs_grad;
  int pm = mean.id, pl = log_std.id;
  Tensor actions_c = actions;
  return {push(std::move(out), ng, {pm, pl},
               [pm, pl, actions_c](Tape& t, int self) {
                 const Tensor& g = t.node(self).grad;  // [B]
                 const Tensor& mv2 = t.node(pm).value;
                 const Tensor& lsv2 = t.node(pl).value;
                 int batch = mv2.rows(), dim = mv2.cols();
                 bool nm = t.node(pm).needs_grad, nl = t.node(pl).needs_grad;
                 for (int r = 0; r < batch; ++r) {
                   double gr = g.data[r];
                   for (int d = 0; d < dim; ++d) {
                     double inv_std = std::exp(-lsv2.data[d]);
                     double z = (actions_c.at(r, d) - mv2.at(r, d)) * inv_std;
                     if (nm) t.grad_slot(pm).at(r, d) += gr * z * inv_std;
                     if (nl) t.grad_slot(pl).data[d] += gr * (z * z - 1.0);
                   }
                 }
               },
               "gaussian_log_prob")};
}

void Tape::backward(Var root) {
  check_var(root, "backward");
  backward(root, Tensor::full(node(root.id).value.shape, 1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  check_var(root, "backward");
  if (consumed_) throw std::runtime_error("tape consumed twice");
  consumed_ = true;
  if (!seed.same_shape(node(root.id).value))
    throw std::invalid_argument("backward: seed shape mismatch");
  accumulate(root.id, seed);
  for (int i = root.id; i >= 0; --i) {
    Node& n = node(i);
    if (!n.needs_grad || !n.grad_alloc || !n.backward_fn) continue;
    check_finite(n.grad, "backward gradient");
    n.backward_fn(*this, i);
  }
}

const Tensor& Tape::value(Var v) const {
  check_var(v, "value");
  return node(v.id).value;
}

const Tensor& Tape::grad(Var v) const {
  check_var(v, "grad");
  const Node& n = node(v.id);
  if (!n.grad_alloc) {
    static thread_local Tensor empty;
    empty = Tensor::zeros(n.value.shape);
    return empty;
  }
  return n.grad;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros(p->shape));
      state.v.push_back(Tensor::zeros(p->shape));
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state does not match parameters");
  state.step += 1;
  double t = static_cast<double>(state.step);
  double bc1 = 1.0 - std::pow(state.beta1, t);
  double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (!p.same_shape(g))
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    check_finite(g, "adam_step gradient");
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      p.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace toppo::ad
