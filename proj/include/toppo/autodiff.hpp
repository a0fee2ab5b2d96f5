#pragma once

#include <functional>
#include <vector>

#include "toppo/tensor.hpp"

namespace toppo::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over tensor-valued nodes. Operations append nodes in
// topological order; backward() walks the tape once in reverse and
// accumulates gradients into every node that depends on a leaf.
//
// Every operation checks its output for NaN/Inf and throws on violation;
// a tape can be differentiated once ("tape consumed twice" otherwise).
class Tape {
 public:
  Var leaf(Tensor value);        // differentiable input
  Var constant(Tensor value);    // data; gradients are not tracked through it

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var add_scalar(Var a, double c);
  Var mul_scalar(Var a, double c);

  // x [B x I], w [O x I], b [O] -> [B x O]
  Var affine(Var x, Var w, Var b);

  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);

  Var sum(Var a);   // -> [1]
  Var mean(Var a);  // -> [1]

  Var min(Var a, Var b);  // elementwise; ties route the gradient to a
  Var max(Var a, Var b);  // elementwise; ties route the gradient to a

  // Elementwise clamp into [lo, hi]; gradient passes on the closed interval.
  Var clip(Var x, const Tensor& lo, const Tensor& hi);

  // Row-wise log softmax of [B x A] logits.
  Var log_softmax(Var logits);

  // out[b] = values[b, idx[b]]
  Var gather_rows(Var values, const std::vector<int>& idx);

  // Composite: log_softmax + gather. The gradient-free policy path computes
  // the same quantity through the shared kernel, so both agree bitwise.
  Var categorical_log_prob(Var logits, const std::vector<int>& actions);

  // Diagonal Gaussian joint log density. mean [B x D], log_std [D],
  // actions [B x D] -> [B].
  Var gaussian_log_prob(Var mean, Var log_std, const Tensor& actions);

  void backward(Var root);                      // seed = ones(root shape)
  void backward(Var root, const Tensor& seed);  // seed shape must match root

  const Tensor& value(Var v) const;
  // Zero tensor if the node never received gradient. Valid after backward().
  const Tensor& grad(Var v) const;

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_alloc = false;
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward_fn;
  };

  int push(Tensor value, bool needs_grad, std::vector<int> parents,
           std::function<void(Tape&, int)> backward_fn, const char* op_name);
  Node& node(int id);
  const Node& node(int id) const;
  Tensor& grad_slot(int id);
  void accumulate(int id, const Tensor& g);
  void check_var(Var v, const char* op_name) const;
  void check_same_shape(Var a, Var b, const char* op_name) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;

  friend struct TapeBackdoor;
};

// One step of bias-corrected Adam shared by the policy and value optimizers.
struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state);

}  // namespace toppo::ad
