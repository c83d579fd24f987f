#pragma once

#include <functional>
#include <vector>

#include "advdrop/tensor.hpp"

namespace advdrop {

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,            // elementwise
  scale,          // by constant (aux)
  sigmoid,
  tanh_fn,
  relu,
  softmax,        // row-wise, max-subtracted
  log_fn,
  sum,            // all elements -> {1}
  mean,           // all elements -> {1}
  square,
  broadcast_row,  // {c} -> {aux, c}
};

const char* op_name(OpKind k);

struct TapeNode {
  OpKind kind = OpKind::leaf;
  std::vector<int> parents;
  Tensor value;
  Tensor grad;      // zero-initialized; filled by backward
  double aux = 0.0;
};

// Reverse-mode tape over eagerly evaluated dense ops. Insertion order is
// topological order. Not shareable during mutation; independent graphs on
// independent threads are fine.
class TapeGraph {
 public:
  int leaf(Tensor v);
  int apply(OpKind kind, const std::vector<int>& parents, double aux = 0.0);

  int matmul(int a, int b) { return apply(OpKind::matmul, {a, b}); }
  int add(int a, int b) { return apply(OpKind::add, {a, b}); }
  int sub(int a, int b) { return apply(OpKind::sub, {a, b}); }
  int mul(int a, int b) { return apply(OpKind::mul, {a, b}); }
  int scale(int a, double c) { return apply(OpKind::scale, {a}, c); }
  int sigmoid(int a) { return apply(OpKind::sigmoid, {a}); }
  int tanh(int a) { return apply(OpKind::tanh_fn, {a}); }
  int relu(int a) { return apply(OpKind::relu, {a}); }
  int softmax(int a) { return apply(OpKind::softmax, {a}); }
  int log(int a) { return apply(OpKind::log_fn, {a}); }
  int sum(int a) { return apply(OpKind::sum, {a}); }
  int mean(int a) { return apply(OpKind::mean, {a}); }
  int square(int a) { return apply(OpKind::square, {a}); }
  int broadcast_row(int a, int rows) {
    return apply(OpKind::broadcast_row, {a}, static_cast<double>(rows));
  }

  // Accumulates d(root)/d(node) into every node's grad. Root must be
  // scalar-shaped. Grads are NOT cleared first; call reset_grads between
  // passes that should not mix.
  void backward(int root);
  void reset_grads();

  int size() const { return static_cast<int>(nodes_.size()); }
  const Tensor& value(int id) const { return node(id).value; }
  const Tensor& grad(int id) const { return node(id).grad; }
  const TapeNode& node(int id) const;

 private:
  TapeNode& node(int id);
  std::vector<TapeNode> nodes_;
};

// Builds a scalar-rooted graph from a single leaf; returns the root id.
using ScalarGraphFn = std::function<int(TapeGraph&, int)>;

// Max over coordinates of |analytic - central difference| /
// max(1, |central difference|). The difference quotient uses forward values
// only, so it is an oracle independent of the backward pass it checks.
double finite_diff_check(const ScalarGraphFn& f, const Tensor& x, double h);

}  // namespace advdrop
