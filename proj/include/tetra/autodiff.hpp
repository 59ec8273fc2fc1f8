#pragma once

#include <functional>
#include <span>
#include <vector>

#include "tetra/matrix.hpp"

namespace tetra {

// Per-feature batch-normalization parameters and running statistics.
struct BatchNormState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState make(std::size_t features);

  bool operator==(const BatchNormState&) const = default;
};

struct Var {
  int id = -1;
};

// Reverse-mode tape over Matrix-valued nodes. Ops append nodes in topological
// order, so walking the tape backwards visits each node exactly once in
// reverse topological order. One tape per training step; not thread-safe.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix v);  // no gradient tracked
  Var param(Matrix v);     // leaf whose gradient is accumulated

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // y[i][j] = sum_k x[i][k] * w[j][k] + b[j];  w: [out x in], b: [1 x out]
  Var linear(Var x, Var w, Var b);

  // Train-mode batch normalization with biased batch variance. Writes the
  // batch statistics to *mean/*var (callers update running stats from them).
  Var batch_norm_train(Var x, Var gamma, Var beta, double epsilon,
                       std::vector<double>* mean_out = nullptr,
                       std::vector<double>* var_out = nullptr);

  // Eval-mode batch normalization using fixed statistics.
  Var batch_norm_eval(Var x, Var gamma, Var beta, const std::vector<double>& mean,
                      const std::vector<double>& var, double epsilon);

  // x >= 0 ? x : slope * x; the subgradient at 0 is 1
  Var leaky_relu(Var x, double slope);

  // every row scaled to unit Euclidean norm
  Var row_normalize(Var x);

  Var slice_rows(Var x, std::size_t begin, std::size_t count);

  // [n x d], [n x d] -> [n x 1], row i = squared distance of row pair i
  Var row_sq_dist(Var a, Var b);

  // elementwise sqrt; the subgradient at 0 is defined as 0
  Var sqrt_elem(Var x);

  // elementwise min; ties route the gradient to a
  Var min_elem(Var a, Var b);

  // max(x, 0) elementwise; the subgradient at 0 is 1
  Var hinge(Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_scalar(Var x, double c);
  Var scale(Var x, double c);
  Var sum_all(Var x);   // -> [1 x 1]
  Var mean_all(Var x);  // -> [1 x 1]

  // Accumulates gradients of the scalar at `root` into every node.
  void backward(Var root);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backprop;  // empty for leaves/constants
  };

  Var push(Matrix value, std::function<void()> backprop);
  Matrix& grad_ref(int id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

// Max relative error between the analytic gradient of `f` and a central
// finite-difference estimate. `f(params, grad_out)` returns the scalar value
// and, when grad_out != nullptr, fills the analytic gradient (same length and
// order as params).
double grad_check(
    const std::function<double(std::span<const double>, std::vector<double>*)>& f,
    std::span<const double> params, double step);

}  // namespace tetra
