#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Var is a handle to a node holding a value, an accumulated gradient and
// (for non-leaves) the record of the operation that produced it. Every
// backward rule is itself written with these primitives, so gradients can be
// differentiated again (`grad(..., create_graph=true)`). This is what lets
// the unrolled solvers take Jacobian-transpose steps of a nonlinear forward
// map inside a network that is itself trained by backpropagation.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "grip/linalg.hpp"
#include "grip/types.hpp"

namespace grip {

class Graph;

namespace ad {

struct Node;

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  bool is_leaf() const;
  // Gradient accumulated by backward(); empty until the first accumulation.
  const Mat& grad() const;
  void zero_grad();
  // Scalar value of a 1x1 Var.
  double item() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<std::vector<Var>(const Var& upstream)>;

struct Node {
  Mat value;
  Mat grad;
  std::vector<Var> inputs;
  BackwardFn backward;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
};

// Leaves.
Var leaf(Mat value, bool requires_grad = false);
inline Var constant(Mat value) { return leaf(std::move(value), false); }
Var param(Mat value);  // leaf with requires_grad

// Disables graph recording in its scope (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
// Re-enables recording inside a NoGradGuard scope.
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// Accumulates d(output)/d(leaf) into every reachable leaf that requires a
// gradient, then releases the recorded operations. Traversing a released
// node again throws grip::Error. `output` must be 1x1 unless `seed` is given.
void backward(const Var& output, const Mat* seed = nullptr);

// Functional vector-Jacobian product: gradients of `output` (seeded with
// `seed`, or 1 for a scalar) with respect to `inputs`. Unreached inputs get a
// zero Var of their shape. With create_graph the result is differentiable.
std::vector<Var> grad(const Var& output, std::span<const Var> inputs, const Var* seed = nullptr,
                      bool create_graph = false);

// ---- elementwise and linear algebra ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var affine(const Var& a, double s, double shift);  // s*a + shift
Var neg(const Var& a);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// ---- broadcasting and reductions ----
Var add_bias(const Var& x, const Var& bias);  // x (n x c) + bias (1 x c) per row
Var sum_rows(const Var& x);                   // 1 x c
Var broadcast_rows(const Var& v, Index rows);  // v (1 x c) -> rows x c
Var sum_cols(const Var& x);                   // n x 1
Var broadcast_cols(const Var& v, Index cols);  // v (n x 1) -> n x cols
Var sum_all(const Var& x);                    // 1 x 1
Var expand(const Var& s, Index rows, Index cols);  // 1x1 -> rows x cols
Var mean_all(const Var& x);
Var mul_col(const Var& x, const Var& v);  // x (n x c) scaled per row by v (n x 1)
Var scale_by(const Var& x, const Var& s);  // x times 1x1 scalar Var

// ---- nonlinearities ----
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var clamp_min(const Var& x, double lo);
Var row_softmax(const Var& x);
Var log_softmax(const Var& x);

// ---- structural ----
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& x, Index offset, Index width);
Var pad_cols(const Var& x, Index offset, Index total);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, Index offset, Index count);
Var pad_rows(const Var& x, Index offset, Index total);
Var gather_rows(const Var& x, std::span<const Index> idx);
// out (n x c), out[idx[k]] += x[k]; the adjoint of gather_rows.
Var scatter_add_rows(const Var& x, std::span<const Index> idx, Index n);

// ---- graph and operator applications ----
// Â X with Â = D̂^{-1/2}(A + I)D̂^{-1/2}. `g` must outlive the graph of Vars.
Var graph_aggregate(const Graph& g, const Var& x);
// op(X); backward applies op's adjoint.
Var linear_apply(std::shared_ptr<const LinearOperator> op, const Var& x);

// Mean over rows of -sum_j target_ij log softmax(logits)_ij.
Var cross_entropy_logits(const Var& logits, const Var& target);
// Mean over rows of -sum_j target_ij log max(probs_ij, floor).
Var cross_entropy_probs(const Var& probs, const Var& target, double floor = 1e-12);
Var mse(const Var& a, const Var& b);

// Segment helpers: `seg[r]` is the segment of row r; results have
// `count` rows.
Var segment_sum(const Var& x, std::span<const Index> seg, Index count);  // sums of all entries per segment, count x 1
Var segment_broadcast(const Var& s, std::span<const Index> seg, Index cols);  // count x 1 -> rows x cols

}  // namespace ad
}  // namespace grip
