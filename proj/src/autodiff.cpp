#include "grip/autodiff.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include "grip/error.hpp"
#include "grip/graph.hpp"

namespace grip::ad {

namespace {

thread_local bool g_grad_enabled = true;

class GradModeScope {
 public:
  explicit GradModeScope(bool enabled) : prev_(g_grad_enabled) { g_grad_enabled = enabled; }
  ~GradModeScope() { g_grad_enabled = prev_; }

 private:
  bool prev_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string shape_str(const Var& v) { return std::to_string(v.rows()) + "x" + std::to_string(v.cols()); }

void same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Records a node. Inputs and the backward rule are only kept when recording
// is on and some input needs a gradient.
Var make(Mat value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled)
    for (const Var& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

Var zeros_like(const Var& v) { return constant(Mat::Zero(v.rows(), v.cols())); }

Var ones_1x1() { return constant(Mat::Constant(1, 1, 1.0)); }

// Reverse topological order (output first) of nodes that require grad.
// Nodes in `stop` are visited but not expanded.
std::vector<Node*> topo_order(Node* root, const Node* stop = nullptr) {
  std::vector<Node*> order;
  std::unordered_map<Node*, int> state;
  std::vector<std::pair<Node*, size_t>> stack;
  if (!root->requires_grad) return order;
  stack.push_back({root, 0});
  state[root] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->consumed) throw Error("autodiff: backward through an already consumed graph (op '" + std::string(node->op) + "')");
    if (next < node->inputs.size() && node != stop) {
      Node* child = node->inputs[next++].node();
      if (child->requires_grad && state[child] == 0) {
        state[child] = 1;
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return {order.rbegin(), order.rend()};
}

void accumulate(std::unordered_map<Node*, Var>& grads, Node* node, const Var& g) {
  auto it = grads.find(node);
  if (it == grads.end())
    grads.emplace(node, g);
  else
    it->second = add(it->second, g);
}

std::unordered_map<Node*, Var> run_backward(const Var& output, const Var& seed, bool create_graph,
                                            const Node* stop = nullptr) {
  std::unordered_map<Node*, Var> grads;
  std::vector<Node*> order = topo_order(output.node(), stop);
  grads.emplace(output.node(), seed);
  GradModeScope mode(create_graph);
  for (Node* node : order) {
    auto it = grads.find(node);
    if (it == grads.end() || !node->backward || node == stop) continue;
    const Var upstream = it->second;
    std::vector<Var> in_grads = node->backward(upstream);
    for (size_t k = 0; k < node->inputs.size() && k < in_grads.size(); ++k) {
      if (!in_grads[k].defined() || !node->inputs[k].requires_grad()) continue;
      accumulate(grads, node->inputs[k].node(), in_grads[k]);
    }
  }
  return grads;
}

}  // namespace

const Mat& Var::value() const {
  if (!node_) throw Error("autodiff: use of an undefined Var");
  return node_->value;
}
bool Var::requires_grad() const { return node_ && node_->requires_grad; }
bool Var::is_leaf() const { return node_ && !node_->backward && node_->inputs.empty(); }
const Mat& Var::grad() const { return node_->grad; }
void Var::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}
double Var::item() const {
  require(rows() == 1 && cols() == 1, "item: Var is not 1x1");
  return value()(0, 0);
}

Var leaf(Mat value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Var param(Mat value) { return leaf(std::move(value), true); }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
EnableGradGuard::EnableGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = true; }
EnableGradGuard::~EnableGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& output, const Mat* seed) {
  Var s;
  if (seed) {
    require(seed->rows() == output.rows() && seed->cols() == output.cols(), "backward: seed shape");
    s = constant(*seed);
  } else {
    require(output.rows() == 1 && output.cols() == 1, "backward: output must be 1x1 without a seed");
    s = ones_1x1();
  }
  if (output.node()->consumed) throw Error("autodiff: backward through an already consumed graph");
  if (!output.requires_grad()) return;
  std::vector<Node*> order = topo_order(output.node());
  auto grads = run_backward(output, s, false);
  for (Node* node : order) {
    if (node->backward) continue;
    auto it = grads.find(node);
    if (it == grads.end()) continue;
    if (node->grad.size() == 0)
      node->grad = it->second.value();
    else
      node->grad += it->second.value();
  }
  // Releasing a closure can drop the last reference to a node still in
  // `order`, so hold them all until the loop is done.
  std::vector<std::shared_ptr<Node>> keep;
  for (Node* node : order)
    for (const Var& in : node->inputs) keep.push_back(in.ptr());
  for (Node* node : order) {
    if (!node->backward) continue;
    node->consumed = true;
    node->backward = nullptr;
    node->inputs.clear();
  }
}

std::vector<Var> grad(const Var& output, std::span<const Var> inputs, const Var* seed, bool create_graph) {
  Var s = seed ? *seed : ones_1x1();
  if (!seed) require(output.rows() == 1 && output.cols() == 1, "grad: output must be 1x1 without a seed");
  if (seed) require(seed->rows() == output.rows() && seed->cols() == output.cols(), "grad: seed shape");
  std::vector<Var> out;
  out.reserve(inputs.size());
  if (!output.requires_grad()) {
    for (const Var& in : inputs) out.push_back(zeros_like(in));
    return out;
  }
  // With a single input nothing below it is needed.
  const Node* stop = inputs.size() == 1 ? inputs[0].node() : nullptr;
  auto grads = run_backward(output, s, create_graph, stop);
  for (const Var& in : inputs) {
    auto it = grads.find(in.node());
    out.push_back(it == grads.end() ? zeros_like(in) : it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  return make(a.value() + b.value(), {a, b}, [](const Var& g) { return std::vector<Var>{g, g}; }, "add");
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a, b}, [](const Var& g) { return std::vector<Var>{g, neg(g)}; }, "sub");
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a, b},
              [a, b](const Var& g) {
                return std::vector<Var>{a.requires_grad() ? mul(g, b) : Var(), b.requires_grad() ? mul(g, a) : Var()};
              },
              "mul");
}

Var div(const Var& a, const Var& b) {
  same_shape(a, b, "div");
  return make(a.value().cwiseQuotient(b.value()), {a, b},
              [a, b](const Var& g) {
                Var ga = a.requires_grad() ? div(g, b) : Var();
                Var gb = b.requires_grad() ? neg(div(mul(g, a), mul(b, b))) : Var();
                return std::vector<Var>{ga, gb};
              },
              "div");
}

Var scale(const Var& a, double s) {
  return make(a.value() * s, {a}, [s](const Var& g) { return std::vector<Var>{scale(g, s)}; }, "scale");
}

Var affine(const Var& a, double s, double shift) {
  Mat v = (a.value() * s).array() + shift;
  return make(std::move(v), {a}, [s](const Var& g) { return std::vector<Var>{scale(g, s)}; }, "affine");
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions " + shape_str(a) + " * " + shape_str(b));
  Mat v = a.value() * b.value();
  return make(std::move(v), {a, b},
              [a, b](const Var& g) {
                return std::vector<Var>{a.requires_grad() ? matmul(g, transpose(b)) : Var(),
                                        b.requires_grad() ? matmul(transpose(a), g) : Var()};
              },
              "matmul");
}

Var transpose(const Var& a) {
  Mat v = a.value().transpose();
  return make(std::move(v), {a}, [](const Var& g) { return std::vector<Var>{transpose(g)}; }, "transpose");
}

Var add_bias(const Var& x, const Var& bias) {
  require(bias.rows() == 1 && bias.cols() == x.cols(), "add_bias: bias must be 1x" + std::to_string(x.cols()));
  Mat v = x.value().rowwise() + bias.value().row(0);
  return make(std::move(v), {x, bias},
              [](const Var& g) { return std::vector<Var>{g, sum_rows(g)}; }, "add_bias");
}

Var sum_rows(const Var& x) {
  Mat v = x.value().colwise().sum();
  const Index n = x.rows();
  return make(std::move(v), {x}, [n](const Var& g) { return std::vector<Var>{broadcast_rows(g, n)}; }, "sum_rows");
}

Var broadcast_rows(const Var& v, Index rows) {
  require(v.rows() == 1, "broadcast_rows: expected a row vector");
  Mat out = v.value().replicate(rows, 1);
  return make(std::move(out), {v}, [](const Var& g) { return std::vector<Var>{sum_rows(g)}; }, "broadcast_rows");
}

Var sum_cols(const Var& x) {
  Mat v = x.value().rowwise().sum();
  const Index c = x.cols();
  return make(std::move(v), {x}, [c](const Var& g) { return std::vector<Var>{broadcast_cols(g, c)}; }, "sum_cols");
}

Var broadcast_cols(const Var& v, Index cols) {
  require(v.cols() == 1, "broadcast_cols: expected a column vector");
  Mat out = v.value().replicate(1, cols);
  return make(std::move(out), {v}, [](const Var& g) { return std::vector<Var>{sum_cols(g)}; }, "broadcast_cols");
}

Var sum_all(const Var& x) {
  Mat v = Mat::Constant(1, 1, x.value().sum());
  const Index r = x.rows(), c = x.cols();
  return make(std::move(v), {x}, [r, c](const Var& g) { return std::vector<Var>{expand(g, r, c)}; }, "sum_all");
}

Var expand(const Var& s, Index rows, Index cols) {
  require(s.rows() == 1 && s.cols() == 1, "expand: expected 1x1");
  Mat v = Mat::Constant(rows, cols, s.value()(0, 0));
  return make(std::move(v), {s}, [](const Var& g) { return std::vector<Var>{sum_all(g)}; }, "expand");
}

Var mean_all(const Var& x) {
  require(x.value().size() > 0, "mean_all: empty input");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var mul_col(const Var& x, const Var& v) {
  require(v.cols() == 1 && v.rows() == x.rows(), "mul_col: expected " + std::to_string(x.rows()) + "x1 scale");
  return mul(x, broadcast_cols(v, x.cols()));
}

Var scale_by(const Var& x, const Var& s) { return mul(x, expand(s, x.rows(), x.cols())); }

// ---------------------------------------------------------------------------

Var relu(const Var& x) {
  Mat mask = (x.value().array() > 0.0).cast<double>();
  Mat v = x.value().cwiseMax(0.0);
  return make(std::move(v), {x},
              [mask = std::move(mask)](const Var& g) { return std::vector<Var>{mul(g, constant(mask))}; }, "relu");
}

Var sigmoid(const Var& x) {
  Mat v = x.value().unaryExpr([](double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  });
  return make(std::move(v), {x},
              [x](const Var& g) {
                Var s = sigmoid(x);
                return std::vector<Var>{mul(g, mul(s, affine(s, -1.0, 1.0)))};
              },
              "sigmoid");
}

Var softplus(const Var& x) {
  Mat v = x.value().unaryExpr([](double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); });
  return make(std::move(v), {x}, [x](const Var& g) { return std::vector<Var>{mul(g, sigmoid(x))}; }, "softplus");
}

Var exp(const Var& x) {
  Mat v = x.value().array().exp();
  return make(std::move(v), {x}, [x](const Var& g) { return std::vector<Var>{mul(g, exp(x))}; }, "exp");
}

Var log(const Var& x) {
  Mat v = x.value().array().log();
  return make(std::move(v), {x}, [x](const Var& g) { return std::vector<Var>{div(g, x)}; }, "log");
}

Var clamp_min(const Var& x, double lo) {
  Mat mask = (x.value().array() >= lo).cast<double>();
  Mat v = x.value().cwiseMax(lo);
  return make(std::move(v), {x},
              [mask = std::move(mask)](const Var& g) { return std::vector<Var>{mul(g, constant(mask))}; },
              "clamp_min");
}

namespace {

Mat softmax_rows(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

void check_finite(const Mat& m, const char* op) {
  if (!m.allFinite()) throw NumericalError(std::string(op) + ": non-finite input");
}

}  // namespace

Var row_softmax(const Var& x) {
  require(x.cols() > 0, "row_softmax: no columns");
  return make(softmax_rows(x.value()), {x},
              [x](const Var& g) {
                Var s = row_softmax(x);
                Var inner = broadcast_cols(sum_cols(mul(s, g)), x.cols());
                return std::vector<Var>{mul(s, sub(g, inner))};
              },
              "row_softmax");
}

Var log_softmax(const Var& x) {
  require(x.cols() > 0, "log_softmax: no columns");
  Mat v(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.value().row(i).maxCoeff();
    const double lse = m + std::log((x.value().row(i).array() - m).exp().sum());
    v.row(i) = x.value().row(i).array() - lse;
  }
  return make(std::move(v), {x},
              [x](const Var& g) {
                Var s = row_softmax(x);
                return std::vector<Var>{sub(g, mul(s, broadcast_cols(sum_cols(g), x.cols())))};
              },
              "log_softmax");
}

// ---------------------------------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index n = parts[0].rows();
  Index total = 0;
  for (const Var& p : parts) {
    require(p.rows() == n, "concat_cols: row counts differ");
    total += p.cols();
  }
  Mat v(n, total);
  Index off = 0;
  std::vector<std::pair<Index, Index>> spans;
  for (const Var& p : parts) {
    if (p.cols() > 0) v.middleCols(off, p.cols()) = p.value();
    spans.push_back({off, p.cols()});
    off += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(std::move(v), inputs,
              [spans](const Var& g) {
                std::vector<Var> out;
                for (auto [o, w] : spans) out.push_back(slice_cols(g, o, w));
                return out;
              },
              "concat_cols");
}

Var slice_cols(const Var& x, Index offset, Index width) {
  require(offset >= 0 && width >= 0 && offset + width <= x.cols(), "slice_cols: range out of bounds");
  Mat v = x.value().middleCols(offset, width);
  const Index total = x.cols();
  return make(std::move(v), {x},
              [offset, total](const Var& g) { return std::vector<Var>{pad_cols(g, offset, total)}; }, "slice_cols");
}

Var pad_cols(const Var& x, Index offset, Index total) {
  require(offset >= 0 && offset + x.cols() <= total, "pad_cols: range out of bounds");
  Mat v = Mat::Zero(x.rows(), total);
  if (x.cols() > 0) v.middleCols(offset, x.cols()) = x.value();
  const Index w = x.cols();
  return make(std::move(v), {x}, [offset, w](const Var& g) { return std::vector<Var>{slice_cols(g, offset, w)}; },
              "pad_cols");
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const Index c = parts[0].cols();
  Index total = 0;
  for (const Var& p : parts) {
    require(p.cols() == c, "concat_rows: column counts differ");
    total += p.rows();
  }
  Mat v(total, c);
  Index off = 0;
  std::vector<std::pair<Index, Index>> spans;
  for (const Var& p : parts) {
    if (p.rows() > 0) v.middleRows(off, p.rows()) = p.value();
    spans.push_back({off, p.rows()});
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(std::move(v), inputs,
              [spans](const Var& g) {
                std::vector<Var> out;
                for (auto [o, r] : spans) out.push_back(slice_rows(g, o, r));
                return out;
              },
              "concat_rows");
}

Var slice_rows(const Var& x, Index offset, Index count) {
  require(offset >= 0 && count >= 0 && offset + count <= x.rows(), "slice_rows: range out of bounds");
  Mat v = x.value().middleRows(offset, count);
  const Index total = x.rows();
  return make(std::move(v), {x},
              [offset, total](const Var& g) { return std::vector<Var>{pad_rows(g, offset, total)}; }, "slice_rows");
}

Var pad_rows(const Var& x, Index offset, Index total) {
  require(offset >= 0 && offset + x.rows() <= total, "pad_rows: range out of bounds");
  Mat v = Mat::Zero(total, x.cols());
  if (x.rows() > 0) v.middleRows(offset, x.rows()) = x.value();
  const Index r = x.rows();
  return make(std::move(v), {x}, [offset, r](const Var& g) { return std::vector<Var>{slice_rows(g, offset, r)}; },
              "pad_rows");
}

Var gather_rows(const Var& x, std::span<const Index> idx) {
  const Index n = x.rows();
  Mat v(static_cast<Index>(idx.size()), x.cols());
  for (size_t k = 0; k < idx.size(); ++k) {
    require(idx[k] >= 0 && idx[k] < n, "gather_rows: index out of range");
    v.row(static_cast<Index>(k)) = x.value().row(idx[k]);
  }
  auto keep = std::make_shared<const IndexList>(idx.begin(), idx.end());
  return make(std::move(v), {x},
              [keep, n](const Var& g) { return std::vector<Var>{scatter_add_rows(g, *keep, n)}; }, "gather_rows");
}

Var scatter_add_rows(const Var& x, std::span<const Index> idx, Index n) {
  require(static_cast<Index>(idx.size()) == x.rows(), "scatter_add_rows: one index per row required");
  Mat v = Mat::Zero(n, x.cols());
  for (size_t k = 0; k < idx.size(); ++k) {
    require(idx[k] >= 0 && idx[k] < n, "scatter_add_rows: index out of range");
    v.row(idx[k]) += x.value().row(static_cast<Index>(k));
  }
  auto keep = std::make_shared<const IndexList>(idx.begin(), idx.end());
  return make(std::move(v), {x}, [keep](const Var& g) { return std::vector<Var>{gather_rows(g, *keep)}; },
              "scatter_add_rows");
}

Var graph_aggregate(const Graph& g, const Var& x) {
  const Graph* gp = &g;
  return make(apply_gcn_adjacency(g, x.value()), {x},
              [gp](const Var& up) { return std::vector<Var>{graph_aggregate(*gp, up)}; }, "graph_aggregate");
}

Var linear_apply(std::shared_ptr<const LinearOperator> op, const Var& x) {
  require(x.rows() == op->in_rows, "linear_apply: expected " + std::to_string(op->in_rows) + " rows, got " +
                                        std::to_string(x.rows()));
  Mat v = op->forward(x.value());
  return make(std::move(v), {x},
              [op](const Var& g) {
                auto adj = std::make_shared<const LinearOperator>(op->transposed());
                return std::vector<Var>{linear_apply(adj, g)};
              },
              "linear_apply");
}

Var cross_entropy_logits(const Var& logits, const Var& target) {
  same_shape(logits, target, "cross_entropy_logits");
  check_finite(logits.value(), "cross_entropy_logits");
  require(logits.rows() > 0, "cross_entropy_logits: no rows");
  return scale(sum_all(mul(target, log_softmax(logits))), -1.0 / static_cast<double>(logits.rows()));
}

Var cross_entropy_probs(const Var& probs, const Var& target, double floor) {
  same_shape(probs, target, "cross_entropy_probs");
  check_finite(probs.value(), "cross_entropy_probs");
  require(probs.rows() > 0, "cross_entropy_probs: no rows");
  return scale(sum_all(mul(target, log(clamp_min(probs, floor)))), -1.0 / static_cast<double>(probs.rows()));
}

Var mse(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return mean_all(mul(d, d));
}

Var segment_sum(const Var& x, std::span<const Index> seg, Index count) {
  return scatter_add_rows(sum_cols(x), seg, count);
}

Var segment_broadcast(const Var& s, std::span<const Index> seg, Index cols) {
  return broadcast_cols(gather_rows(s, seg), cols);
}

}  // namespace grip::ad
