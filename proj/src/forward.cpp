#include "grip/forward.hpp"

#include <cmath>

#include "grip/error.hpp"

namespace grip {

std::string ForwardSpec::name() const {
  struct Visitor {
    std::string operator()(const MaskSpec&) const { return "mask"; }
    std::string operator()(const DiffusionSpec&) const { return "diffusion"; }
    std::string operator()(const TransportSpec&) const { return "transport"; }
    std::string operator()(const EdgeDiffusionSpec&) const { return "edge_diffusion"; }
  };
  return std::visit(Visitor{}, op);
}

void validate_spec(const Graph& g, const ForwardSpec& spec) {
  const Index n = g.num_nodes();
  if (const auto* m = std::get_if<MaskSpec>(&spec.op)) {
    for (size_t k = 0; k < m->indices.size(); ++k) {
      if (m->indices[k] < 0 || m->indices[k] >= n) throw InvalidArgument("mask: index out of range");
      if (k > 0 && m->indices[k] <= m->indices[k - 1]) throw InvalidArgument("mask: indices must be strictly increasing");
    }
  } else if (const auto* d = std::get_if<DiffusionSpec>(&spec.op)) {
    if (d->steps < 0) throw InvalidArgument("diffusion: steps must be >= 0");
  } else if (const auto* t = std::get_if<TransportSpec>(&spec.op)) {
    if (t->length < 1) throw InvalidArgument("transport: path length must be >= 1");
    if (static_cast<Index>(t->nodes.size()) % t->length != 0)
      throw InvalidArgument("transport: node list is not a whole number of paths");
    const auto& rp = g.row_ptr();
    const auto& ci = g.col_idx();
    for (Index p = 0; p < t->num_paths(); ++p) {
      for (Index j = 0; j < t->length; ++j) {
        const Index v = t->at(p, j);
        if (v < 0 || v >= n) throw InvalidArgument("transport: path references invalid node");
        if (j == 0) continue;
        const Index u = t->at(p, j - 1);
        if (u == v && rp[u] == rp[u + 1]) continue;  // isolated node repeating itself
        if (!std::binary_search(ci.begin() + rp[u], ci.begin() + rp[u + 1], v))
          throw InvalidArgument("transport: consecutive path entries are not neighbours");
      }
    }
  } else {
    const auto& e = std::get<EdgeDiffusionSpec>(spec.op);
    if (e.history < 1) throw InvalidArgument("edge_diffusion: history must be >= 1");
    if (e.source.rows() != n) throw ShapeError("edge_diffusion: source must have n rows");
    if (!e.source.allFinite()) throw InvalidArgument("edge_diffusion: non-finite source");
  }
}

Index state_rows(const Graph& g, const ForwardSpec& spec) {
  return spec.linear() ? g.num_nodes() : g.num_edges();
}

Index data_rows(const Graph& g, const ForwardSpec& spec) {
  if (const auto* m = std::get_if<MaskSpec>(&spec.op)) return static_cast<Index>(m->indices.size());
  if (std::holds_alternative<DiffusionSpec>(spec.op)) return g.num_nodes();
  if (const auto* t = std::get_if<TransportSpec>(&spec.op)) return t->num_paths();
  return std::get<EdgeDiffusionSpec>(spec.op).history * g.num_nodes();
}

Mat mask_forward(const Mat& x, std::span<const Index> indices) {
  Mat out(static_cast<Index>(indices.size()), x.cols());
  for (size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= x.rows()) throw InvalidArgument("mask_forward: index out of range");
    out.row(static_cast<Index>(k)) = x.row(indices[k]);
  }
  return out;
}

Mat mask_adjoint(const Mat& d, std::span<const Index> indices, Index n) {
  if (d.rows() != static_cast<Index>(indices.size())) throw ShapeError("mask_adjoint: one row per index expected");
  Mat out = Mat::Zero(n, d.cols());
  for (size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= n) throw InvalidArgument("mask_adjoint: index out of range");
    out.row(indices[k]) += d.row(static_cast<Index>(k));
  }
  return out;
}

Mat diffusion_forward(const Graph& g, const Mat& x0, Index k) {
  if (k < 0) throw InvalidArgument("diffusion_forward: k must be >= 0");
  if (x0.rows() != g.num_nodes()) throw ShapeError("diffusion_forward: x0 must have n rows");
  Mat x = x0;
  for (Index s = 0; s < k; ++s) x = apply_transition(g, x);
  return x;
}

Mat diffusion_adjoint(const Graph& g, const Mat& d, Index k) {
  if (k < 0) throw InvalidArgument("diffusion_adjoint: k must be >= 0");
  if (d.rows() != g.num_nodes()) throw ShapeError("diffusion_adjoint: d must have n rows");
  Mat x = d;
  for (Index s = 0; s < k; ++s) x = apply_transition_transpose(g, x);
  return x;
}

Mat transport_forward(const Mat& x, const TransportSpec& paths) {
  const Index K = paths.num_paths();
  Mat out = Mat::Zero(K, x.cols());
  const double scale = paths.average ? 1.0 / static_cast<double>(paths.length) : 1.0;
  for (Index p = 0; p < K; ++p) {
    for (Index j = 0; j < paths.length; ++j) {
      const Index v = paths.at(p, j);
      if (v < 0 || v >= x.rows()) throw InvalidArgument("transport_forward: path references invalid node");
      out.row(p) += x.row(v);
    }
    out.row(p) *= scale;
  }
  return out;
}

Mat transport_adjoint(const Mat& d, const TransportSpec& paths, Index n) {
  const Index K = paths.num_paths();
  if (d.rows() != K) throw ShapeError("transport_adjoint: one row per path expected");
  Mat out = Mat::Zero(n, d.cols());
  const double scale = paths.average ? 1.0 / static_cast<double>(paths.length) : 1.0;
  for (Index p = 0; p < K; ++p) {
    for (Index j = 0; j < paths.length; ++j) {
      const Index v = paths.at(p, j);
      if (v < 0 || v >= n) throw InvalidArgument("transport_adjoint: path references invalid node");
      out.row(v) += scale * d.row(p);
    }
  }
  return out;
}

namespace {

void check_edge_state(const Graph& g, const Mat& x_edge) {
  if (x_edge.rows() != g.num_edges() || x_edge.cols() != 1)
    throw ShapeError("edge_diffusion_forward: x_E must be m x 1");
  if (!x_edge.allFinite()) throw InvalidArgument("edge_diffusion_forward: non-finite edge state");
}

}  // namespace

Mat edge_diffusion_forward(const Graph& g, const Mat& x_edge, const Mat& source, Index history) {
  check_edge_state(g, x_edge);
  if (history < 1) throw InvalidArgument("edge_diffusion_forward: history must be >= 1");
  if (source.rows() != g.num_nodes()) throw ShapeError("edge_diffusion_forward: source must have n rows");
  const Index n = g.num_nodes();
  const auto& rp = g.row_ptr();
  const auto& ci = g.col_idx();
  const auto& eid = g.directed_edge_id();
  Vec rowsum = Vec::Zero(n);
  std::vector<double> w(ci.size());
  for (Index i = 0; i < n; ++i)
    for (Index k = rp[i]; k < rp[i + 1]; ++k) {
      w[k] = std::max(x_edge(eid[k], 0), kEdgeWeightFloor);
      rowsum[i] += w[k];
    }
  Mat out(history * n, source.cols());
  Mat x = source;
  for (Index h = 0; h < history; ++h) {
    Mat y = Mat::Zero(n, x.cols());
    for (Index i = 0; i < n; ++i) {
      if (rp[i] == rp[i + 1]) {
        y.row(i) = x.row(i);
        continue;
      }
      for (Index k = rp[i]; k < rp[i + 1]; ++k) y.row(i) += w[k] * x.row(ci[k]);
      y.row(i) *= 1.0 / rowsum[i];
    }
    out.middleRows(h * n, n) = y;
    x = std::move(y);
  }
  return out;
}

ad::Var edge_diffusion_forward(const Graph& g, const ad::Var& x_edge, const Mat& source, Index history) {
  check_edge_state(g, x_edge.value());
  if (history < 1) throw InvalidArgument("edge_diffusion_forward: history must be >= 1");
  if (source.rows() != g.num_nodes()) throw ShapeError("edge_diffusion_forward: source must have n rows");
  const Index n = g.num_nodes();
  Mat isolated = Mat::Zero(n, 1);
  for (Index i = 0; i < n; ++i)
    if (g.row_ptr()[i] == g.row_ptr()[i + 1]) isolated(i, 0) = 1.0;
  ad::Var iso = ad::constant(isolated);
  ad::Var w = ad::clamp_min(ad::gather_rows(x_edge, g.directed_edge_id()), kEdgeWeightFloor);
  ad::Var rowsum = ad::scatter_add_rows(w, g.directed_src(), n);
  ad::Var inv = ad::div(ad::constant(Mat::Ones(n, 1)), ad::add(rowsum, iso));
  ad::Var x = ad::constant(source);
  std::vector<ad::Var> steps;
  for (Index h = 0; h < history; ++h) {
    ad::Var msg = ad::mul_col(ad::gather_rows(x, g.col_idx()), w);
    ad::Var agg = ad::scatter_add_rows(msg, g.directed_src(), n);
    x = ad::add(ad::mul_col(agg, inv), ad::mul_col(x, iso));
    steps.push_back(x);
  }
  return ad::concat_rows(steps);
}

std::shared_ptr<const LinearOperator> make_operator(std::shared_ptr<const Graph> g, const ForwardSpec& spec) {
  const Index n = g->num_nodes();
  LinearOperator op;
  op.in_rows = n;
  op.out_rows = data_rows(*g, spec);
  if (const auto* m = std::get_if<MaskSpec>(&spec.op)) {
    auto idx = std::make_shared<const IndexList>(m->indices);
    op.forward = [idx](const Mat& x) { return mask_forward(x, *idx); };
    op.adjoint = [idx, n](const Mat& d) { return mask_adjoint(d, *idx, n); };
  } else if (const auto* d = std::get_if<DiffusionSpec>(&spec.op)) {
    const Index k = d->steps;
    op.forward = [g, k](const Mat& x) { return diffusion_forward(*g, x, k); };
    op.adjoint = [g, k](const Mat& y) { return diffusion_adjoint(*g, y, k); };
  } else if (const auto* t = std::get_if<TransportSpec>(&spec.op)) {
    auto paths = std::make_shared<const TransportSpec>(*t);
    op.forward = [paths](const Mat& x) { return transport_forward(x, *paths); };
    op.adjoint = [paths, n](const Mat& y) { return transport_adjoint(y, *paths, n); };
  } else {
    throw InvalidArgument("make_operator: edge diffusion is nonlinear");
  }
  return std::make_shared<const LinearOperator>(std::move(op));
}

Mat apply_forward(const Graph& g, const ForwardSpec& spec, const Mat& x) {
  if (const auto* m = std::get_if<MaskSpec>(&spec.op)) return mask_forward(x, m->indices);
  if (const auto* d = std::get_if<DiffusionSpec>(&spec.op)) return diffusion_forward(g, x, d->steps);
  if (const auto* t = std::get_if<TransportSpec>(&spec.op)) return transport_forward(x, *t);
  const auto& e = std::get<EdgeDiffusionSpec>(spec.op);
  return edge_diffusion_forward(g, x, e.source, e.history);
}

ad::Var apply_forward(std::shared_ptr<const Graph> g, const ForwardSpec& spec, const ad::Var& x) {
  if (const auto* e = std::get_if<EdgeDiffusionSpec>(&spec.op)) return edge_diffusion_forward(*g, x, e->source, e->history);
  return ad::linear_apply(make_operator(std::move(g), spec), x);
}

Mat observe(const Graph& g, const ForwardSpec& spec, const Mat& x_true, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw InvalidArgument("observe: sigma must be >= 0");
  Mat d = apply_forward(g, spec, x_true);
  if (sigma > 0.0) d += rng_normal(rng, d.rows(), d.cols(), sigma);
  return d;
}

void validate_problem(const Problem& p) {
  if (!p.graph) throw InvalidArgument("problem: missing graph");
  validate_spec(*p.graph, p.spec);
  if (!(p.sigma >= 0.0)) throw InvalidArgument("problem: sigma must be >= 0");
  if (p.d_obs.rows() != data_rows(*p.graph, p.spec))
    throw ShapeError("problem: d_obs has " + std::to_string(p.d_obs.rows()) + " rows, forward produces " +
                     std::to_string(data_rows(*p.graph, p.spec)));
  if (p.x_true.size() > 0 && p.x_true.rows() != state_rows(*p.graph, p.spec))
    throw ShapeError("problem: x_true has the wrong number of rows");
}

}  // namespace grip
