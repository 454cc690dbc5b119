#include "grip/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "grip/error.hpp"
#include "grip/linalg.hpp"

namespace grip {

Graph build_graph(Index n, std::span<const Edge> edges, Mat node_meta) {
  if (n < 0) throw InvalidArgument("build_graph: negative node count");
  if (node_meta.size() > 0 && node_meta.rows() != n)
    throw ShapeError("build_graph: node_meta must have n rows");

  // First weight wins for every unordered pair.
  std::unordered_map<std::uint64_t, double> seen;
  std::vector<Edge> unique;
  unique.reserve(edges.size());
  bool weighted = false;
  for (const Edge& e : edges) {
    if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n)
      throw InvalidArgument("build_graph: edge (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                            ") out of range for n=" + std::to_string(n));
    if (!std::isfinite(e.w) || e.w < 0.0) throw InvalidArgument("build_graph: negative or non-finite weight");
    if (e.i == e.j) continue;
    const Index a = std::min(e.i, e.j), b = std::max(e.i, e.j);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(b);
    if (seen.emplace(key, e.w).second) {
      unique.push_back({a, b, e.w});
      if (e.w != 1.0) weighted = true;
    }
  }

  Graph g;
  g.n_ = n;
  g.weighted_ = weighted;
  std::vector<Index> count(static_cast<size_t>(n), 0);
  for (const Edge& e : unique) {
    ++count[e.i];
    ++count[e.j];
  }
  g.row_ptr_.assign(static_cast<size_t>(n) + 1, 0);
  for (Index i = 0; i < n; ++i) g.row_ptr_[i + 1] = g.row_ptr_[i] + count[i];
  const Index nnz = g.row_ptr_[n];
  std::vector<std::pair<Index, double>> slots(static_cast<size_t>(nnz));
  std::vector<Index> fill(g.row_ptr_.begin(), g.row_ptr_.end() - 1);
  for (const Edge& e : unique) {
    slots[fill[e.i]++] = {e.j, e.w};
    slots[fill[e.j]++] = {e.i, e.w};
  }
  g.col_idx_.resize(nnz);
  g.weight_.resize(nnz);
  g.directed_src_.resize(nnz);
  g.degree_ = Vec::Zero(n);
  for (Index i = 0; i < n; ++i) {
    auto first = slots.begin() + g.row_ptr_[i], last = slots.begin() + g.row_ptr_[i + 1];
    std::sort(first, last, [](const auto& a, const auto& b) { return a.first < b.first; });
    for (Index k = g.row_ptr_[i]; k < g.row_ptr_[i + 1]; ++k) {
      g.col_idx_[k] = slots[k].first;
      g.weight_[k] = slots[k].second;
      g.directed_src_[k] = i;
      g.degree_[i] += slots[k].second;
    }
  }

  // Undirected numbering follows the (i<j) CSR entries.
  g.directed_edge_id_.assign(nnz, -1);
  for (Index i = 0; i < n; ++i) {
    for (Index k = g.row_ptr_[i]; k < g.row_ptr_[i + 1]; ++k) {
      const Index j = g.col_idx_[k];
      if (i < j) {
        g.directed_edge_id_[k] = static_cast<Index>(g.edge_u_.size());
        g.edge_u_.push_back(i);
        g.edge_v_.push_back(j);
        g.edge_weight_.push_back(g.weight_[k]);
      }
    }
  }
  for (Index i = 0; i < n; ++i) {
    for (Index k = g.row_ptr_[i]; k < g.row_ptr_[i + 1]; ++k) {
      const Index j = g.col_idx_[k];
      if (i > j) {
        auto first = g.col_idx_.begin() + g.row_ptr_[j], last = g.col_idx_.begin() + g.row_ptr_[j + 1];
        const Index slot = static_cast<Index>(std::lower_bound(first, last, i) - g.col_idx_.begin());
        g.directed_edge_id_[k] = g.directed_edge_id_[slot];
      }
    }
  }

  g.component_.assign(n, -1);
  Index comp = 0;
  std::deque<Index> queue;
  for (Index s = 0; s < n; ++s) {
    if (g.component_[s] >= 0) continue;
    g.component_[s] = comp;
    queue.push_back(s);
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop_front();
      for (Index k = g.row_ptr_[u]; k < g.row_ptr_[u + 1]; ++k) {
        const Index v = g.col_idx_[k];
        if (g.component_[v] < 0) {
          g.component_[v] = comp;
          queue.push_back(v);
        }
      }
    }
    ++comp;
  }
  g.num_components_ = comp;

  g.gcn_scale_ = (g.degree_.array() + 1.0).rsqrt().matrix();
  g.node_meta_ = node_meta.size() > 0 ? std::move(node_meta) : Mat(n, 0);
  return g;
}

Graph Graph::with_meta(Mat meta) const {
  if (meta.size() > 0 && meta.rows() != n_) throw ShapeError("with_meta: meta must have n rows");
  Graph g = *this;
  g.node_meta_ = meta.size() > 0 ? std::move(meta) : Mat(n_, 0);
  return g;
}

Graph disjoint_union(std::span<const Graph* const> graphs) {
  Index n = 0, meta_w = -1;
  std::vector<Edge> edges;
  for (const Graph* g : graphs) {
    if (meta_w < 0) meta_w = g->meta_width();
    if (g->meta_width() != meta_w) throw ShapeError("disjoint_union: meta widths differ");
    for (Index e = 0; e < g->num_edges(); ++e)
      edges.push_back({g->edge_u()[e] + n, g->edge_v()[e] + n, g->edge_weight()[e]});
    n += g->num_nodes();
  }
  Mat meta(n, std::max<Index>(meta_w, 0));
  Index off = 0;
  for (const Graph* g : graphs) {
    if (meta.cols() > 0) meta.middleRows(off, g->num_nodes()) = g->node_meta();
    off += g->num_nodes();
  }
  return build_graph(n, edges, meta.cols() > 0 ? meta : Mat());
}

Graph permute_nodes(const Graph& g, std::span<const Index> perm) {
  const Index n = g.num_nodes();
  if (static_cast<Index>(perm.size()) != n) throw ShapeError("permute_nodes: permutation size");
  std::vector<Edge> edges;
  edges.reserve(g.num_edges());
  for (Index e = 0; e < g.num_edges(); ++e)
    edges.push_back({perm[g.edge_u()[e]], perm[g.edge_v()[e]], g.edge_weight()[e]});
  Mat meta;
  if (g.meta_width() > 0) {
    meta.resize(n, g.meta_width());
    for (Index i = 0; i < n; ++i) meta.row(perm[i]) = g.node_meta().row(i);
  }
  return build_graph(n, edges, meta);
}

namespace {

void check_rows(const Graph& g, const Mat& x, const char* op) {
  if (x.rows() != g.num_nodes())
    throw ShapeError(std::string(op) + ": expected " + std::to_string(g.num_nodes()) + " rows, got " +
                     std::to_string(x.rows()));
}

}  // namespace

Mat apply_adjacency(const Graph& g, const Mat& x) {
  check_rows(g, x, "apply_adjacency");
  Mat y = Mat::Zero(x.rows(), x.cols());
  const auto& rp = g.row_ptr();
  const auto& ci = g.col_idx();
  const auto& w = g.weights();
  for (Index i = 0; i < g.num_nodes(); ++i)
    for (Index k = rp[i]; k < rp[i + 1]; ++k) y.row(i) += w[k] * x.row(ci[k]);
  return y;
}

Mat apply_transition(const Graph& g, const Mat& x) {
  Mat y = apply_adjacency(g, x);
  const Vec& deg = g.degree();
  for (Index i = 0; i < g.num_nodes(); ++i) {
    if (deg[i] > 0.0)
      y.row(i) /= deg[i];
    else
      y.row(i) = x.row(i);
  }
  return y;
}

Mat apply_transition_transpose(const Graph& g, const Mat& x) {
  check_rows(g, x, "apply_transition_transpose");
  const Vec& deg = g.degree();
  Mat scaled = x;
  for (Index i = 0; i < g.num_nodes(); ++i)
    if (deg[i] > 0.0) scaled.row(i) /= deg[i];
  Mat y = apply_adjacency(g, scaled);
  for (Index i = 0; i < g.num_nodes(); ++i)
    if (deg[i] == 0.0) y.row(i) = x.row(i);
  return y;
}

Mat apply_laplacian(const Graph& g, const Mat& x) {
  Mat y = apply_adjacency(g, x);
  const Vec& deg = g.degree();
  for (Index i = 0; i < g.num_nodes(); ++i) y.row(i) = deg[i] * x.row(i) - y.row(i);
  return y;
}

Mat apply_gcn_adjacency(const Graph& g, const Mat& x) {
  check_rows(g, x, "apply_gcn_adjacency");
  const Vec& s = g.gcn_scale();
  const auto& rp = g.row_ptr();
  const auto& ci = g.col_idx();
  const auto& w = g.weights();
  Mat y(x.rows(), x.cols());
  for (Index i = 0; i < g.num_nodes(); ++i) {
    y.row(i) = s[i] * x.row(i);
    for (Index k = rp[i]; k < rp[i + 1]; ++k) y.row(i) += (w[k] * s[ci[k]]) * x.row(ci[k]);
    y.row(i) *= s[i];
  }
  return y;
}

Mat deflate(const Graph& g, const Mat& x) {
  check_rows(g, x, "deflate");
  const Index nc = g.num_components();
  Mat sums = Mat::Zero(nc, x.cols());
  std::vector<Index> sizes(nc, 0);
  for (Index i = 0; i < g.num_nodes(); ++i) {
    sums.row(g.component()[i]) += x.row(i);
    ++sizes[g.component()[i]];
  }
  Mat y = x;
  for (Index i = 0; i < g.num_nodes(); ++i) {
    const Index c = g.component()[i];
    y.row(i) -= sums.row(c) / static_cast<double>(sizes[c]);
  }
  return y;
}

Mat apply_laplacian_pinv(const Graph& g, const Mat& r, double tol, Index max_iter) {
  check_rows(g, r, "apply_laplacian_pinv");
  if (!(tol > 0.0)) throw InvalidArgument("apply_laplacian_pinv: tol must be positive");
  const Index n = g.num_nodes();
  const Mat rd = deflate(g, r);
  Mat y = Mat::Zero(n, r.cols());

  std::vector<IndexList> members(g.num_components());
  for (Index i = 0; i < n; ++i) members[g.component()[i]].push_back(i);
  IndexList local(n, 0);
  for (const auto& m : members)
    for (size_t a = 0; a < m.size(); ++a) local[m[a]] = static_cast<Index>(a);

  const auto& rp = g.row_ptr();
  const auto& ci = g.col_idx();
  const auto& w = g.weights();
  for (const auto& m : members) {
    const Index s = static_cast<Index>(m.size());
    if (s < 2) continue;
    LinearOperator lap;
    lap.in_rows = lap.out_rows = s;
    lap.forward = [&](const Mat& v) {
      Mat out(s, v.cols());
      for (Index a = 0; a < s; ++a) {
        const Index i = m[a];
        out.row(a) = g.degree()[i] * v.row(a);
        for (Index k = rp[i]; k < rp[i + 1]; ++k) out.row(a) -= w[k] * v.row(local[ci[k]]);
      }
      return out;
    };
    lap.adjoint = lap.forward;
    for (Index c = 0; c < r.cols(); ++c) {
      Mat b(s, 1);
      for (Index a = 0; a < s; ++a) b(a, 0) = rd(m[a], c);
      if (b.norm() == 0.0) continue;
      CgResult res = cg_solve(lap, b, Mat::Zero(s, 1), tol, max_iter);
      if (res.residual > tol)
        throw NumericalError("apply_laplacian_pinv: CG did not reach tolerance", static_cast<long>(res.iterations),
                             res.residual);
      const double mean = res.x.mean();
      for (Index a = 0; a < s; ++a) y(m[a], c) = res.x(a, 0) - mean;
    }
  }
  return y;
}

Graph read_graph_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_graph_text: cannot open " + path);
  Index n = 0, m = 0;
  if (!(in >> n >> m)) throw IoError("read_graph_text: bad header in " + path);
  std::vector<Edge> edges(static_cast<size_t>(m));
  for (auto& e : edges)
    if (!(in >> e.i >> e.j >> e.w)) throw IoError("read_graph_text: truncated edge list in " + path);
  Mat meta;
  std::string tag;
  if (in >> tag) {
    if (tag != "meta") throw IoError("read_graph_text: unexpected token '" + tag + "'");
    Index c = 0;
    if (!(in >> c)) throw IoError("read_graph_text: bad meta header");
    meta.resize(n, c);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < c; ++k)
        if (!(in >> meta(i, k))) throw IoError("read_graph_text: truncated meta block");
  }
  return build_graph(n, edges, meta);
}

void write_graph_text(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_graph_text: cannot open " + path);
  out.precision(17);
  out << g.num_nodes() << ' ' << g.num_edges() << '\n';
  for (Index e = 0; e < g.num_edges(); ++e)
    out << g.edge_u()[e] << ' ' << g.edge_v()[e] << ' ' << g.edge_weight()[e] << '\n';
  if (g.meta_width() > 0) {
    out << "meta " << g.meta_width() << '\n';
    for (Index i = 0; i < g.num_nodes(); ++i) {
      for (Index k = 0; k < g.meta_width(); ++k) out << (k ? " " : "") << g.node_meta()(i, k);
      out << '\n';
    }
  }
  if (!out) throw IoError("write_graph_text: write failed for " + path);
}

}  // namespace grip
