#pragma once

#include <span>
#include <string>

#include "grip/types.hpp"

namespace grip {

struct Edge {
  Index i = 0;
  Index j = 0;
  double w = 1.0;
};

// Immutable undirected graph in CSR form.
//
// Every undirected edge {i,j} is stored twice (i->j and j->i) with equal
// weight. Columns are sorted within each row; there are no self-loops and no
// duplicates. Undirected edges are numbered in CSR order of their (i<j)
// entry, and `directed_edge_id()` maps every CSR slot back to that number.
class Graph {
 public:
  Graph() = default;

  Index num_nodes() const { return n_; }
  Index num_edges() const { return static_cast<Index>(edge_u_.size()); }
  Index num_directed() const { return static_cast<Index>(col_idx_.size()); }

  const IndexList& row_ptr() const { return row_ptr_; }
  const IndexList& col_idx() const { return col_idx_; }
  const std::vector<double>& weights() const { return weight_; }
  bool weighted() const { return weighted_; }

  // Weighted degree (row sums of A).
  const Vec& degree() const { return degree_; }

  // Undirected edge endpoints, u < v.
  const IndexList& edge_u() const { return edge_u_; }
  const IndexList& edge_v() const { return edge_v_; }
  const std::vector<double>& edge_weight() const { return edge_weight_; }
  const IndexList& directed_edge_id() const { return directed_edge_id_; }
  // Source row of each CSR slot.
  const IndexList& directed_src() const { return directed_src_; }

  const Mat& node_meta() const { return node_meta_; }
  Index meta_width() const { return node_meta_.cols(); }

  const IndexList& component() const { return component_; }
  Index num_components() const { return num_components_; }

  // (deg + 1)^{-1/2}, the self-loop augmented symmetric normalisation.
  const Vec& gcn_scale() const { return gcn_scale_; }

  // Same topology and weights with a different meta-data matrix.
  Graph with_meta(Mat meta) const;

 private:
  friend Graph build_graph(Index n, std::span<const Edge> edges, Mat node_meta);

  Index n_ = 0;
  IndexList row_ptr_{0};
  IndexList col_idx_;
  std::vector<double> weight_;
  bool weighted_ = false;
  Vec degree_;
  IndexList edge_u_, edge_v_;
  std::vector<double> edge_weight_;
  IndexList directed_edge_id_;
  IndexList directed_src_;
  Mat node_meta_;
  IndexList component_;
  Index num_components_ = 0;
  Vec gcn_scale_;
};

// Symmetrises, drops self-loops and keeps the first weight seen for each
// undirected pair. Throws InvalidArgument on out-of-range endpoints or
// negative/non-finite weights.
Graph build_graph(Index n, std::span<const Edge> edges, Mat node_meta = Mat());

// Disjoint union; node ids of graph k are offset by the sizes of graphs < k.
// Meta widths must agree.
Graph disjoint_union(std::span<const Graph* const> graphs);

// Relabels node i as perm[i].
Graph permute_nodes(const Graph& g, std::span<const Index> perm);

Mat apply_adjacency(const Graph& g, const Mat& x);
// P = D^{-1} A; isolated nodes keep their state (identity row).
Mat apply_transition(const Graph& g, const Mat& x);
// P^T = A D^{-1} with the same identity fallback for isolated nodes.
Mat apply_transition_transpose(const Graph& g, const Mat& x);
Mat apply_laplacian(const Graph& g, const Mat& x);
// Â X with Â = D̂^{-1/2}(A + I)D̂^{-1/2}, D̂ = D + I (GCN normalisation).
Mat apply_gcn_adjacency(const Graph& g, const Mat& x);

// Subtracts the per-component column mean.
Mat deflate(const Graph& g, const Mat& x);

// Y ~= L^+ R. Conjugate gradient per connected component on mean-zero
// vectors. Throws NumericalError if a column misses `tol` within `max_iter`.
Mat apply_laplacian_pinv(const Graph& g, const Mat& r, double tol = 1e-8, Index max_iter = 500);

// Text format: "n m", m lines "i j w", optional "meta c" + n rows of c reals.
Graph read_graph_text(const std::string& path);
void write_graph_text(const Graph& g, const std::string& path);

}  // namespace grip
