#pragma once

#include <memory>
#include <string>
#include <variant>

#include "grip/autodiff.hpp"
#include "grip/graph.hpp"
#include "grip/linalg.hpp"
#include "grip/rng.hpp"

namespace grip {

enum class TaskKind { classification, regression };
enum class Target { node, edge };

// Floor applied to edge states before row normalisation in P(x_E).
inline constexpr double kEdgeWeightFloor = 1e-6;

// Row selection I_n^P (property completion).
struct MaskSpec {
  IndexList indices;  // strictly increasing
};

// P^k with P = D^{-1}A (source estimation).
struct DiffusionSpec {
  Index steps = 0;
};

// Path averages (graph transport). Paths are stored row-major, K x length.
struct TransportSpec {
  Index length = 1;
  IndexList nodes;
  bool average = true;  // false: plain sums along each path

  Index num_paths() const { return length > 0 ? static_cast<Index>(nodes.size()) / length : 0; }
  Index at(Index path, Index j) const { return nodes[path * length + j]; }
};

// History x^(1..H) of x^(k+1) = P(x_E) x^(k) from a known source (edge recovery).
struct EdgeDiffusionSpec {
  Mat source;  // x^(0), n x c
  Index history = 1;
};

struct ForwardSpec {
  std::variant<MaskSpec, DiffusionSpec, TransportSpec, EdgeDiffusionSpec> op;
  TaskKind kind = TaskKind::regression;

  bool linear() const { return !std::holds_alternative<EdgeDiffusionSpec>(op); }
  Target target() const { return linear() ? Target::node : Target::edge; }
  std::string name() const;
};

// Checks the spec's invariants against `g`; throws InvalidArgument.
void validate_spec(const Graph& g, const ForwardSpec& spec);

// Rows of the unknown state (n for node targets, m for edge targets).
Index state_rows(const Graph& g, const ForwardSpec& spec);
// Rows of the observation.
Index data_rows(const Graph& g, const ForwardSpec& spec);

Mat mask_forward(const Mat& x, std::span<const Index> indices);
Mat mask_adjoint(const Mat& d, std::span<const Index> indices, Index n);

Mat diffusion_forward(const Graph& g, const Mat& x0, Index k);
Mat diffusion_adjoint(const Graph& g, const Mat& d, Index k);

Mat transport_forward(const Mat& x, const TransportSpec& paths);
Mat transport_adjoint(const Mat& d, const TransportSpec& paths, Index n);

// x_E is m x 1 (one state per undirected edge); returns (H*n) x c.
Mat edge_diffusion_forward(const Graph& g, const Mat& x_edge, const Mat& source, Index history);
// Same map recorded on the autodiff tape; differentiable in x_E.
ad::Var edge_diffusion_forward(const Graph& g, const ad::Var& x_edge, const Mat& source, Index history);

// Linear forward map as an operator; throws for EdgeDiffusion.
// The operator keeps `g` alive.
std::shared_ptr<const LinearOperator> make_operator(std::shared_ptr<const Graph> g, const ForwardSpec& spec);

Mat apply_forward(const Graph& g, const ForwardSpec& spec, const Mat& x);
ad::Var apply_forward(std::shared_ptr<const Graph> g, const ForwardSpec& spec, const ad::Var& x);

// d = F(x) + sigma * N(0, I); exact when sigma == 0.
Mat observe(const Graph& g, const ForwardSpec& spec, const Mat& x_true, double sigma, Rng& rng);

struct Problem {
  std::shared_ptr<const Graph> graph;
  ForwardSpec spec;
  Mat d_obs;
  double sigma = 0.0;
  Mat x_true;  // evaluation only

  TaskKind kind() const { return spec.kind; }
  Target target() const { return spec.target(); }
  const Graph& g() const { return *graph; }
};

// Spec invariants plus d_obs / x_true shapes; throws InvalidArgument or ShapeError.
void validate_problem(const Problem& p);

}  // namespace grip
