#pragma once

#include <functional>
#include <string>

#include "grip/batch.hpp"
#include "grip/nn.hpp"

namespace grip {

enum class SolverKind { var, iss, prox };

std::string to_string(SolverKind k);
SolverKind solver_kind_from_string(const std::string& s);

struct UnrolledConfig {
  SolverKind solver = SolverKind::var;
  Index solve_iter = 16;
  Index cgls_iter = 1;
  Index channels = 64;
  Index layers = 8;
  double mu = 1.0;
  bool share_params = false;
  bool use_meta = true;
  Index time_dims = 16;
  // Multiplies the initial weights of each regulariser's last layer.
  double init_out_scale = 0.1;
};

void validate(const UnrolledConfig& cfg);

// Widths a net is built for; read off a representative problem.
struct ProblemShape {
  Target target = Target::node;
  TaskKind kind = TaskKind::regression;
  Index state_width = 1;   // c (node targets); 1 for edge targets
  Index data_width = 1;    // columns of d_obs
  Index meta_width = 0;    // node meta-data columns
  Index source_width = 0;  // edge targets: columns of the known source
  Index history = 0;       // edge targets: H
};

ProblemShape shape_of(const Problem& p);

struct SolverNet {
  UnrolledConfig cfg;
  ProblemShape shape;
  nn::ParamStore params;
  ad::Var embed;  // E as a (channels x state_width) matrix: x = z E
  ad::Var lift;   // edge Var-GNN: node history (H*c) -> channels
  std::vector<nn::GcnParams> reg;
  nn::MlpParams readout;

  const nn::GcnParams& reg_at(Index k) const { return reg[cfg.share_params ? 0 : k]; }
  // Columns of the conditioning features fed to each regulariser besides the state.
  Index cond_width() const;
};

SolverNet make_solver_net(const UnrolledConfig& cfg, const ProblemShape& shape, Rng& rng);

// Meta-data (when used) and, for edge targets, the known source: n x cond_width.
Mat conditioning(const SolverNet& net, const Problem& p);

// Edge states from node features: for every undirected edge {i,j},
// softplus((MLP([h_i | h_j]) + MLP([h_j | h_i])) / 2). With positive=false
// the softplus is skipped.
ad::Var edge_readout(const Graph& g, const ad::Var& h, const nn::MlpParams& mlp, bool positive = true);

// Differentiable CGLS with one set of step lengths per problem: rows of x are
// grouped by x_seg, rows of the residual by r_seg. Exactly `iters` steps from x0.
using VarMap = std::function<ad::Var(const ad::Var&)>;
ad::Var cgls_unrolled(const VarMap& op, const VarMap& adjoint, const ad::Var& x0, const Mat& d,
                      std::span<const Index> x_seg, std::span<const Index> r_seg, Index count, Index iters);

// z - mu * grad_z 1/2 ||F(readout(z)) - d||^2 for edge targets; differentiable
// when recording.
ad::Var edge_data_step(const Batch& b, const SolverNet& net, const ad::Var& z, double mu);

// A score/regulariser evaluated at iteration k on state z.
using ScoreFn = std::function<ad::Var(const ad::Var& z, Index k)>;

// ISS recursion for linear node problems with an arbitrary score and
// embedding: z0 = 0; cgls_iter steps z += mu E^T J^T (d - F(z E)); z -= s(z, k).
// Returns z after `iters` iterations; `trace` (optional) receives z E after each.
ad::Var iss_unroll(const Batch& b, const ad::Var& embed, const ScoreFn& score, double mu, Index iters, Index steps,
                   std::vector<Mat>* trace = nullptr);

ad::Var var_gnn_solve(const Batch& b, const SolverNet& net);
ad::Var iss_gnn_solve(const Batch& b, const SolverNet& net);
ad::Var prox_gnn_solve(const Batch& b, const SolverNet& net);
// Dispatches on net.cfg.solver. Output: state rows x state_width (logits for
// classification).
ad::Var solve(const Batch& b, const SolverNet& net);

}  // namespace grip
