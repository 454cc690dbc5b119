#include "grip/classical.hpp"

#include <cmath>
#include <sstream>

#include "grip/error.hpp"

namespace grip {

std::string to_string(Regularizer r) { return r == Regularizer::laplacian ? "laplacian" : "tikhonov"; }

Regularizer regularizer_from_string(const std::string& s) {
  if (s == "laplacian") return Regularizer::laplacian;
  if (s == "tikhonov") return Regularizer::tikhonov;
  throw InvalidArgument("unknown regularizer '" + s + "' (expected laplacian or tikhonov)");
}

void validate(const ClassicalConfig& cfg) {
  if (!(cfg.mu > 0.0)) throw InvalidArgument("classical: mu must be > 0");
  if (!(cfg.alpha >= 0.0)) throw InvalidArgument("classical: alpha must be >= 0");
  if (!(cfg.stop_nmse > 0.0)) throw InvalidArgument("classical: stop_nmse must be > 0");
  if (cfg.max_iter < 0) throw InvalidArgument("classical: max_iter must be >= 0");
  if (!(cfg.pinv_tol > 0.0)) throw InvalidArgument("classical: pinv_tol must be > 0");
}

namespace {

Mat row_softmax(const Mat& x) {
  Mat p(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    double s = 0.0;
    for (Index j = 0; j < x.cols(); ++j) s += (p(i, j) = std::exp(x(i, j) - m));
    p.row(i) /= s;
  }
  return p;
}

double sq(const Mat& m) { return m.squaredNorm(); }

}  // namespace

Mat apply_regularizer(const Graph& g, Target target, Regularizer r, const Mat& x) {
  if (r == Regularizer::tikhonov) return x;
  if (target == Target::node) return apply_laplacian(g, x);
  if (x.rows() != g.num_edges()) throw ShapeError("apply_regularizer: one row per edge expected");
  // Line-graph Laplacian: (deg(u)-1 + deg(v)-1) x_e - (S_u + S_v - 2 x_e),
  // S_u the sum over edges incident to u.
  const Index n = g.num_nodes();
  Mat incident = Mat::Zero(n, x.cols());
  IndexList count(n, 0);
  for (Index e = 0; e < g.num_edges(); ++e) {
    incident.row(g.edge_u()[e]) += x.row(e);
    incident.row(g.edge_v()[e]) += x.row(e);
    ++count[g.edge_u()[e]];
    ++count[g.edge_v()[e]];
  }
  Mat out(x.rows(), x.cols());
  for (Index e = 0; e < g.num_edges(); ++e) {
    const Index u = g.edge_u()[e], v = g.edge_v()[e];
    const double deg = static_cast<double>(count[u] - 1 + count[v] - 1);
    out.row(e) = deg * x.row(e) - (incident.row(u) + incident.row(v) - 2.0 * x.row(e));
  }
  return out;
}

Mat classical_start(const Problem& p) {
  if (p.target() == Target::edge) return Mat::Ones(p.g().num_edges(), 1);
  return Mat::Zero(p.g().num_nodes(), p.d_obs.cols());
}

Mat classical_residual(const Problem& p, const Mat& x) {
  const Mat z = p.kind() == TaskKind::classification && p.target() == Target::node ? row_softmax(x) : x;
  return apply_forward(p.g(), p.spec, z) - p.d_obs;
}

Mat classical_gradient(const Problem& p, const Mat& x) {
  const bool cls = p.kind() == TaskKind::classification && p.target() == Target::node;
  if (p.spec.linear() && !cls) {
    const auto J = make_operator(p.graph, p.spec);
    return J->apply_adjoint(J->apply(x) - p.d_obs);
  }
  ad::EnableGradGuard on;
  ad::Var xv = ad::leaf(x, true);
  ad::Var z = cls ? ad::row_softmax(xv) : xv;
  ad::Var r = ad::sub(apply_forward(p.graph, p.spec, z), ad::constant(p.d_obs));
  ad::Var f = ad::scale(ad::sum_all(ad::mul(r, r)), 0.5);
  const ad::Var in[1] = {xv};
  return ad::grad(f, in)[0].value();
}

double recovery_nmse(const Problem& p, const Mat& x) {
  if (p.x_true.size() == 0) throw InvalidArgument("recovery_nmse: problem has no ground truth");
  const Mat est = p.kind() == TaskKind::classification && p.target() == Target::node ? row_softmax(x) : x;
  const double denom = sq(p.x_true);
  if (denom == 0.0) throw InvalidArgument("recovery_nmse: all-zero ground truth");
  return sq(est - p.x_true) / denom;
}

ClassicalResult solve_variational_classical(const Problem& p, const ClassicalConfig& cfg) {
  validate(cfg);
  validate_problem(p);
  const double dn = sq(p.d_obs);
  if (dn == 0.0) throw InvalidArgument("classical: all-zero observation");
  const bool truth = p.x_true.size() > 0;
  ClassicalResult out;
  Mat x = classical_start(p);
  double r0 = -1.0;
  for (Index it = 0;; ++it) {
    const Mat res = classical_residual(p, x);
    const double rn = std::sqrt(sq(res));
    if (!std::isfinite(rn)) throw NumericalError("classical: non-finite residual", it, rn);
    if (it == 0) r0 = rn;
    out.data_fit.push_back(rn * rn / dn);
    if (truth) out.recovery.push_back(recovery_nmse(p, x));
    if (rn > 10.0 * r0) throw NumericalError("classical: diverged (residual above 10x its initial value)", it, rn);
    if (out.data_fit.back() < cfg.stop_nmse) {
      out.converged = true;
      break;
    }
    if (it == cfg.max_iter) break;
    Mat g = classical_gradient(p, x);
    if (cfg.alpha != 0.0) g += cfg.alpha * apply_regularizer(p.g(), p.target(), cfg.regularizer, x);
    x -= cfg.mu * g;
    out.iterations = it + 1;
  }
  out.x = std::move(x);
  return out;
}

ScaleSpaceResult solve_scale_space(const Problem& p, const ClassicalConfig& cfg, Index iters) {
  validate_problem(p);
  if (!p.spec.linear()) throw InvalidArgument("scale space: requires a linear forward operator");
  if (!(cfg.mu >= 0.0)) throw InvalidArgument("scale space: mu must be >= 0");
  const auto J = make_operator(p.graph, p.spec);
  const double dn = sq(p.d_obs);
  ScaleSpaceResult out;
  Mat x = Mat::Zero(p.g().num_nodes(), p.d_obs.cols());
  for (Index it = 0; it < iters; ++it) {
    const Mat g = J->apply_adjoint(J->apply(x) - p.d_obs);
    x -= cfg.mu * apply_laplacian_pinv(p.g(), g, cfg.pinv_tol, cfg.pinv_max_iter);
    out.trace.push_back(x);
    out.data_fit.push_back(dn > 0.0 ? sq(J->apply(x) - p.d_obs) / dn : 0.0);
    if (p.x_true.size() > 0) out.recovery.push_back(sq(x - p.x_true) / sq(p.x_true));
  }
  return out;
}

std::string trace_csv(const std::vector<double>& data_fit, const std::vector<double>& recovery) {
  std::ostringstream os;
  os.precision(17);
  const bool rec = !recovery.empty();
  os << "iter,data_fit_nmse" << (rec ? ",recovery_nmse" : "") << "\n";
  for (size_t k = 0; k < data_fit.size(); ++k) {
    os << k << "," << data_fit[k];
    if (rec) os << "," << recovery[k];
    os << "\n";
  }
  return os.str();
}

}  // namespace grip
