#include "grip/learned.hpp"

#include "grip/error.hpp"

namespace grip {

std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::var: return "var";
    case SolverKind::iss: return "iss";
    case SolverKind::prox: return "prox";
  }
  return "?";
}

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "var") return SolverKind::var;
  if (s == "iss") return SolverKind::iss;
  if (s == "prox") return SolverKind::prox;
  throw InvalidArgument("unknown learned solver '" + s + "' (expected var, iss or prox)");
}

void validate(const UnrolledConfig& cfg) {
  if (cfg.solve_iter < 1) throw InvalidArgument("solve_iter must be >= 1");
  if (cfg.cgls_iter < 0) throw InvalidArgument("cgls_iter must be >= 0");
  if (cfg.channels < 1 || cfg.layers < 1) throw InvalidArgument("channels and layers must be >= 1");
  if (!(cfg.mu >= 0.0)) throw InvalidArgument("mu must be >= 0");
  if (cfg.time_dims < 0 || cfg.time_dims % 2 != 0) throw InvalidArgument("time_dims must be even and >= 0");
}

ProblemShape shape_of(const Problem& p) {
  ProblemShape s;
  s.target = p.target();
  s.kind = p.kind();
  s.data_width = p.d_obs.cols();
  s.meta_width = p.g().meta_width();
  if (const auto* e = std::get_if<EdgeDiffusionSpec>(&p.spec.op)) {
    s.state_width = 1;
    s.source_width = e->source.cols();
    s.history = e->history;
  } else {
    s.state_width = p.d_obs.cols();
  }
  return s;
}

Index SolverNet::cond_width() const {
  Index w = cfg.use_meta ? shape.meta_width : 0;
  if (shape.target == Target::edge) w += shape.source_width;
  return w;
}

SolverNet make_solver_net(const UnrolledConfig& cfg, const ProblemShape& shape, Rng& rng) {
  validate(cfg);
  SolverNet net;
  net.cfg = cfg;
  net.shape = shape;
  const Index C = cfg.channels;
  const Index cond = net.cond_width();
  const bool edge = shape.target == Target::edge;
  const Index nets = cfg.share_params ? 1 : cfg.solve_iter;
  auto& ps = net.params;

  if (cfg.solver == SolverKind::prox) {
    const Index in = (edge ? 1 : shape.state_width) + cond;
    const Index out = edge ? C : shape.state_width;
    for (Index k = 0; k < nets; ++k)
      net.reg.push_back(nn::make_gcn(ps, "prox" + std::to_string(k), in, C, out, cfg.layers, rng,
                                     edge ? 1.0 : cfg.init_out_scale));
    if (edge) {
      net.readout = nn::make_mlp(ps, "readout", {2 * C, C, 1}, rng);
      // Start each proximal map at the identity.
      net.readout.weight.back().node()->value *= cfg.init_out_scale;
      net.readout.bias.back().node()->value *= cfg.init_out_scale;
    }
    return net;
  }

  if (edge) {
    net.lift = ps.add("lift", nn::init_uniform(rng, shape.history * shape.data_width, C));
  } else {
    net.embed = ps.add("embed", nn::init_uniform(rng, C, shape.state_width));
  }
  const std::string tag = cfg.solver == SolverKind::var ? "var" : "iss";
  for (Index k = 0; k < nets; ++k)
    net.reg.push_back(nn::make_gcn(ps, tag + std::to_string(k), C + cond + cfg.time_dims, C, C, cfg.layers, rng,
                                   cfg.init_out_scale));
  if (edge) net.readout = nn::make_mlp(ps, "readout", {2 * C, C, 1}, rng);
  return net;
}

Mat conditioning(const SolverNet& net, const Problem& p) {
  const Index n = p.g().num_nodes();
  Mat c(n, net.cond_width());
  Index col = 0;
  if (net.cfg.use_meta && net.shape.meta_width > 0) {
    if (p.g().meta_width() != net.shape.meta_width) throw ShapeError("conditioning: meta-data width mismatch");
    c.leftCols(net.shape.meta_width) = p.g().node_meta();
    col += net.shape.meta_width;
  }
  if (const auto* e = std::get_if<EdgeDiffusionSpec>(&p.spec.op)) c.middleCols(col, e->source.cols()) = e->source;
  return c;
}

ad::Var edge_readout(const Graph& g, const ad::Var& h, const nn::MlpParams& mlp, bool positive) {
  if (h.rows() != g.num_nodes()) throw ShapeError("edge_readout: one feature row per node expected");
  ad::Var hu = ad::gather_rows(h, g.edge_u());
  ad::Var hv = ad::gather_rows(h, g.edge_v());
  const ad::Var fwd[2] = {hu, hv};
  const ad::Var rev[2] = {hv, hu};
  ad::Var a = nn::mlp_forward(ad::concat_cols(fwd), mlp);
  ad::Var b = nn::mlp_forward(ad::concat_cols(rev), mlp);
  if (a.cols() != 1) throw ShapeError("edge_readout: MLP must produce one output");
  ad::Var mean = ad::scale(ad::add(a, b), 0.5);
  return positive ? ad::softplus(mean) : mean;
}

namespace {

// num / den per segment; segments with gate 0 get 0.
ad::Var gated_ratio(const ad::Var& num, const ad::Var& den, const Mat& gate) {
  Mat off = Mat::Ones(gate.rows(), 1) - gate;
  return ad::div(ad::mul(num, ad::constant(gate)), ad::add(ad::mul(den, ad::constant(gate)), ad::constant(off)));
}

ad::Var seg_dot(const ad::Var& a, const ad::Var& b, std::span<const Index> seg, Index count) {
  return ad::segment_sum(ad::mul(a, b), seg, count);
}

ad::Var seg_scale(const ad::Var& x, const ad::Var& s, std::span<const Index> seg) {
  return ad::mul(x, ad::segment_broadcast(s, seg, x.cols()));
}

void check_finite(const ad::Var& z, Index k, const char* who) {
  if (!z.value().allFinite())
    throw NumericalError(std::string(who) + ": non-finite state at iteration " + std::to_string(k), k);
}

ad::Var broadcast_row(const Mat& row, Index rows) {
  Mat out(rows, row.cols());
  out.rowwise() = row.row(0);
  return ad::constant(std::move(out));
}

// [z | cond | time embedding of t]
ad::Var features(const ad::Var& z, const Mat& cond, Index time_dims, double t) {
  std::vector<ad::Var> parts{z};
  if (cond.cols() > 0) parts.push_back(ad::constant(cond));
  if (time_dims > 0) parts.push_back(broadcast_row(nn::time_embedding(t, time_dims), z.rows()));
  return parts.size() == 1 ? z : ad::concat_cols(parts);
}

// Node i's observed history as one row: [x1_i | x2_i | ... | xH_i].
Mat history_by_node(const Batch& b) {
  const auto& e = std::get<EdgeDiffusionSpec>(b.problem.spec.op);
  const Index N = b.problem.g().num_nodes();
  const Index c = b.problem.d_obs.cols();
  Mat out(N, e.history * c);
  for (Index h = 0; h < e.history; ++h) out.middleCols(h * c, c) = b.problem.d_obs.middleRows(h * N, N);
  return out;
}

// z - mu * grad_z 1/2 ||F(to_edge(z)) - d||^2.
ad::Var edge_fit_step(const Batch& b, const ad::Var& z, const VarMap& to_edge, double mu) {
  if (mu == 0.0) return z;
  const auto& e = std::get<EdgeDiffusionSpec>(b.problem.spec.op);
  const bool record = ad::grad_enabled();
  ad::EnableGradGuard on;
  ad::Var zin = z.requires_grad() ? z : ad::leaf(z.value(), true);
  ad::Var pred = edge_diffusion_forward(b.problem.g(), to_edge(zin), e.source, e.history);
  ad::Var r = ad::sub(pred, ad::constant(b.problem.d_obs));
  ad::Var f = ad::scale(ad::sum_all(ad::mul(r, r)), 0.5);
  const ad::Var in[1] = {zin};
  ad::Var g = ad::grad(f, in, nullptr, record)[0];
  if (!record) return ad::constant(z.value() - mu * g.value());
  return ad::sub(z, ad::scale(g, mu));
}

struct LinearPieces {
  std::shared_ptr<const LinearOperator> J;
  std::shared_ptr<const LinearOperator> Jt;
};

LinearPieces linear_pieces(const Batch& b) {
  LinearPieces lp;
  lp.J = make_operator(b.problem.graph, b.problem.spec);
  lp.Jt = std::make_shared<const LinearOperator>(lp.J->transposed());
  return lp;
}

}  // namespace

ad::Var cgls_unrolled(const VarMap& op, const VarMap& adjoint, const ad::Var& x0, const Mat& d,
                      std::span<const Index> x_seg, std::span<const Index> r_seg, Index count, Index iters) {
  if (iters <= 0) return x0;
  ad::Var x = x0;
  ad::Var r = ad::sub(ad::constant(d), op(x));
  ad::Var s = adjoint(r);
  ad::Var p = s;
  ad::Var gamma = seg_dot(s, s, x_seg, count);
  const Mat gamma0 = gamma.value();
  for (Index it = 0; it < iters; ++it) {
    ad::Var q = op(p);
    ad::Var den = seg_dot(q, q, r_seg, count);
    Mat step_gate(count, 1), dir_gate(count, 1);
    for (Index k = 0; k < count; ++k) {
      const double gk = gamma.value()(k, 0);
      step_gate(k, 0) = (den.value()(k, 0) > 0.0 && gk > 1e-30 * gamma0(k, 0)) ? 1.0 : 0.0;
      dir_gate(k, 0) = gk > 0.0 ? 1.0 : 0.0;
    }
    ad::Var alpha = gated_ratio(gamma, den, step_gate);
    x = ad::add(x, seg_scale(p, alpha, x_seg));
    r = ad::sub(r, seg_scale(q, alpha, r_seg));
    s = adjoint(r);
    ad::Var gamma_new = seg_dot(s, s, x_seg, count);
    ad::Var beta = gated_ratio(gamma_new, gamma, dir_gate);
    p = ad::add(s, seg_scale(p, beta, x_seg));
    gamma = gamma_new;
  }
  return x;
}

ad::Var edge_data_step(const Batch& b, const SolverNet& net, const ad::Var& z, double mu) {
  const Graph& g = b.problem.g();
  return edge_fit_step(b, z, [&](const ad::Var& h) { return edge_readout(g, h, net.readout); }, mu);
}

ad::Var iss_unroll(const Batch& b, const ad::Var& embed, const ScoreFn& score, double mu, Index iters, Index steps,
                   std::vector<Mat>* trace) {
  const LinearPieces lp = linear_pieces(b);
  const ad::Var d = ad::constant(b.problem.d_obs);
  const ad::Var embed_t = ad::transpose(embed);
  ad::Var z = ad::constant(Mat::Zero(b.problem.g().num_nodes(), embed.rows()));
  for (Index k = 0; k < iters; ++k) {
    for (Index s = 0; s < steps; ++s) {
      ad::Var r = ad::sub(d, ad::linear_apply(lp.J, ad::matmul(z, embed)));
      z = ad::add(z, ad::scale(ad::matmul(ad::linear_apply(lp.Jt, r), embed_t), mu));
    }
    z = ad::sub(z, score(z, k));
    check_finite(z, k, "iss");
    if (trace) trace->push_back(ad::matmul(z, embed).value());
  }
  return z;
}

ad::Var var_gnn_solve(const Batch& b, const SolverNet& net) {
  const auto& cfg = net.cfg;
  const Problem& p = b.problem;
  const Graph& g = p.g();
  const Mat cond = conditioning(net, p);
  const bool edge = p.target() == Target::edge;

  ad::Var z0;
  VarMap op, adj;
  LinearPieces lp;
  ad::Var embed_t;
  if (edge) {
    z0 = ad::scale(ad::matmul(ad::constant(history_by_node(b)), net.lift), cfg.mu);
  } else {
    lp = linear_pieces(b);
    embed_t = ad::transpose(net.embed);
    z0 = ad::scale(ad::matmul(ad::constant(lp.Jt->apply(p.d_obs)), embed_t), cfg.mu);
    op = [&](const ad::Var& z) { return ad::linear_apply(lp.J, ad::matmul(z, net.embed)); };
    adj = [&](const ad::Var& r) { return ad::matmul(ad::linear_apply(lp.Jt, r), embed_t); };
  }

  ad::Var prev = z0, z = z0;
  for (Index k = 0; k < cfg.solve_iter; ++k) {
    ad::Var grad_phi = nn::gcn_forward(g, features(z, cond, cfg.time_dims, static_cast<double>(k + 1)), net.reg_at(k));
    ad::Var next = ad::sub(ad::sub(ad::scale(z, 2.0), prev), grad_phi);
    if (edge) {
      for (Index s = 0; s < cfg.cgls_iter; ++s) next = edge_data_step(b, net, next, cfg.mu);
    } else {
      next = cgls_unrolled(op, adj, next, p.d_obs, b.node_seg, b.data_seg, b.count, cfg.cgls_iter);
    }
    check_finite(next, k, "var");
    prev = z;
    z = next;
  }
  return edge ? edge_readout(g, z, net.readout) : ad::matmul(z, net.embed);
}

ad::Var iss_gnn_solve(const Batch& b, const SolverNet& net) {
  const auto& cfg = net.cfg;
  const Problem& p = b.problem;
  const Graph& g = p.g();
  const Mat cond = conditioning(net, p);
  ScoreFn score = [&](const ad::Var& z, Index k) {
    return nn::gcn_forward(g, features(z, cond, cfg.time_dims, static_cast<double>(k + 1)), net.reg_at(k));
  };
  if (p.target() == Target::node) return ad::matmul(iss_unroll(b, net.embed, score, cfg.mu, cfg.solve_iter, cfg.cgls_iter), net.embed);

  ad::Var z = ad::constant(Mat::Zero(g.num_nodes(), cfg.channels));
  for (Index k = 0; k < cfg.solve_iter; ++k) {
    for (Index s = 0; s < cfg.cgls_iter; ++s) z = edge_data_step(b, net, z, cfg.mu);
    z = ad::sub(z, score(z, k));
    check_finite(z, k, "iss");
  }
  return edge_readout(g, z, net.readout);
}

ad::Var prox_gnn_solve(const Batch& b, const SolverNet& net) {
  const auto& cfg = net.cfg;
  const Problem& p = b.problem;
  const Graph& g = p.g();
  const Mat cond = conditioning(net, p);

  if (p.target() == Target::node) {
    const LinearPieces lp = linear_pieces(b);
    const ad::Var d = ad::constant(p.d_obs);
    ad::Var x = ad::constant(cfg.mu * lp.Jt->apply(p.d_obs));
    for (Index k = 0; k < cfg.solve_iter; ++k) {
      ad::Var r = ad::sub(ad::linear_apply(lp.J, x), d);
      ad::Var u = ad::sub(x, ad::scale(ad::linear_apply(lp.Jt, r), cfg.mu));
      x = ad::add(u, nn::gcn_forward(g, features(u, cond, 0, 0.0), net.reg_at(k)));
      check_finite(x, k, "prox");
    }
    return x;
  }

  // Edge states: node features are mean incident edge values.
  const Index N = g.num_nodes();
  Mat inv_deg = Mat::Zero(N, 1);
  for (Index i = 0; i < N; ++i) {
    const Index deg = g.row_ptr()[i + 1] - g.row_ptr()[i];
    if (deg > 0) inv_deg(i, 0) = 1.0 / static_cast<double>(deg);
  }
  const ad::Var inv = ad::constant(inv_deg);
  ad::Var x = ad::constant(Mat::Constant(g.num_edges(), 1, cfg.mu));
  for (Index k = 0; k < cfg.solve_iter; ++k) {
    ad::Var u = edge_fit_step(b, x, [](const ad::Var& v) { return v; }, cfg.mu);
    ad::Var node = ad::mul_col(ad::scatter_add_rows(ad::gather_rows(u, g.directed_edge_id()), g.directed_src(), N), inv);
    ad::Var h = nn::gcn_forward(g, features(node, cond, 0, 0.0), net.reg_at(k));
    x = ad::add(u, edge_readout(g, h, net.readout, false));
    check_finite(x, k, "prox");
  }
  return x;
}

ad::Var solve(const Batch& b, const SolverNet& net) {
  const ProblemShape s = shape_of(b.problem);
  if (s.target != net.shape.target || s.state_width != net.shape.state_width ||
      (net.cfg.use_meta && s.meta_width != net.shape.meta_width))
    throw ShapeError("solve: problem does not match the widths the net was built for");
  switch (net.cfg.solver) {
    case SolverKind::var: return var_gnn_solve(b, net);
    case SolverKind::iss: return iss_gnn_solve(b, net);
    case SolverKind::prox: return prox_gnn_solve(b, net);
  }
  throw InvalidArgument("solve: unknown solver");
}

}  // namespace grip
