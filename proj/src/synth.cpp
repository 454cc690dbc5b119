#include "grip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "grip/error.hpp"

namespace grip {

namespace {

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(std::string(name) + " must lie in [0,1]");
}

// Fisher-Yates over the whole range.
void shuffle(IndexList& v, Rng& rng) {
  for (Index i = static_cast<Index>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[rng.below(i + 1)]);
}

}  // namespace

LabeledGraph gen_sbm(Index n, Index classes, double p_in, double p_out, Rng& rng) {
  if (n < 1 || classes < 1 || classes > n) throw InvalidArgument("gen_sbm: need 1 <= classes <= n");
  check_prob(p_in, "p_in");
  check_prob(p_out, "p_out");
  if (p_in < p_out) std::clog << "warning: gen_sbm with p_in < p_out gives anti-community structure\n";
  LabeledGraph out;
  out.labels.resize(n);
  for (Index i = 0; i < n; ++i) out.labels[i] = i % classes;
  shuffle(out.labels, rng);
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double p = out.labels[i] == out.labels[j] ? p_in : p_out;
      if (rng.uniform() < p) edges.push_back({i, j, 1.0});
    }
  out.graph = build_graph(n, edges);
  return out;
}

LabeledGraph gen_point_cloud(Index n, Index parts, Index knn_k, Rng& rng) {
  if (n < 2 || parts < 1) throw InvalidArgument("gen_point_cloud: need n >= 2 and parts >= 1");
  if (knn_k < 1 || knn_k >= n) throw InvalidArgument("gen_point_cloud: need 1 <= knn_k < n");
  Mat pos(n, 3);
  for (Index i = 0; i < n; ++i) {
    double r = 0.0;
    while (r < 1e-8) {
      for (Index c = 0; c < 3; ++c) pos(i, c) = rng.normal();
      r = pos.row(i).norm();
    }
    pos.row(i) /= r;
  }
  LabeledGraph out;
  out.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double angle = std::atan2(pos(i, 1), pos(i, 0)) + std::numbers::pi;
    out.labels[i] = std::min<Index>(parts - 1, static_cast<Index>(angle / (2.0 * std::numbers::pi) * parts));
  }
  std::vector<Edge> edges;
  std::vector<std::pair<double, Index>> dist(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) dist[j] = {j == i ? INFINITY : (pos.row(i) - pos.row(j)).squaredNorm(), j};
    std::partial_sort(dist.begin(), dist.begin() + knn_k, dist.end());
    for (Index k = 0; k < knn_k; ++k) edges.push_back({i, dist[k].second, 1.0});
  }
  Mat meta(n, 6);
  meta.leftCols(3) = pos;
  meta.rightCols(3) = pos;  // outward normal of the unit sphere
  out.graph = build_graph(n, edges, meta);
  return out;
}

WeightedGraph gen_er_weighted(Index n, double edge_p, Rng& rng) {
  if (n < 1) throw InvalidArgument("gen_er_weighted: n must be >= 1");
  if (!(edge_p > 0.0 && edge_p <= 1.0)) throw InvalidArgument("gen_er_weighted: edge_p must lie in (0,1]");
  Mat pos(n, 2);
  for (Index i = 0; i < n; ++i) {
    for (bool clash = true; clash;) {
      pos(i, 0) = rng.uniform();
      pos(i, 1) = rng.uniform();
      clash = false;
      for (Index j = 0; j < i && !clash; ++j) clash = pos.row(i) == pos.row(j);
    }
  }
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (rng.uniform() < edge_p) edges.push_back({i, j, 1.0});
  WeightedGraph out;
  out.graph = build_graph(n, edges, pos);
  const Graph& g = out.graph;
  out.x_edge.resize(g.num_edges(), 1);
  for (Index e = 0; e < g.num_edges(); ++e)
    out.x_edge(e, 0) = 1.0 / (pos.row(g.edge_u()[e]) - pos.row(g.edge_v()[e])).norm();
  return out;
}

TransportSpec sample_paths(const Graph& g, Index pl, Rng& rng) {
  if (pl < 1) throw InvalidArgument("sample_paths: pl must be >= 1");
  TransportSpec t;
  t.length = pl;
  t.nodes.reserve(static_cast<size_t>(g.num_nodes() * pl));
  const auto& rp = g.row_ptr();
  for (Index i = 0; i < g.num_nodes(); ++i) {
    Index v = i;
    t.nodes.push_back(v);
    for (Index j = 1; j < pl; ++j) {
      const Index deg = rp[v + 1] - rp[v];
      if (deg > 0) v = g.col_idx()[rp[v] + rng.below(deg)];
      t.nodes.push_back(v);
    }
  }
  return t;
}

Mat smooth_field(const Graph& g, Index cols, Index steps, Rng& rng) {
  Mat x = rng_normal(rng, g.num_nodes(), cols, 1.0);
  for (Index s = 0; s < steps; ++s) x = 0.5 * (x + apply_transition(g, x));
  x = deflate(g, x);
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(std::max<Index>(x.size(), 1)));
  if (rms > 0.0) x /= rms;
  return x;
}

Mat one_hot(const IndexList& labels, Index classes) {
  Mat out = Mat::Zero(static_cast<Index>(labels.size()), classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw InvalidArgument("one_hot: label out of range");
    out(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return out;
}

TaskKind task_kind(const DatasetSpec& spec) {
  return spec.task == "completion" || spec.task == "source" ? TaskKind::classification : TaskKind::regression;
}

void validate(const DatasetSpec& s) {
  const auto fail = [](const std::string& m) { throw InvalidArgument("dataset: " + m); };
  if (s.generator != "sbm" && s.generator != "point_cloud" && s.generator != "er_weighted")
    fail("unknown generator '" + s.generator + "'");
  if (s.task != "completion" && s.task != "source" && s.task != "transport" && s.task != "edge_recovery")
    fail("unknown task '" + s.task + "'");
  if (s.n < 2) fail("n must be >= 2");
  if (s.classes < 1) fail("classes must be >= 1");
  if (!(s.p_in >= 0 && s.p_in <= 1) || !(s.p_out >= 0 && s.p_out <= 1)) fail("p_in and p_out must lie in [0,1]");
  if (!(s.edge_p > 0 && s.edge_p <= 1)) fail("edge_p must lie in (0,1]");
  if (s.generator == "point_cloud" && (s.knn_k < 1 || s.knn_k >= s.n)) fail("knn_k must satisfy 1 <= knn_k < n");
  if (s.task == "completion" && (s.nb < 1 || s.nb * s.classes > s.n)) fail("need nb >= 1 and nb * classes <= n");
  if (s.steps < 0) fail("steps must be >= 0");
  if (s.pl < 1) fail("pl must be >= 1");
  if (s.history < 1) fail("history must be >= 1");
  if (s.source_channels < 1) fail("source_channels must be >= 1");
  if (!(s.source_fraction > 0 && s.source_fraction <= 1)) fail("source_fraction must lie in (0,1]");
  if (s.smooth_steps < 0) fail("smooth_steps must be >= 0");
  if (!(s.sigma >= 0)) fail("sigma must be >= 0");
  if (s.train < 0 || s.val < 0 || s.test < 0) fail("split sizes must be >= 0");
  if (s.task == "edge_recovery" && s.generator != "er_weighted") fail("edge_recovery needs the er_weighted generator");
  if ((s.task == "completion" || s.task == "source") && s.generator == "er_weighted")
    fail("er_weighted graphs carry no node labels");
}

Problem make_problem(const DatasetSpec& spec, Rng& rng) {
  validate(spec);
  Problem p;
  p.sigma = spec.sigma;
  p.spec.kind = task_kind(spec);

  if (spec.task == "edge_recovery") {
    WeightedGraph w = gen_er_weighted(spec.n, spec.edge_p, rng);
    p.graph = std::make_shared<const Graph>(std::move(w.graph));
    const Index n = spec.n;
    const Index active = std::max<Index>(1, static_cast<Index>(std::lround(spec.source_fraction * n)));
    EdgeDiffusionSpec e;
    e.history = spec.history;
    e.source = Mat::Zero(n, spec.source_channels);
    for (Index i : rng_choice(rng, active, n)) e.source(i, rng.below(spec.source_channels)) = 1.0;
    p.spec.op = std::move(e);
    p.x_true = std::move(w.x_edge);
  } else {
    LabeledGraph lg;
    if (spec.generator == "sbm") {
      lg = gen_sbm(spec.n, spec.classes, spec.p_in, spec.p_out, rng);
    } else if (spec.generator == "point_cloud") {
      lg = gen_point_cloud(spec.n, spec.classes, spec.knn_k, rng);
    } else {
      WeightedGraph w = gen_er_weighted(spec.n, spec.edge_p, rng);
      lg.graph = std::move(w.graph);
    }
    p.graph = std::make_shared<const Graph>(std::move(lg.graph));
    const Graph& g = *p.graph;
    if (spec.task == "completion") {
      p.x_true = one_hot(lg.labels, spec.classes);
      MaskSpec m;
      for (Index c = 0; c < spec.classes; ++c) {
        IndexList members;
        for (Index i = 0; i < g.num_nodes(); ++i)
          if (lg.labels[i] == c) members.push_back(i);
        if (static_cast<Index>(members.size()) < spec.nb)
          throw InvalidArgument("completion: class " + std::to_string(c) + " has fewer than nb nodes");
        for (Index k : rng_choice(rng, spec.nb, static_cast<Index>(members.size()))) m.indices.push_back(members[k]);
      }
      std::sort(m.indices.begin(), m.indices.end());
      p.spec.op = std::move(m);
    } else if (spec.task == "source") {
      p.x_true = one_hot(lg.labels, spec.classes);
      p.spec.op = DiffusionSpec{spec.steps};
    } else {
      p.x_true = smooth_field(g, 1, spec.smooth_steps, rng);
      TransportSpec t = sample_paths(g, spec.pl, rng);
      t.average = spec.transport_average;
      p.spec.op = std::move(t);
    }
  }
  p.d_obs = observe(*p.graph, p.spec, p.x_true, spec.sigma, rng);
  validate_problem(p);
  return p;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  validate(spec);
  Dataset ds;
  ds.spec = spec;
  const auto fill = [&](std::vector<Problem>& out, Index count, std::uint64_t offset) {
    const std::uint64_t split_seed = derive_seed(spec.seed, offset);
    for (Index i = 0; i < count; ++i) {
      Rng rng(derive_seed(split_seed, static_cast<std::uint64_t>(i)));
      out.push_back(make_problem(spec, rng));
    }
  };
  fill(ds.train, spec.train, 1);
  fill(ds.val, spec.val, 2);
  fill(ds.test, spec.test, 3);
  return ds;
}

}  // namespace grip
