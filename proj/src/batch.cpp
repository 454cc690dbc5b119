#include "grip/batch.hpp"

#include "grip/error.hpp"

namespace grip {

Batch make_batch(std::span<const Problem* const> problems) {
  if (problems.empty()) throw InvalidArgument("make_batch: no problems");
  const Problem& first = *problems.front();
  const Index variant = static_cast<Index>(first.spec.op.index());
  Batch b;
  b.count = static_cast<Index>(problems.size());
  std::vector<const Graph*> graphs;
  for (const Problem* p : problems) {
    if (static_cast<Index>(p->spec.op.index()) != variant || p->kind() != first.kind())
      throw InvalidArgument("make_batch: problems use different forward operators");
    if (p->d_obs.cols() != first.d_obs.cols() || p->x_true.cols() != first.x_true.cols())
      throw ShapeError("make_batch: state or data widths differ");
    graphs.push_back(p->graph.get());
  }
  auto g = std::make_shared<const Graph>(disjoint_union(graphs));
  const Index N = g->num_nodes();

  b.node_offset.push_back(0);
  b.state_offset.push_back(0);
  for (Index k = 0; k < b.count; ++k) {
    const Problem& p = *problems[k];
    b.node_offset.push_back(b.node_offset.back() + p.g().num_nodes());
    b.state_offset.push_back(b.state_offset.back() + state_rows(p.g(), p.spec));
    for (Index i = 0; i < p.g().num_nodes(); ++i) b.node_seg.push_back(k);
    for (Index i = 0; i < state_rows(p.g(), p.spec); ++i) b.state_seg.push_back(k);
  }

  Problem& u = b.problem;
  u.graph = g;
  u.spec.kind = first.kind();
  u.sigma = first.sigma;
  const Index dc = first.d_obs.cols();
  const Index total_data = [&] {
    Index t = 0;
    for (const Problem* p : problems) t += p->d_obs.rows();
    return t;
  }();
  u.d_obs = Mat(total_data, dc);
  const bool has_truth = first.x_true.size() > 0;
  if (has_truth) u.x_true = Mat(b.state_offset.back(), first.x_true.cols());

  if (std::holds_alternative<EdgeDiffusionSpec>(first.spec.op)) {
    const auto& e0 = std::get<EdgeDiffusionSpec>(first.spec.op);
    EdgeDiffusionSpec e;
    e.history = e0.history;
    e.source = Mat(N, e0.source.cols());
    b.data_seg.assign(static_cast<size_t>(e.history * N), 0);
    for (Index k = 0; k < b.count; ++k) {
      const Problem& p = *problems[k];
      const auto& ek = std::get<EdgeDiffusionSpec>(p.spec.op);
      if (ek.history != e.history || ek.source.cols() != e.source.cols())
        throw ShapeError("make_batch: edge problems differ in history or source width");
      const Index n = p.g().num_nodes();
      const Index off = b.node_offset[k];
      e.source.middleRows(off, n) = ek.source;
      for (Index h = 0; h < e.history; ++h) {
        u.d_obs.middleRows(h * N + off, n) = p.d_obs.middleRows(h * n, n);
        for (Index i = 0; i < n; ++i) b.data_seg[h * N + off + i] = k;
      }
    }
    u.spec.op = std::move(e);
  } else {
    Index row = 0;
    for (Index k = 0; k < b.count; ++k) {
      const Problem& p = *problems[k];
      u.d_obs.middleRows(row, p.d_obs.rows()) = p.d_obs;
      for (Index i = 0; i < p.d_obs.rows(); ++i) b.data_seg.push_back(k);
      row += p.d_obs.rows();
    }
    if (std::holds_alternative<MaskSpec>(first.spec.op)) {
      MaskSpec m;
      for (Index k = 0; k < b.count; ++k)
        for (Index i : std::get<MaskSpec>(problems[k]->spec.op).indices) m.indices.push_back(i + b.node_offset[k]);
      u.spec.op = std::move(m);
    } else if (std::holds_alternative<DiffusionSpec>(first.spec.op)) {
      const Index steps = std::get<DiffusionSpec>(first.spec.op).steps;
      for (const Problem* p : problems)
        if (std::get<DiffusionSpec>(p->spec.op).steps != steps)
          throw InvalidArgument("make_batch: diffusion problems differ in step count");
      u.spec.op = DiffusionSpec{steps};
    } else {
      const auto& t0 = std::get<TransportSpec>(first.spec.op);
      TransportSpec t;
      t.length = t0.length;
      t.average = t0.average;
      for (Index k = 0; k < b.count; ++k) {
        const auto& tk = std::get<TransportSpec>(problems[k]->spec.op);
        if (tk.length != t.length || tk.average != t.average)
          throw InvalidArgument("make_batch: transport problems differ in path length or convention");
        for (Index v : tk.nodes) t.nodes.push_back(v + b.node_offset[k]);
      }
      u.spec.op = std::move(t);
    }
  }
  if (has_truth)
    for (Index k = 0; k < b.count; ++k)
      u.x_true.middleRows(b.state_offset[k], b.state_offset[k + 1] - b.state_offset[k]) = problems[k]->x_true;
  return b;
}

Batch make_batch(const Problem& p) {
  const Problem* ptr = &p;
  return make_batch(std::span<const Problem* const>(&ptr, 1));
}

Mat state_block(const Batch& b, const Mat& x, Index k) {
  if (k < 0 || k >= b.count) throw InvalidArgument("state_block: problem index out of range");
  return x.middleRows(b.state_offset[k], b.state_offset[k + 1] - b.state_offset[k]);
}

}  // namespace grip
