#include "grip/harness.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "grip/error.hpp"

using nlohmann::json;

namespace grip {

namespace {

Mat segment_counts(std::span<const Index> seg, Index count) {
  Mat c = Mat::Zero(count, 1);
  for (Index s : seg) c(s, 0) += 1.0;
  return c;
}

Mat segment_sq_norms(const Mat& x, std::span<const Index> seg, Index count) {
  Mat c = Mat::Zero(count, 1);
  for (Index r = 0; r < x.rows(); ++r) c(seg[r], 0) += x.row(r).squaredNorm();
  return c;
}

ad::Var per_segment_mean_of_rows(const ad::Var& rows, std::span<const Index> seg, Index count) {
  return ad::div(ad::segment_sum(rows, seg, count), ad::constant(segment_counts(seg, count)));
}

ad::Var mean_over(const ad::Var& per_problem) {
  return ad::scale(ad::sum_all(per_problem), 1.0 / static_cast<double>(per_problem.rows()));
}

ad::Var row_cross_entropy_logits(const ad::Var& logits, const Mat& target) {
  return ad::neg(ad::sum_cols(ad::mul(ad::constant(target), ad::log_softmax(logits))));
}

ad::Var row_cross_entropy_probs(const ad::Var& probs, const Mat& target) {
  return ad::neg(ad::sum_cols(ad::mul(ad::constant(target), ad::log(ad::clamp_min(probs, 1e-12)))));
}

Mat softmax_rows(const Mat& x) {
  Mat p(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    double s = 0.0;
    for (Index j = 0; j < x.cols(); ++j) s += (p(i, j) = std::exp(x(i, j) - m));
    p.row(i) /= s;
  }
  return p;
}

Index argmax_row(const Mat& m, Index i) {
  Index best = 0;
  for (Index j = 1; j < m.cols(); ++j)
    if (m(i, j) > m(i, best)) best = j;
  return best;
}

std::vector<const Problem*> pointers(const std::vector<Problem>& ps, const IndexList& order, size_t from, size_t to) {
  std::vector<const Problem*> out;
  for (size_t k = from; k < to; ++k) out.push_back(&ps[static_cast<size_t>(order[k])]);
  return out;
}

std::vector<Batch> fixed_batches(const std::vector<Problem>& ps, Index batch_size) {
  IndexList order(ps.size());
  for (size_t k = 0; k < ps.size(); ++k) order[k] = static_cast<Index>(k);
  std::vector<Batch> out;
  for (size_t k = 0; k < ps.size(); k += static_cast<size_t>(batch_size)) {
    const auto ptrs = pointers(ps, order, k, std::min(ps.size(), k + static_cast<size_t>(batch_size)));
    out.push_back(make_batch(ptrs));
  }
  return out;
}

}  // namespace

LossTerms compute_loss(const Batch& b, const ad::Var& x_hat, double alpha) {
  const Problem& p = b.problem;
  if (p.x_true.rows() != x_hat.rows() || p.x_true.cols() != x_hat.cols())
    throw ShapeError("compute_loss: estimate and ground truth shapes differ");
  LossTerms t;
  ad::Var rec, fit;
  if (p.kind() == TaskKind::classification && p.target() == Target::node) {
    rec = per_segment_mean_of_rows(row_cross_entropy_logits(x_hat, p.x_true), b.state_seg, b.count);
    ad::Var pred = apply_forward(p.graph, p.spec, ad::row_softmax(x_hat));
    fit = per_segment_mean_of_rows(row_cross_entropy_probs(pred, p.d_obs), b.data_seg, b.count);
    t.recovery = mean_over(rec);
    t.datafit = mean_over(fit);
    t.total = ad::add(t.recovery, ad::scale(t.datafit, alpha));
  } else {
    const Mat xn = segment_sq_norms(p.x_true, b.state_seg, b.count);
    const Mat dn = segment_sq_norms(p.d_obs, b.data_seg, b.count);
    if ((xn.array() == 0.0).any()) throw InvalidArgument("compute_loss: all-zero ground truth in batch");
    if ((dn.array() == 0.0).any()) throw InvalidArgument("compute_loss: all-zero observation in batch");
    ad::Var e = ad::sub(x_hat, ad::constant(p.x_true));
    rec = ad::div(ad::segment_sum(ad::mul(e, e), b.state_seg, b.count), ad::constant(xn));
    ad::Var r = ad::sub(apply_forward(p.graph, p.spec, x_hat), ad::constant(p.d_obs));
    fit = ad::div(ad::segment_sum(ad::mul(r, r), b.data_seg, b.count), ad::constant(dn));
    t.recovery = mean_over(rec);
    t.datafit = mean_over(fit);
    t.total = ad::scale(ad::add(t.recovery, ad::scale(t.datafit, alpha)), 0.5);
  }
  return t;
}

double metric_nmse(const Mat& x_hat, const Mat& x) {
  if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw ShapeError("metric_nmse: shape mismatch");
  const double den = x.squaredNorm();
  if (den == 0.0) throw InvalidArgument("metric_nmse: all-zero target");
  return (x_hat - x).squaredNorm() / den;
}

double metric_accuracy(const Mat& logits, const Mat& target) {
  if (logits.rows() != target.rows() || logits.cols() != target.cols())
    throw ShapeError("metric_accuracy: shape mismatch");
  if (logits.rows() == 0) throw InvalidArgument("metric_accuracy: no rows");
  Index hits = 0;
  for (Index i = 0; i < logits.rows(); ++i) hits += argmax_row(logits, i) == argmax_row(target, i);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(logits.rows());
}

Metrics problem_metrics(const Problem& p, const Mat& x_hat) {
  Metrics m;
  if (p.kind() == TaskKind::classification && p.target() == Target::node) {
    m["accuracy"] = metric_accuracy(x_hat, p.x_true);
    ad::NoGradGuard off;
    m["recovery_ce"] = row_cross_entropy_logits(ad::constant(x_hat), p.x_true).value().mean();
    const Mat pred = apply_forward(p.g(), p.spec, softmax_rows(x_hat));
    m["datafit_ce"] = row_cross_entropy_probs(ad::constant(pred), p.d_obs).value().mean();
  } else {
    m["recovery_nmse"] = metric_nmse(x_hat, p.x_true);
    m["datafit_nmse"] = metric_nmse(apply_forward(p.g(), p.spec, x_hat), p.d_obs);
  }
  return m;
}

Metrics mean_metrics(const std::vector<Metrics>& per_problem) {
  Metrics out;
  if (per_problem.empty()) return out;
  for (const auto& m : per_problem)
    for (const auto& [k, v] : m) out[k] += v;
  for (auto& [k, v] : out) v /= static_cast<double>(per_problem.size());
  return out;
}

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (c.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (!(c.lr >= 0.0) || !(c.wd >= 0.0) || !(c.alpha >= 0.0)) throw InvalidArgument("train: lr, wd, alpha must be >= 0");
  if (c.max_patience < 1) throw InvalidArgument("train: max_patience must be >= 1");
  if (!(c.val_improvement > 0.0) || !(c.acc_improvement > 0.0))
    throw InvalidArgument("train: improvement thresholds must be > 0");
}

json to_json(const RunRecord& r) {
  json j;
  j["config"] = r.config;
  j["task"] = r.task;
  j["model"] = r.model;
  j["setting"] = r.setting;
  j["seed"] = r.seed;
  json ep = json::array();
  for (const auto& e : r.epochs)
    ep.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"monitored", e.monitored}});
  j["epochs"] = std::move(ep);
  j["best_epoch"] = r.best_epoch;
  j["test_metrics"] = r.test_metrics;
  j["param_count"] = r.param_count;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  r.config = j.value("config", json::object());
  r.task = j.at("task").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.setting = j.at("setting").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("epochs"))
    r.epochs.push_back({e.at("epoch").get<Index>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                        e.at("monitored").get<double>()});
  r.best_epoch = j.at("best_epoch").get<Index>();
  r.test_metrics = j.at("test_metrics").get<Metrics>();
  r.param_count = j.at("param_count").get<Index>();
  r.wall_seconds = j.value("wall_seconds", 0.0);
  return r;
}

std::vector<Metrics> evaluate_learned(const SolverNet& net, const std::vector<Problem>& problems, Index batch_size) {
  ad::NoGradGuard off;
  std::vector<Metrics> out;
  for (const Batch& b : fixed_batches(problems, batch_size)) {
    const Mat x = solve(b, net).value();
    for (Index k = 0; k < b.count; ++k) out.push_back(problem_metrics(problems[out.size()], state_block(b, x, k)));
  }
  return out;
}

double mean_loss(const SolverNet& net, const std::vector<Problem>& problems, Index batch_size, double alpha) {
  ad::NoGradGuard off;
  double total = 0.0;
  for (const Batch& b : fixed_batches(problems, batch_size))
    total += compute_loss(b, solve(b, net), alpha).total.item() * static_cast<double>(b.count);
  return problems.empty() ? 0.0 : total / static_cast<double>(problems.size());
}

std::vector<Metrics> evaluate_classical(const std::vector<Problem>& problems, const ClassicalConfig& cfg) {
  std::vector<Metrics> out;
  for (const Problem& p : problems) out.push_back(problem_metrics(p, solve_variational_classical(p, cfg).x));
  return out;
}

RunRecord train(SolverNet& net, const Dataset& data, const TrainConfig& cfg) {
  validate(cfg);
  if (data.train.empty()) throw InvalidArgument("train: empty training split");
  const auto start = std::chrono::steady_clock::now();
  const bool cls = task_kind(data.spec) == TaskKind::classification;
  RunRecord rec;
  rec.task = data.spec.task;
  rec.model = to_string(net.cfg.solver);
  rec.seed = cfg.seed;
  rec.param_count = net.params.num_scalars();

  Rng order_rng(derive_seed(cfg.seed, 0x5eed));
  nn::AdamConfig adam;
  adam.lr = cfg.lr;
  adam.wd = cfg.wd;
  nn::AdamState state = nn::adam_init(net.params);

  IndexList order(data.train.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<Index>(k);
  double best = cls ? -INFINITY : INFINITY;
  std::vector<Mat> best_params = net.params.values();
  Index patience = 0;

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (Index i = static_cast<Index>(order.size()) - 1; i > 0; --i) std::swap(order[i], order[order_rng.below(i + 1)]);
    double train_loss = 0.0;
    Index batch_id = 0;
    for (size_t k = 0; k < order.size(); k += static_cast<size_t>(cfg.batch_size), ++batch_id) {
      const auto ptrs = pointers(data.train, order, k, std::min(order.size(), k + static_cast<size_t>(cfg.batch_size)));
      const Batch b = make_batch(ptrs);
      net.params.zero_grad();
      LossTerms loss = compute_loss(b, solve(b, net), cfg.alpha);
      const double value = loss.total.item();
      if (!std::isfinite(value))
        throw NumericalError("train: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_id), batch_id);
      train_loss += value * static_cast<double>(b.count);
      ad::backward(loss.total);
      nn::adam_step(net.params, state, adam);
    }
    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = train_loss / static_cast<double>(order.size());
    er.val_loss = data.val.empty() ? er.train_loss : mean_loss(net, data.val, cfg.batch_size, cfg.alpha);
    bool improved;
    if (cls) {
      const auto& monitor_set = cfg.strict ? data.val : data.test;
      er.monitored = mean_metrics(evaluate_learned(net, monitor_set.empty() ? data.train : monitor_set, cfg.batch_size))
                         .at("accuracy");
      improved = er.monitored >= best + cfg.acc_improvement || !std::isfinite(best);
    } else {
      er.monitored = er.val_loss;
      improved = er.monitored < best * (1.0 - cfg.val_improvement) || !std::isfinite(best);
    }
    rec.epochs.push_back(er);
    if (improved) {
      best = er.monitored;
      best_params = net.params.values();
      rec.best_epoch = epoch;
      patience = 0;
    } else if (++patience >= cfg.max_patience) {
      break;
    }
  }
  net.params.set_values(best_params);
  if (!data.test.empty()) rec.test_metrics = mean_metrics(evaluate_learned(net, data.test, cfg.batch_size));
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<MetricRow> aggregate(const std::string& task, const std::string& model, const std::string& setting,
                                 const std::vector<Metrics>& per_seed) {
  std::vector<MetricRow> rows;
  if (per_seed.empty()) return rows;
  for (const auto& [name, unused] : per_seed.front()) {
    (void)unused;
    MetricRow r{task, model, setting, name, 0.0, 0.0, static_cast<Index>(per_seed.size())};
    // Welford: identical values give mean == value and std == 0 exactly,
    // which a plain sum / count does not guarantee.
    double m2 = 0.0, k = 0.0;
    for (const auto& m : per_seed) {
      const double v = m.at(name);
      k += 1.0;
      const double delta = v - r.mean;
      r.mean += delta / k;
      m2 += delta * (v - r.mean);
    }
    if (per_seed.size() > 1) r.std = std::sqrt(m2 / (k - 1.0));
    rows.push_back(r);
  }
  return rows;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "task,model,setting,metric,mean,std,seed_count\n";
  for (const auto& r : rows)
    os << r.task << ',' << r.model << ',' << r.setting << ',' << r.metric << ',' << r.mean << ',' << r.std << ','
       << r.seed_count << '\n';
  return os.str();
}

std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "task,model,setting,metric,mean,std,seed_count")
    throw IoError("metrics csv: unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw IoError("metrics csv: expected 7 fields in '" + line + "'");
    try {
      rows.push_back({f[0], f[1], f[2], f[3], std::stod(f[4]), std::stod(f[5]), std::stoll(f[6])});
    } catch (const std::exception&) {
      throw IoError("metrics csv: bad number in '" + line + "'");
    }
  }
  return rows;
}

std::string report_csv(const std::vector<MetricRow>& rows) {
  std::set<std::string> metrics;
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  std::map<std::tuple<std::string, std::string, std::string>, std::map<std::string, const MetricRow*>> table;
  for (const auto& r : rows) {
    metrics.insert(r.metric);
    const auto key = std::make_tuple(r.task, r.model, r.setting);
    if (!table.count(key)) keys.push_back(key);
    table[key][r.metric] = &r;
  }
  std::ostringstream os;
  os.precision(17);
  os << "task,model,setting";
  for (const auto& m : metrics) os << ',' << m << "_mean," << m << "_std";
  os << ",seed_count\n";
  for (const auto& key : keys) {
    const auto& cells = table[key];
    os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key);
    Index seeds = 0;
    for (const auto& m : metrics) {
      auto it = cells.find(m);
      if (it == cells.end()) {
        os << ",,";
      } else {
        os << ',' << it->second->mean << ',' << it->second->std;
        seeds = std::max(seeds, it->second->seed_count);
      }
    }
    os << ',' << seeds << '\n';
  }
  return os.str();
}

}  // namespace grip
