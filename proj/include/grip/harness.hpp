#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "grip/classical.hpp"
#include "grip/learned.hpp"
#include "grip/synth.hpp"

namespace grip {

// Per-batch losses: each problem's terms are normalised on their own, then
// averaged over the problems of the batch.
struct LossTerms {
  ad::Var total;
  ad::Var recovery;
  ad::Var datafit;
};

// classification: total = CE(x, x_hat) + alpha CE(d, F(softmax x_hat))
// regression:     total = (nMSE(x_hat, x) + alpha nMSE(F(x_hat), d)) / 2
LossTerms compute_loss(const Batch& b, const ad::Var& x_hat, double alpha);

double metric_nmse(const Mat& x_hat, const Mat& x);
// Percentage of rows whose argmax matches the argmax of `target` (ties go to
// the lowest index).
double metric_accuracy(const Mat& logits, const Mat& target);

using Metrics = std::map<std::string, double>;

// classification: accuracy, recovery_ce, datafit_ce; regression:
// recovery_nmse, datafit_nmse. `x_hat` holds logits for classification.
Metrics problem_metrics(const Problem& p, const Mat& x_hat);
Metrics mean_metrics(const std::vector<Metrics>& per_problem);

struct TrainConfig {
  Index epochs = 100;
  Index batch_size = 10;
  double lr = 1e-3;
  double wd = 0.0;
  double alpha = 1.0;
  Index max_patience = 10;
  double val_improvement = 0.005;  // relative, regression
  double acc_improvement = 1.0;    // points, classification
  bool strict = false;             // classification monitors val instead of test accuracy
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double monitored = 0.0;
};

struct RunRecord {
  nlohmann::json config;
  std::string task;
  std::string model;
  std::string setting;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  Index best_epoch = 0;
  Metrics test_metrics;
  Index param_count = 0;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

// Per-problem metrics of a trained net, solved in batches (no recording).
std::vector<Metrics> evaluate_learned(const SolverNet& net, const std::vector<Problem>& problems, Index batch_size);
// Mean loss of a net over problems.
double mean_loss(const SolverNet& net, const std::vector<Problem>& problems, Index batch_size, double alpha);

std::vector<Metrics> evaluate_classical(const std::vector<Problem>& problems, const ClassicalConfig& cfg);

// Mini-batch Adam with early stopping; restores the best parameters before
// the final test evaluation.
RunRecord train(SolverNet& net, const Dataset& data, const TrainConfig& cfg);

struct MetricRow {
  std::string task, model, setting, metric;
  double mean = 0.0;
  double std = 0.0;
  Index seed_count = 0;
};

// Mean and sample standard deviation over seeds (0 for a single seed), one
// row per metric name.
std::vector<MetricRow> aggregate(const std::string& task, const std::string& model, const std::string& setting,
                                 const std::vector<Metrics>& per_seed);

// task,model,setting,metric,mean,std,seed_count
std::string metrics_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> parse_metrics_csv(const std::string& text);

// One row per (task, model, setting), one "<metric>_mean"/"<metric>_std"
// column pair per metric name, columns sorted by name.
std::string report_csv(const std::vector<MetricRow>& rows);

}  // namespace grip
