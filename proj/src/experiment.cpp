#include "grip/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "grip/error.hpp"
#include "grip/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grip {

namespace {

std::string seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.out_dir + "/seed_" + std::to_string(seed);
}

void write_resolved_config(const ExperimentConfig& cfg) {
  io::write_file_atomic(cfg.out_dir + "/config.ini", to_ini(cfg));
}

void require_classical(const ExperimentConfig& cfg, const char* cmd) {
  if (cfg.learned())
    throw ConfigError(std::string(cmd) + " runs classical baselines; solver.kind is '" + cfg.solver + "'");
}

void require_learned(const ExperimentConfig& cfg, const char* cmd) {
  if (!cfg.learned()) throw ConfigError(std::string(cmd) + " needs a learned solver (solver.kind = var, iss or prox)");
}

std::vector<Metrics> classical_per_seed(const ExperimentConfig& cfg, const Dataset& ds,
                                        std::vector<ClassicalResult>* results) {
  if (ds.test.empty()) throw ConfigError("dataset has an empty test split");
  std::vector<Metrics> per_seed;
  for (size_t s = 0; s < cfg.seeds.size(); ++s) {
    std::vector<Metrics> per_problem;
    for (const Problem& p : ds.test) {
      ClassicalResult r = solve_variational_classical(p, cfg.classical);
      per_problem.push_back(problem_metrics(p, r.x));
      if (results && s == 0) results->push_back(std::move(r));
    }
    per_seed.push_back(mean_metrics(per_problem));
  }
  return per_seed;
}

std::string sample_name(Index i) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

json shape_json(const ProblemShape& s) {
  return json{{"target", s.target == Target::edge ? "edge" : "node"},
              {"kind", s.kind == TaskKind::classification ? "classification" : "regression"},
              {"state_width", s.state_width},
              {"data_width", s.data_width},
              {"meta_width", s.meta_width},
              {"source_width", s.source_width},
              {"history", s.history}};
}

ProblemShape shape_from_json(const json& j) {
  ProblemShape s;
  s.target = j.at("target").get<std::string>() == "edge" ? Target::edge : Target::node;
  s.kind = j.at("kind").get<std::string>() == "classification" ? TaskKind::classification : TaskKind::regression;
  s.state_width = j.at("state_width").get<Index>();
  s.data_width = j.at("data_width").get<Index>();
  s.meta_width = j.at("meta_width").get<Index>();
  s.source_width = j.at("source_width").get<Index>();
  s.history = j.at("history").get<Index>();
  return s;
}

}  // namespace

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_path.empty()) return generate_dataset(cfg.dataset);
  if (!fs::exists(cfg.dataset_path + "/index.json"))
    throw IoError("missing dataset: no index.json under " + cfg.dataset_path);
  return io::read_dataset(cfg.dataset_path);
}

json model_manifest(const SolverNet& net) {
  const auto& c = net.cfg;
  return json{{"solver", to_string(c.solver)},
              {"solve_iter", c.solve_iter},
              {"cgls_iter", c.cgls_iter},
              {"channels", c.channels},
              {"layers", c.layers},
              {"mu", c.mu},
              {"share_params", c.share_params},
              {"use_meta", c.use_meta},
              {"time_dims", c.time_dims},
              {"init_out_scale", c.init_out_scale},
              {"shape", shape_json(net.shape)},
              {"param_names", net.params.names()},
              {"param_count", net.params.num_scalars()}};
}

SolverNet net_from_manifest(const json& j) {
  try {
    UnrolledConfig c;
    c.solver = solver_kind_from_string(j.at("solver").get<std::string>());
    c.solve_iter = j.at("solve_iter").get<Index>();
    c.cgls_iter = j.at("cgls_iter").get<Index>();
    c.channels = j.at("channels").get<Index>();
    c.layers = j.at("layers").get<Index>();
    c.mu = j.at("mu").get<double>();
    c.share_params = j.at("share_params").get<bool>();
    c.use_meta = j.at("use_meta").get<bool>();
    c.time_dims = j.at("time_dims").get<Index>();
    c.init_out_scale = j.at("init_out_scale").get<double>();
    Rng rng(0);
    return make_solver_net(c, shape_from_json(j.at("shape")), rng);
  } catch (const json::exception& e) {
    throw IoError(std::string("model manifest: ") + e.what());
  }
}

void cmd_gen(const ExperimentConfig& cfg) {
  const Dataset ds = generate_dataset(cfg.dataset);
  io::write_dataset(cfg.out_dir, ds);
  write_resolved_config(cfg);
  std::cout << "generated " << ds.train.size() << "/" << ds.val.size() << "/" << ds.test.size()
            << " train/val/test problems in " << cfg.out_dir << "\n";
}

void cmd_solve(const ExperimentConfig& cfg) {
  require_classical(cfg, "solve");
  const Dataset ds = load_dataset(cfg);
  std::vector<ClassicalResult> results;
  const auto per_seed = classical_per_seed(cfg, ds, &results);
  if (cfg.write_traces)
    for (size_t k = 0; k < results.size(); ++k)
      io::write_file_atomic(cfg.out_dir + "/traces/test_" + sample_name(static_cast<Index>(k)) + ".csv",
                            trace_csv(results[k].data_fit, results[k].recovery));
  io::write_file_atomic(cfg.out_dir + "/metrics.csv",
                        metrics_csv(aggregate(ds.spec.task, cfg.model_name(), cfg.setting_label(), per_seed)));
  write_resolved_config(cfg);
  std::cout << "solved " << ds.test.size() << " test problems with " << cfg.model_name() << "\n";
}

void cmd_train(const ExperimentConfig& cfg) {
  require_learned(cfg, "train");
  const Dataset ds = load_dataset(cfg);
  if (ds.train.empty()) throw ConfigError("dataset has an empty training split");
  UnrolledConfig uc = cfg.unrolled;
  uc.solver = solver_kind_from_string(cfg.solver);
  const std::string resolved = to_ini(cfg);
  std::vector<Metrics> per_seed;
  for (std::uint64_t seed : cfg.seeds) {
    Rng rng(derive_seed(seed, 0x1417));
    SolverNet net = make_solver_net(uc, shape_of(ds.train.front()), rng);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    RunRecord rec = train(net, ds, tc);
    rec.config = json{{"ini", resolved}};
    rec.model = cfg.model_name();
    rec.setting = cfg.setting_label();
    const std::string dir = seed_dir(cfg, seed);
    nn::write_checkpoint(dir + "/checkpoint.bin", net.params);
    io::write_file_atomic(dir + "/model.json", model_manifest(net).dump(2) + "\n");
    io::write_file_atomic(dir + "/run.json", to_json(rec).dump(2) + "\n");
    per_seed.push_back(rec.test_metrics);
    std::cout << "seed " << seed << ": " << rec.epochs.size() << " epochs, best " << rec.best_epoch << ", "
              << std::fixed << std::setprecision(1) << rec.wall_seconds << " s\n"
              << std::defaultfloat;
  }
  io::write_file_atomic(cfg.out_dir + "/metrics.csv",
                        metrics_csv(aggregate(ds.spec.task, cfg.model_name(), cfg.setting_label(), per_seed)));
  write_resolved_config(cfg);
}

void cmd_eval(const ExperimentConfig& cfg) {
  const Dataset ds = load_dataset(cfg);
  std::vector<Metrics> per_seed;
  if (!cfg.learned()) {
    per_seed = classical_per_seed(cfg, ds, nullptr);
  } else {
    for (std::uint64_t seed : cfg.seeds) {
      const std::string dir = seed_dir(cfg, seed);
      if (!fs::exists(dir + "/checkpoint.bin") || !fs::exists(dir + "/model.json"))
        throw IoError("missing checkpoint for seed " + std::to_string(seed) + " under " + dir);
      json manifest;
      try {
        manifest = json::parse(io::read_file(dir + "/model.json"));
      } catch (const json::exception& e) {
        throw IoError(dir + "/model.json: " + e.what());
      }
      SolverNet net = net_from_manifest(manifest);
      nn::read_checkpoint(dir + "/checkpoint.bin", net.params);
      per_seed.push_back(mean_metrics(evaluate_learned(net, ds.test, cfg.train.batch_size)));
    }
  }
  io::write_file_atomic(cfg.out_dir + "/metrics.csv",
                        metrics_csv(aggregate(ds.spec.task, cfg.model_name(), cfg.setting_label(), per_seed)));
  write_resolved_config(cfg);
}

void cmd_report(const std::string& out_dir, const std::vector<std::string>& runs) {
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<MetricRow> rows;
  for (const auto& run : runs) {
    const std::string path = run + "/metrics.csv";
    if (!fs::exists(path)) throw IoError("missing " + path);
    auto part = parse_metrics_csv(io::read_file(path));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  io::write_file_atomic(out_dir + "/report.csv", report_csv(rows));
  std::cout << "merged " << runs.size() << " runs into " << out_dir << "/report.csv\n";
}

namespace {

std::string json_escape(const std::string& s) { return json(s).dump(); }

int fail(int code, const char* kind, const std::string& message) {
  std::cerr << "{\"error\":\"" << kind << "\",\"exit\":" << code << ",\"message\":" << json_escape(message) << "}\n";
  return code;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Graph inverse problems: data generation, classical and learned solvers"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  app.add_option("--config", config_path, "INI config file");
  app.add_option("--seed", seed, "Use this single seed instead of train.seeds");
  app.add_option("--out", out_dir, "Output directory (overrides output.dir)");
  app.add_option("--override", overrides, "section.key=value, repeatable");
  const char* names[] = {"gen", "solve", "train", "eval", "report"};
  const char* help[] = {"generate a dataset", "run a classical baseline", "train a learned solver",
                        "evaluate checkpoints or baselines", "merge metrics of several runs"};
  std::vector<CLI::App*> subs;
  for (int k = 0; k < 5; ++k) subs.push_back(app.add_subcommand(names[k], help[k]));
  std::vector<std::string> runs;
  subs[4]->add_option("runs", runs, "run directories containing metrics.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitInvalidConfig, "invalid_config", e.what());
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) return fail(kExitMissingInput, "missing_input", "config not found: " + config_path);
      cfg = load_config(config_path);
    }
    for (const auto& o : overrides) apply_override(cfg, o);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
    validate(cfg);
    if (subs[0]->parsed()) cmd_gen(cfg);
    if (subs[1]->parsed()) cmd_solve(cfg);
    if (subs[2]->parsed()) cmd_train(cfg);
    if (subs[3]->parsed()) cmd_eval(cfg);
    if (subs[4]->parsed()) cmd_report(cfg.out_dir, runs);
    return kExitOk;
  } catch (const ConfigError& e) {
    return fail(kExitInvalidConfig, "invalid_config", e.what());
  } catch (const IoError& e) {
    return fail(kExitMissingInput, "missing_input", e.what());
  } catch (const NumericalError& e) {
    return fail(kExitNumerical, "numerical", e.what());
  } catch (const InvalidArgument& e) {
    return fail(kExitInvalidConfig, "invalid_config", e.what());
  } catch (const std::exception& e) {
    return fail(kExitInternal, "internal", e.what());
  }
}

}  // namespace grip
