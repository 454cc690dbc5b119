#include "grip/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "grip/error.hpp"
#include "grip/io.hpp"

namespace grip {

std::string ExperimentConfig::model_name() const {
  if (solver == "classical") return to_string(classical.regularizer) + "_reg";
  return solver + "_gnn";
}

std::string ExperimentConfig::setting_label() const {
  if (!setting.empty()) return setting;
  const auto& d = dataset;
  if (d.task == "completion") return "nb=" + std::to_string(d.nb);
  if (d.task == "source") return "k=" + std::to_string(d.steps);
  if (d.task == "transport") return "pl=" + std::to_string(d.pl);
  return "H=" + std::to_string(d.history);
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) bad_value(key, text, "a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& t) {
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(key, t, "true or false");
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(Index v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string& name, const std::string& value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T, class Acc>
Field number(const char* section, const char* key, Acc acc) {
  return {section, key,
          [acc](ExperimentConfig& c, const std::string& name, const std::string& v) {
            acc(c) = parse_number<T>(name, v);
          },
          [acc](const ExperimentConfig& c) { return fmt(acc(const_cast<ExperimentConfig&>(c))); }};
}

template <class Acc>
Field boolean(const char* section, const char* key, Acc acc) {
  return {section, key,
          [acc](ExperimentConfig& c, const std::string& name, const std::string& v) { acc(c) = parse_bool(name, v); },
          [acc](const ExperimentConfig& c) { return fmt(acc(const_cast<ExperimentConfig&>(c))); }};
}

template <class Acc>
Field text(const char* section, const char* key, Acc acc) {
  return {section, key, [acc](ExperimentConfig& c, const std::string&, const std::string& v) { acc(c) = v; },
          [acc](const ExperimentConfig& c) { return acc(const_cast<ExperimentConfig&>(c)); }};
}

#define GRIP_ACC(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back(text("dataset", "path", GRIP_ACC(c.dataset_path)));
    f.push_back(text("dataset", "generator", GRIP_ACC(c.dataset.generator)));
    f.push_back(number<Index>("dataset", "n", GRIP_ACC(c.dataset.n)));
    f.push_back(number<Index>("dataset", "classes", GRIP_ACC(c.dataset.classes)));
    f.push_back(number<double>("dataset", "p_in", GRIP_ACC(c.dataset.p_in)));
    f.push_back(number<double>("dataset", "p_out", GRIP_ACC(c.dataset.p_out)));
    f.push_back(number<Index>("dataset", "knn_k", GRIP_ACC(c.dataset.knn_k)));
    f.push_back(number<double>("dataset", "edge_p", GRIP_ACC(c.dataset.edge_p)));
    f.push_back(text("dataset", "task", GRIP_ACC(c.dataset.task)));
    f.push_back(number<Index>("dataset", "nb", GRIP_ACC(c.dataset.nb)));
    f.push_back(number<Index>("dataset", "steps", GRIP_ACC(c.dataset.steps)));
    f.push_back(number<Index>("dataset", "pl", GRIP_ACC(c.dataset.pl)));
    f.push_back(boolean("dataset", "transport_average", GRIP_ACC(c.dataset.transport_average)));
    f.push_back(number<Index>("dataset", "smooth_steps", GRIP_ACC(c.dataset.smooth_steps)));
    f.push_back(number<Index>("dataset", "history", GRIP_ACC(c.dataset.history)));
    f.push_back(number<Index>("dataset", "source_channels", GRIP_ACC(c.dataset.source_channels)));
    f.push_back(number<double>("dataset", "source_fraction", GRIP_ACC(c.dataset.source_fraction)));
    f.push_back(number<double>("dataset", "sigma", GRIP_ACC(c.dataset.sigma)));
    f.push_back(number<Index>("dataset", "train", GRIP_ACC(c.dataset.train)));
    f.push_back(number<Index>("dataset", "val", GRIP_ACC(c.dataset.val)));
    f.push_back(number<Index>("dataset", "test", GRIP_ACC(c.dataset.test)));
    f.push_back(number<std::uint64_t>("dataset", "seed", GRIP_ACC(c.dataset.seed)));

    f.push_back(text("solver", "kind", GRIP_ACC(c.solver)));
    f.push_back({"solver", "regularizer",
                 [](ExperimentConfig& c, const std::string& name, const std::string& v) {
                   try {
                     c.classical.regularizer = regularizer_from_string(v);
                   } catch (const InvalidArgument&) {
                     bad_value(name, v, "laplacian or tikhonov");
                   }
                 },
                 [](const ExperimentConfig& c) { return to_string(c.classical.regularizer); }});
    f.push_back(number<double>("solver", "alpha", GRIP_ACC(c.classical.alpha)));
    f.push_back(number<double>("solver", "step_size", GRIP_ACC(c.classical.mu)));
    f.push_back(number<Index>("solver", "max_iter", GRIP_ACC(c.classical.max_iter)));
    f.push_back(number<double>("solver", "stop_nmse", GRIP_ACC(c.classical.stop_nmse)));
    f.push_back(number<double>("solver", "pinv_tol", GRIP_ACC(c.classical.pinv_tol)));
    f.push_back(number<Index>("solver", "pinv_max_iter", GRIP_ACC(c.classical.pinv_max_iter)));
    f.push_back(number<Index>("solver", "solve_iter", GRIP_ACC(c.unrolled.solve_iter)));
    f.push_back(number<Index>("solver", "cgls_iter", GRIP_ACC(c.unrolled.cgls_iter)));
    f.push_back(number<Index>("solver", "channels", GRIP_ACC(c.unrolled.channels)));
    f.push_back(number<Index>("solver", "layers", GRIP_ACC(c.unrolled.layers)));
    f.push_back(number<double>("solver", "mu", GRIP_ACC(c.unrolled.mu)));
    f.push_back(boolean("solver", "share_params", GRIP_ACC(c.unrolled.share_params)));
    f.push_back(boolean("solver", "use_meta", GRIP_ACC(c.unrolled.use_meta)));
    f.push_back(number<Index>("solver", "time_dims", GRIP_ACC(c.unrolled.time_dims)));
    f.push_back(number<double>("solver", "init_out_scale", GRIP_ACC(c.unrolled.init_out_scale)));

    f.push_back(number<Index>("train", "epochs", GRIP_ACC(c.train.epochs)));
    f.push_back(number<Index>("train", "batch_size", GRIP_ACC(c.train.batch_size)));
    f.push_back(number<double>("train", "lr", GRIP_ACC(c.train.lr)));
    f.push_back(number<double>("train", "wd", GRIP_ACC(c.train.wd)));
    f.push_back(number<double>("train", "alpha", GRIP_ACC(c.train.alpha)));
    f.push_back(number<Index>("train", "max_patience", GRIP_ACC(c.train.max_patience)));
    f.push_back(number<double>("train", "val_improvement", GRIP_ACC(c.train.val_improvement)));
    f.push_back(number<double>("train", "acc_improvement", GRIP_ACC(c.train.acc_improvement)));
    f.push_back(boolean("train", "strict", GRIP_ACC(c.train.strict)));
    f.push_back({"train", "seeds",
                 [](ExperimentConfig& c, const std::string& name, const std::string& v) {
                   c.seeds.clear();
                   std::stringstream ss(v);
                   for (std::string item; std::getline(ss, item, ',');) {
                     item.erase(0, item.find_first_not_of(' '));
                     item.erase(item.find_last_not_of(' ') + 1);
                     c.seeds.push_back(parse_number<std::uint64_t>(name, item));
                   }
                   if (c.seeds.empty()) bad_value(name, v, "a comma-separated list of seeds");
                 },
                 [](const ExperimentConfig& c) {
                   std::string s;
                   for (size_t k = 0; k < c.seeds.size(); ++k) s += (k ? "," : "") + std::to_string(c.seeds[k]);
                   return s;
                 }});

    f.push_back(text("output", "dir", GRIP_ACC(c.out_dir)));
    f.push_back(text("output", "setting", GRIP_ACC(c.setting)));
    f.push_back(boolean("output", "traces", GRIP_ACC(c.write_traces)));
    return f;
  }();
  return fields;
}

#undef GRIP_ACC

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : schema())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

void set_field(ExperimentConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  const Field* f = find_field(section, key);
  if (!f) throw ConfigError("unknown config key " + section + "." + key);
  f->set(cfg, section + "." + key, value);
}

}  // namespace

void validate(const ExperimentConfig& c) {
  try {
    validate(c.dataset);
    if (c.solver != "classical") solver_kind_from_string(c.solver);
    validate(c.classical);
    validate(c.unrolled);
    validate(c.train);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (c.seeds.empty()) throw ConfigError("train.seeds must list at least one seed");
  if (c.out_dir.empty()) throw ConfigError("output.dir must not be empty");
  if (c.setting.find(',') != std::string::npos) throw ConfigError("output.setting must not contain commas");
}

ExperimentConfig parse_config(const std::string& ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (section != "dataset" && section != "solver" && section != "train" && section != "output")
      throw ConfigError("unknown config section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) set_field(cfg, section, key, value.data());
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(io::read_file(path));
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  set_field(cfg, assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1), assignment.substr(eq + 1));
}

std::string to_ini(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : schema()) {
    if (f.section != section) {
      os << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
      section = f.section;
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace grip
