#include "grip/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "grip/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grip::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_matrix(const std::string& path, const Mat& m) {
  std::string out(16, '\0');
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows()), cols = static_cast<std::uint64_t>(m.cols());
  std::memcpy(out.data(), &rows, 8);
  std::memcpy(out.data() + 8, &cols, 8);
  out.append(reinterpret_cast<const char*>(m.data()), static_cast<size_t>(m.size()) * sizeof(double));
  write_file_atomic(path, out);
}

Mat read_matrix(const std::string& path) {
  const std::string raw = read_file(path);
  if (raw.size() < 16) throw IoError(path + ": truncated matrix header");
  std::uint64_t rows = 0, cols = 0;
  std::memcpy(&rows, raw.data(), 8);
  std::memcpy(&cols, raw.data() + 8, 8);
  if (raw.size() != 16 + rows * cols * sizeof(double)) throw IoError(path + ": payload size does not match header");
  Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
  if (m.size() > 0) std::memcpy(m.data(), raw.data() + 16, raw.size() - 16);
  return m;
}

json spec_to_json(const ForwardSpec& spec) {
  json j;
  j["variant"] = spec.name();
  j["kind"] = spec.kind == TaskKind::classification ? "classification" : "regression";
  j["target"] = spec.linear() ? "node" : "edge";
  if (const auto* m = std::get_if<MaskSpec>(&spec.op)) {
    j["indices"] = m->indices;
  } else if (const auto* d = std::get_if<DiffusionSpec>(&spec.op)) {
    j["steps"] = d->steps;
  } else if (const auto* t = std::get_if<TransportSpec>(&spec.op)) {
    j["length"] = t->length;
    j["average"] = t->average;
    json paths = json::array();
    for (Index p = 0; p < t->num_paths(); ++p)
      paths.push_back(IndexList(t->nodes.begin() + p * t->length, t->nodes.begin() + (p + 1) * t->length));
    j["paths"] = std::move(paths);
  } else {
    j["history"] = std::get<EdgeDiffusionSpec>(spec.op).history;
  }
  return j;
}

ForwardSpec spec_from_json(const json& j) {
  try {
    ForwardSpec s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "classification" && kind != "regression") throw IoError("spec.json: unknown kind " + kind);
    s.kind = kind == "classification" ? TaskKind::classification : TaskKind::regression;
    const std::string v = j.at("variant").get<std::string>();
    if (v == "mask") {
      s.op = MaskSpec{j.at("indices").get<IndexList>()};
    } else if (v == "diffusion") {
      s.op = DiffusionSpec{j.at("steps").get<Index>()};
    } else if (v == "transport") {
      TransportSpec t;
      t.length = j.at("length").get<Index>();
      t.average = j.at("average").get<bool>();
      for (const auto& row : j.at("paths")) {
        const auto path = row.get<IndexList>();
        if (static_cast<Index>(path.size()) != t.length) throw IoError("spec.json: path of the wrong length");
        t.nodes.insert(t.nodes.end(), path.begin(), path.end());
      }
      s.op = std::move(t);
    } else if (v == "edge_diffusion") {
      EdgeDiffusionSpec e;
      e.history = j.at("history").get<Index>();
      s.op = std::move(e);
    } else {
      throw IoError("spec.json: unknown variant " + v);
    }
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("spec.json: ") + e.what());
  }
}

void write_problem(const std::string& dir, const Problem& p) {
  validate_problem(p);
  fs::create_directories(dir);
  {
    const std::string tmp = dir + "/graph.txt.tmp";
    write_graph_text(p.g(), tmp);
    fs::rename(tmp, dir + "/graph.txt");
  }
  json j = spec_to_json(p.spec);
  j["sigma"] = p.sigma;
  write_file_atomic(dir + "/spec.json", j.dump(2) + "\n");
  write_matrix(dir + "/d_obs.bin", p.d_obs);
  if (p.x_true.size() > 0) write_matrix(dir + "/x_true.bin", p.x_true);
  if (const auto* e = std::get_if<EdgeDiffusionSpec>(&p.spec.op)) write_matrix(dir + "/x0.bin", e->source);
}

Problem read_problem(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("missing problem directory " + dir);
  Problem p;
  p.graph = std::make_shared<const Graph>(read_graph_text(dir + "/graph.txt"));
  json j;
  try {
    j = json::parse(read_file(dir + "/spec.json"));
  } catch (const json::exception& e) {
    throw IoError(dir + "/spec.json: " + e.what());
  }
  p.spec = spec_from_json(j);
  p.sigma = j.value("sigma", 0.0);
  if (auto* e = std::get_if<EdgeDiffusionSpec>(&p.spec.op)) e->source = read_matrix(dir + "/x0.bin");
  p.d_obs = read_matrix(dir + "/d_obs.bin");
  if (fs::exists(dir + "/x_true.bin")) p.x_true = read_matrix(dir + "/x_true.bin");
  validate_problem(p);
  return p;
}

json dataset_spec_to_json(const DatasetSpec& s) {
  return json{{"generator", s.generator},
              {"n", s.n},
              {"classes", s.classes},
              {"p_in", s.p_in},
              {"p_out", s.p_out},
              {"knn_k", s.knn_k},
              {"edge_p", s.edge_p},
              {"task", s.task},
              {"nb", s.nb},
              {"steps", s.steps},
              {"pl", s.pl},
              {"transport_average", s.transport_average},
              {"smooth_steps", s.smooth_steps},
              {"history", s.history},
              {"source_channels", s.source_channels},
              {"source_fraction", s.source_fraction},
              {"sigma", s.sigma},
              {"train", s.train},
              {"val", s.val},
              {"test", s.test},
              {"seed", s.seed}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  try {
    DatasetSpec s;
    s.generator = j.at("generator").get<std::string>();
    s.n = j.at("n").get<Index>();
    s.classes = j.at("classes").get<Index>();
    s.p_in = j.at("p_in").get<double>();
    s.p_out = j.at("p_out").get<double>();
    s.knn_k = j.at("knn_k").get<Index>();
    s.edge_p = j.at("edge_p").get<double>();
    s.task = j.at("task").get<std::string>();
    s.nb = j.at("nb").get<Index>();
    s.steps = j.at("steps").get<Index>();
    s.pl = j.at("pl").get<Index>();
    s.transport_average = j.at("transport_average").get<bool>();
    s.smooth_steps = j.at("smooth_steps").get<Index>();
    s.history = j.at("history").get<Index>();
    s.source_channels = j.at("source_channels").get<Index>();
    s.source_fraction = j.at("source_fraction").get<double>();
    s.sigma = j.at("sigma").get<double>();
    s.train = j.at("train").get<Index>();
    s.val = j.at("val").get<Index>();
    s.test = j.at("test").get<Index>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("dataset spec: ") + e.what());
  }
}

namespace {

std::string sample_name(Index i) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

const char* kSplits[3] = {"train", "val", "test"};

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  json index;
  index["spec"] = dataset_spec_to_json(ds.spec);
  const std::vector<Problem>* parts[3] = {&ds.train, &ds.val, &ds.test};
  for (int s = 0; s < 3; ++s) {
    json names = json::array();
    for (Index i = 0; i < static_cast<Index>(parts[s]->size()); ++i) {
      const std::string rel = std::string(kSplits[s]) + "/" + sample_name(i);
      write_problem(dir + "/" + rel, (*parts[s])[i]);
      names.push_back(rel);
    }
    index["splits"][kSplits[s]] = std::move(names);
  }
  write_file_atomic(dir + "/index.json", index.dump(2) + "\n");
}

Dataset read_dataset(const std::string& dir) {
  const std::string path = dir + "/index.json";
  if (!fs::exists(path)) throw IoError("missing dataset index " + path);
  json index;
  try {
    index = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  Dataset ds;
  ds.spec = dataset_spec_from_json(index.at("spec"));
  std::vector<Problem>* parts[3] = {&ds.train, &ds.val, &ds.test};
  for (int s = 0; s < 3; ++s) {
    if (!index["splits"].contains(kSplits[s])) continue;
    for (const auto& rel : index["splits"][kSplits[s]]) parts[s]->push_back(read_problem(dir + "/" + rel.get<std::string>()));
  }
  return ds;
}

}  // namespace grip::io
