#pragma once

#include <string>

#include "json.hpp"

#include "grip/synth.hpp"

namespace grip::io {

// Writes to "<path>.tmp" then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// u64 rows, u64 cols, rows*cols f64, all little-endian, row-major.
void write_matrix(const std::string& path, const Mat& m);
Mat read_matrix(const std::string& path);

nlohmann::json spec_to_json(const ForwardSpec& spec);
ForwardSpec spec_from_json(const nlohmann::json& j);

// Directory with graph.txt, spec.json, d_obs.bin, x_true.bin (when known)
// and x0.bin (edge diffusion source).
void write_problem(const std::string& dir, const Problem& p);
Problem read_problem(const std::string& dir);

nlohmann::json dataset_spec_to_json(const DatasetSpec& s);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// index.json lists the generator spec and split membership; problems live in
// <dir>/<split>/<NNNN>/.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

}  // namespace grip::io
