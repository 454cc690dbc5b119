#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grip/forward.hpp"

namespace grip {

struct LabeledGraph {
  Graph graph;
  IndexList labels;
};

// Stochastic block model with balanced classes (sizes differ by at most one);
// no meta-data.
LabeledGraph gen_sbm(Index n, Index classes, double p_in, double p_out, Rng& rng);

// Points on the unit sphere cut into `parts` longitude sectors; symmetrised
// k-NN graph; meta = [xyz | unit normal]; label = sector.
LabeledGraph gen_point_cloud(Index n, Index parts, Index knn_k, Rng& rng);

struct WeightedGraph {
  Graph graph;   // binary topology, meta = 2D positions
  Mat x_edge;    // m x 1, 1 / ||pos_i - pos_j||
};

// Erdos-Renyi graph on uniform positions in the unit square.
WeightedGraph gen_er_weighted(Index n, double edge_p, Rng& rng);

// One random-walk path of length pl from every node (uniform neighbour
// steps, revisits allowed; isolated nodes repeat themselves).
TransportSpec sample_paths(const Graph& g, Index pl, Rng& rng);

// Mean-zero (per component), unit-variance low-frequency node signal:
// white noise smoothed by `steps` applications of (I + P)/2.
Mat smooth_field(const Graph& g, Index cols, Index steps, Rng& rng);

// Rows e_{label}.
Mat one_hot(const IndexList& labels, Index classes);

struct DatasetSpec {
  std::string generator = "sbm";  // sbm | point_cloud | er_weighted
  Index n = 80;
  Index classes = 6;              // sbm classes / point-cloud parts
  double p_in = 0.3;
  double p_out = 0.06;
  Index knn_k = 10;
  double edge_p = 0.05;

  std::string task = "completion";  // completion | source | transport | edge_recovery
  Index nb = 4;
  Index steps = 8;
  Index pl = 8;
  bool transport_average = true;
  Index smooth_steps = 8;
  Index history = 1;
  Index source_channels = 3;
  double source_fraction = 0.5;

  double sigma = 0.0;
  Index train = 200;
  Index val = 50;
  Index test = 50;
  std::uint64_t seed = 0;
};

void validate(const DatasetSpec& spec);
TaskKind task_kind(const DatasetSpec& spec);

// One problem drawn from `rng`.
Problem make_problem(const DatasetSpec& spec, Rng& rng);

struct Dataset {
  DatasetSpec spec;
  std::vector<Problem> train;
  std::vector<Problem> val;
  std::vector<Problem> test;
};

// Split k sample i uses Rng(derive_seed(derive_seed(seed, split offset), i)).
Dataset generate_dataset(const DatasetSpec& spec);

}  // namespace grip
