#pragma once

#include <string>
#include <vector>

#include "grip/autodiff.hpp"
#include "grip/graph.hpp"
#include "grip/rng.hpp"

namespace grip::nn {

// Named trainable arrays in creation order. Names are unique.
class ParamStore {
 public:
  ad::Var add(const std::string& name, Mat value);
  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  Index size() const { return static_cast<Index>(vars_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<ad::Var>& vars() const { return vars_; }
  Index num_scalars() const;

  void zero_grad();
  // Copies of all values, in order; set_values restores them.
  std::vector<Mat> values() const;
  void set_values(const std::vector<Mat>& values);

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
};

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
Mat init_uniform(Rng& rng, Index fan_in, Index fan_out);

struct GcnParams {
  std::vector<ad::Var> weight;
  std::vector<ad::Var> bias;
  Index in_width = 0;
  Index channels = 0;
  Index out_width = 0;
  // Hidden layers 1..L-2 update h += residual_step * relu(A h W + b). With
  // step 1/(L-2) the hidden stack is a forward-Euler path over unit time, so
  // its scale does not grow with depth.
  double residual_step = 1.0;

  Index layers() const { return static_cast<Index>(weight.size()); }
};

// `layers` GCN layers: in -> channels -> ... -> channels -> out (a single
// layer maps in -> out directly). `out_scale` multiplies the last layer's
// initial weights; 0 gives a network that starts at the zero map.
GcnParams make_gcn(ParamStore& store, const std::string& prefix, Index in_width, Index channels, Index out_width,
                   Index layers, Rng& rng, double out_scale = 1.0);

// Â X W + b per layer, relu between layers, none after the last; hidden
// layers of equal width add their input back (residual).
ad::Var gcn_forward(const Graph& g, const ad::Var& x, const GcnParams& p);

struct MlpParams {
  std::vector<ad::Var> weight;
  std::vector<ad::Var> bias;
};

// widths = {in, hidden..., out}
MlpParams make_mlp(ParamStore& store, const std::string& prefix, const std::vector<Index>& widths, Rng& rng);
// affine, relu, affine, ..., affine
ad::Var mlp_forward(const ad::Var& x, const MlpParams& p);

// 1 x dims row: entry 2i = sin(t / 10000^(2i/dims)), entry 2i+1 = cos(.).
Mat time_embedding(double t, Index dims);

struct AdamConfig {
  double lr = 1e-3;
  double wd = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-3;
  bool amsgrad = true;
};

struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;
  std::vector<Mat> v_max;
  Index step = 0;
};

AdamState adam_init(const ParamStore& store);
// Reads each parameter's accumulated grad (missing grad counts as zero) and
// updates its value in place. Throws NumericalError on non-finite gradients.
void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg);

// Flat binary container: "GRIPCKPT", u64 count, then per array
// u64 name length, name bytes, u64 rows, u64 cols, rows*cols f64 (LE).
void write_checkpoint(const std::string& path, const ParamStore& store);
// Loads values into an existing store; names and shapes must match.
void read_checkpoint(const std::string& path, ParamStore& store);

}  // namespace grip::nn
