#include "grip/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "grip/error.hpp"
#include "grip/io.hpp"

namespace grip::nn {

ad::Var ParamStore::add(const std::string& name, Mat value) {
  if (contains(name)) throw InvalidArgument("duplicate parameter name: " + name);
  if (!value.allFinite()) throw InvalidArgument("non-finite initial value for " + name);
  names_.push_back(name);
  vars_.push_back(ad::param(std::move(value)));
  return vars_.back();
}

const ad::Var& ParamStore::get(const std::string& name) const {
  for (size_t k = 0; k < names_.size(); ++k)
    if (names_[k] == name) return vars_[k];
  throw InvalidArgument("unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

Index ParamStore::num_scalars() const {
  Index total = 0;
  for (const auto& v : vars_) total += v.value().size();
  return total;
}

void ParamStore::zero_grad() {
  for (auto& v : vars_) v.zero_grad();
}

std::vector<Mat> ParamStore::values() const {
  std::vector<Mat> out;
  out.reserve(vars_.size());
  for (const auto& v : vars_) out.push_back(v.value());
  return out;
}

void ParamStore::set_values(const std::vector<Mat>& values) {
  if (values.size() != vars_.size()) throw ShapeError("set_values: parameter count mismatch");
  for (size_t k = 0; k < vars_.size(); ++k) {
    Mat& dst = vars_[k].node()->value;
    if (dst.rows() != values[k].rows() || dst.cols() != values[k].cols())
      throw ShapeError("set_values: shape mismatch for " + names_[k]);
    dst = values[k];
  }
}

namespace {

Mat uniform_fill(Rng& rng, Index rows, Index cols, Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  Mat w(rows, cols);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
  return w;
}

}  // namespace

Mat init_uniform(Rng& rng, Index fan_in, Index fan_out) { return uniform_fill(rng, fan_in, fan_out, fan_in); }

GcnParams make_gcn(ParamStore& store, const std::string& prefix, Index in_width, Index channels, Index out_width,
                   Index layers, Rng& rng, double out_scale) {
  if (layers < 1 || channels < 1 || in_width < 1 || out_width < 1)
    throw InvalidArgument("make_gcn: widths and depth must be >= 1");
  GcnParams p;
  p.in_width = in_width;
  p.channels = channels;
  p.out_width = out_width;
  if (layers > 2) p.residual_step = 1.0 / static_cast<double>(layers - 2);
  for (Index l = 0; l < layers; ++l) {
    const Index fin = l == 0 ? in_width : channels;
    const Index fout = l == layers - 1 ? out_width : channels;
    Mat w = init_uniform(rng, fin, fout);
    Mat b = uniform_fill(rng, 1, fout, fin);
    if (l == layers - 1) {
      w *= out_scale;
      b *= out_scale;
    }
    const std::string tag = prefix + ".layer" + std::to_string(l);
    p.weight.push_back(store.add(tag + ".weight", std::move(w)));
    p.bias.push_back(store.add(tag + ".bias", std::move(b)));
  }
  return p;
}

ad::Var gcn_forward(const Graph& g, const ad::Var& x, const GcnParams& p) {
  if (x.cols() != p.in_width)
    throw ShapeError("gcn_forward: input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(p.in_width));
  if (x.rows() != g.num_nodes()) throw ShapeError("gcn_forward: one row per node expected");
  ad::Var h = x;
  const Index L = p.layers();
  for (Index l = 0; l < L; ++l) {
    ad::Var y = ad::add_bias(ad::graph_aggregate(g, ad::matmul(h, p.weight[l])), p.bias[l]);
    if (l == L - 1) return y;
    y = ad::relu(y);
    const bool residual = l > 0 && h.cols() == y.cols();
    h = residual ? ad::add(h, ad::scale(y, p.residual_step)) : y;
  }
  return h;
}

MlpParams make_mlp(ParamStore& store, const std::string& prefix, const std::vector<Index>& widths, Rng& rng) {
  if (widths.size() < 2) throw InvalidArgument("make_mlp: need at least input and output widths");
  MlpParams p;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::string tag = prefix + ".layer" + std::to_string(l);
    Mat w = init_uniform(rng, widths[l], widths[l + 1]);
    Mat b = uniform_fill(rng, 1, widths[l + 1], widths[l]);
    p.weight.push_back(store.add(tag + ".weight", std::move(w)));
    p.bias.push_back(store.add(tag + ".bias", std::move(b)));
  }
  return p;
}

ad::Var mlp_forward(const ad::Var& x, const MlpParams& p) {
  if (p.weight.empty()) return x;
  if (x.cols() != p.weight.front().rows()) throw ShapeError("mlp_forward: input width mismatch");
  ad::Var h = x;
  for (size_t l = 0; l < p.weight.size(); ++l) {
    h = ad::add_bias(ad::matmul(h, p.weight[l]), p.bias[l]);
    if (l + 1 < p.weight.size()) h = ad::relu(h);
  }
  return h;
}

Mat time_embedding(double t, Index dims) {
  if (dims < 0 || dims % 2 != 0) throw InvalidArgument("time_embedding: dims must be even");
  Mat e(1, dims);
  for (Index i = 0; i < dims / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dims));
    e(0, 2 * i) = std::sin(t * freq);
    e(0, 2 * i + 1) = std::cos(t * freq);
  }
  return e;
}

AdamState adam_init(const ParamStore& store) {
  AdamState s;
  for (const auto& v : store.vars()) {
    s.m.push_back(Mat::Zero(v.rows(), v.cols()));
    s.v.push_back(Mat::Zero(v.rows(), v.cols()));
    s.v_max.push_back(Mat::Zero(v.rows(), v.cols()));
  }
  return s;
}

void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg) {
  const auto& vars = store.vars();
  if (state.m.size() != vars.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  for (size_t k = 0; k < vars.size(); ++k) {
    const Mat& gr = vars[k].grad();
    if (gr.size() > 0 && !gr.allFinite())
      throw NumericalError("adam_step: non-finite gradient for " + store.names()[k], state.step);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < vars.size(); ++k) {
    Mat& x = vars[k].node()->value;
    Mat g = vars[k].grad().size() > 0 ? vars[k].grad() : Mat::Zero(x.rows(), x.cols());
    if (cfg.wd != 0.0) g += cfg.wd * x;
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Mat* second = &state.v[k];
    if (cfg.amsgrad) {
      state.v_max[k] = state.v_max[k].cwiseMax(state.v[k]);
      second = &state.v_max[k];
    }
    const double step = cfg.lr / bc1;
    for (Index i = 0; i < x.size(); ++i) {
      const double denom = std::sqrt(second->data()[i] / bc2) + cfg.eps;
      x.data()[i] -= step * state.m[k].data()[i] / denom;
    }
  }
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

constexpr char kMagic[9] = "GRIPCKPT";

}  // namespace

void write_checkpoint(const std::string& path, const ParamStore& store) {
  std::string out(kMagic, 8);
  put_u64(out, static_cast<std::uint64_t>(store.size()));
  for (Index k = 0; k < store.size(); ++k) {
    const std::string& name = store.names()[k];
    const Mat& v = store.vars()[k].value();
    put_u64(out, name.size());
    out += name;
    put_u64(out, static_cast<std::uint64_t>(v.rows()));
    put_u64(out, static_cast<std::uint64_t>(v.cols()));
    out.append(reinterpret_cast<const char*>(v.data()), static_cast<size_t>(v.size()) * sizeof(double));
  }
  io::write_file_atomic(path, out);
}

void read_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint file: " + path);
  const auto count = get_u64(in);
  if (count != static_cast<std::uint64_t>(store.size()))
    throw IoError("checkpoint has " + std::to_string(count) + " arrays, model expects " + std::to_string(store.size()));
  std::vector<Mat> values;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = get_u64(in);
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    const auto rows = get_u64(in);
    const auto cols = get_u64(in);
    const Mat& expect = store.vars()[k].value();
    if (name != store.names()[k] || rows != static_cast<std::uint64_t>(expect.rows()) ||
        cols != static_cast<std::uint64_t>(expect.cols()))
      throw IoError("checkpoint array " + name + " does not match the model");
    Mat v(rows, cols);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (!in) throw IoError("checkpoint: truncated payload for " + name);
    values.push_back(std::move(v));
  }
  store.set_values(values);
}

}  // namespace grip::nn
