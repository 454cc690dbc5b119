#include <filesystem>

#include "doctest.h"
#include "oracle.hpp"

#include "grip/error.hpp"
#include "grip/nn.hpp"

using namespace grip;

namespace {

// Dense re-implementation of gcn_forward.
Mat dense_gcn_forward(const Graph& g, const Mat& x, const nn::GcnParams& p) {
  const Mat ah = oracle::dense_gcn(oracle::dense_adjacency(g));
  Mat h = x;
  for (Index l = 0; l < p.layers(); ++l) {
    Mat y = ah * h * p.weight[l].value();
    y.rowwise() += p.bias[l].value().row(0);
    if (l == p.layers() - 1) return y;
    y = y.cwiseMax(0.0);
    h = (l > 0 && h.cols() == y.cols()) ? Mat(h + p.residual_step * y) : y;
  }
  return h;
}

std::string tmp(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("gcn_forward matches a dense re-implementation") {
  Rng rng(1);
  Graph g = oracle::random_connected(10, 0.2, rng, true);
  nn::ParamStore store;
  auto p = nn::make_gcn(store, "g", 3, 5, 2, 4, rng);
  Mat x = rng_normal(rng, 10, 3, 1.0);
  CHECK(oracle::rel(nn::gcn_forward(g, ad::constant(x), p).value(), dense_gcn_forward(g, x, p)) <= 1e-13);
  CHECK(p.residual_step == 0.5);
  CHECK(store.size() == 8);
  CHECK(store.num_scalars() == (3 * 5 + 5) + 2 * (5 * 5 + 5) + (5 * 2 + 2));
}

TEST_CASE("gcn: out_scale 0 starts at the zero map; one layer maps in -> out") {
  Rng rng(2);
  Graph g = oracle::random_connected(6, 0.3, rng);
  nn::ParamStore store;
  auto p = nn::make_gcn(store, "z", 4, 8, 3, 3, rng, 0.0);
  CHECK(nn::gcn_forward(g, ad::constant(rng_normal(rng, 6, 4, 1.0)), p).value().isZero());
  auto q = nn::make_gcn(store, "one", 4, 8, 3, 1, rng);
  CHECK(q.weight[0].rows() == 4);
  CHECK(q.weight[0].cols() == 3);
  CHECK_THROWS_AS(nn::gcn_forward(g, ad::constant(Mat::Ones(6, 5)), q), ShapeError);
  CHECK_THROWS_AS(store.add("one.layer0.weight", Mat::Ones(1, 1)), InvalidArgument);
}

TEST_CASE("gcn is permutation equivariant") {
  Rng rng(3);
  Graph g = oracle::random_connected(9, 0.25, rng);
  nn::ParamStore store;
  auto p = nn::make_gcn(store, "g", 2, 6, 2, 3, rng);
  IndexList perm{4, 2, 7, 0, 8, 1, 3, 6, 5};
  Graph gp = permute_nodes(g, perm);
  Mat x = rng_normal(rng, 9, 2, 1.0);
  Mat xp(9, 2);
  for (Index i = 0; i < 9; ++i) xp.row(perm[i]) = x.row(i);
  Mat y = nn::gcn_forward(g, ad::constant(x), p).value();
  Mat yp = nn::gcn_forward(gp, ad::constant(xp), p).value();
  for (Index i = 0; i < 9; ++i) CHECK(oracle::rel(yp.row(perm[i]), y.row(i)) <= 1e-13);
}

TEST_CASE("gcn and mlp parameters pass gradcheck") {
  Rng rng(4);
  Graph g = oracle::random_connected(8, 0.3, rng, true);
  nn::ParamStore store;
  auto p = nn::make_gcn(store, "g", 3, 4, 2, 3, rng);
  auto m = nn::make_mlp(store, "m", {3, 5, 2}, rng);
  ad::Var x = ad::param(rng_normal(rng, 8, 3, 1.0));
  Mat w = rng_normal(rng, 8, 2, 1.0);
  std::vector<ad::Var> leaves = store.vars();
  leaves.push_back(x);
  auto f = [&] {
    ad::Var a = nn::gcn_forward(g, x, p);
    ad::Var b = nn::mlp_forward(x, m);
    return ad::sum_all(ad::mul(ad::add(a, b), ad::constant(w)));
  };
  CHECK(oracle::gradcheck(f, leaves) <= 1e-4);
}

TEST_CASE("mlp_forward: affine, relu, affine by hand") {
  nn::MlpParams p;
  Mat w0(1, 2), b0(1, 2), w1(2, 1), b1(1, 1);
  w0 << 1.0, -1.0;
  b0 << 0.0, 0.0;
  w1 << 2.0, 3.0;
  b1 << 0.5;
  p.weight = {ad::constant(w0), ad::constant(w1)};
  p.bias = {ad::constant(b0), ad::constant(b1)};
  Mat x(2, 1);
  x << 2.0, -1.0;
  Mat y = nn::mlp_forward(ad::constant(x), p).value();
  CHECK(y(0, 0) == doctest::Approx(2.0 * 2.0 + 0.5));
  CHECK(y(1, 0) == doctest::Approx(3.0 * 1.0 + 0.5));
}

TEST_CASE("time_embedding: sin/cos pairs at geometric frequencies") {
  Mat e = nn::time_embedding(3.0, 4);
  CHECK(e(0, 0) == doctest::Approx(std::sin(3.0)));
  CHECK(e(0, 1) == doctest::Approx(std::cos(3.0)));
  CHECK(e(0, 2) == doctest::Approx(std::sin(3.0 / 100.0)));
  CHECK(e(0, 3) == doctest::Approx(std::cos(3.0 / 100.0)));
  CHECK(nn::time_embedding(1.0, 0).cols() == 0);
  CHECK_THROWS_AS(nn::time_embedding(1.0, 3), InvalidArgument);
}

TEST_CASE("init_uniform stays within 1/sqrt(fan_in)") {
  Rng rng(5);
  Mat w = nn::init_uniform(rng, 16, 100);
  CHECK(w.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(w.cwiseAbs().maxCoeff() > 0.2);
}

TEST_CASE("adam_step matches a scalar re-implementation (AMSGrad)") {
  nn::ParamStore store;
  ad::Var x = store.add("x", Mat::Constant(1, 1, 2.0));
  nn::AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.wd = 0.01;
  auto state = nn::adam_init(store);
  double xr = 2.0, m = 0.0, v = 0.0, vmax = 0.0;
  for (int t = 1; t <= 30; ++t) {
    store.zero_grad();
    // f = (x - 1)^4 has a non-monotone gradient magnitude, exercising v_max.
    ad::Var d = ad::affine(x, 1.0, -1.0);
    ad::Var sq = ad::mul(d, d);
    ad::backward(ad::sum_all(ad::mul(sq, sq)));
    nn::adam_step(store, state, cfg);
    double g = 4.0 * std::pow(xr - 1.0, 3) + cfg.wd * xr;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    vmax = std::max(vmax, v);
    const double bc1 = 1 - std::pow(cfg.beta1, t), bc2 = 1 - std::pow(cfg.beta2, t);
    xr -= cfg.lr / bc1 * m / (std::sqrt(vmax / bc2) + cfg.eps);
    CHECK(x.value()(0, 0) == doctest::Approx(xr).epsilon(1e-12));
  }
}

TEST_CASE("adam_step rejects non-finite gradients") {
  nn::ParamStore store;
  ad::Var x = store.add("x", Mat::Constant(1, 1, 0.0));
  auto state = nn::adam_init(store);
  ad::backward(ad::sum_all(ad::log(x)));  // d/dx log(0) = inf
  CHECK_THROWS_AS(nn::adam_step(store, state, nn::AdamConfig{}), NumericalError);
}

TEST_CASE("checkpoint round-trip and mismatch detection") {
  Rng rng(6);
  nn::ParamStore a;
  nn::make_gcn(a, "g", 3, 4, 2, 2, rng);
  const std::string path = tmp("grip_ckpt.bin");
  nn::write_checkpoint(path, a);

  Rng other(99);
  nn::ParamStore b;
  nn::make_gcn(b, "g", 3, 4, 2, 2, other);
  nn::read_checkpoint(path, b);
  for (Index k = 0; k < a.size(); ++k) CHECK(a.vars()[static_cast<size_t>(k)].value() == b.vars()[static_cast<size_t>(k)].value());

  nn::ParamStore c;
  nn::make_gcn(c, "g", 3, 5, 2, 2, other);
  CHECK_THROWS_AS(nn::read_checkpoint(path, c), Error);
  nn::ParamStore d;
  nn::make_gcn(d, "h", 3, 4, 2, 2, other);
  CHECK_THROWS_AS(nn::read_checkpoint(path, d), Error);
  CHECK_THROWS_AS(nn::read_checkpoint(tmp("grip_missing_ckpt.bin"), b), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("ParamStore values/set_values restore a snapshot") {
  Rng rng(7);
  nn::ParamStore s;
  nn::make_mlp(s, "m", {2, 3, 1}, rng);
  auto snap = s.values();
  s.vars()[0].node()->value.setZero();
  s.set_values(snap);
  CHECK(s.vars()[0].value() == snap[0]);
  CHECK(s.contains("m.layer1.bias"));
  CHECK_FALSE(s.contains("m.layer2.bias"));
}
