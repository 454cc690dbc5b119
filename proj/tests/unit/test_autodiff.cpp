#include "doctest.h"
#include "oracle.hpp"

#include "grip/error.hpp"
#include "grip/forward.hpp"

using namespace grip;
namespace A = grip::ad;

namespace {

struct Fixture {
  Rng rng{17};
  Mat weights(Index r, Index c) { return rng_normal(rng, r, c, 1.0); }
  A::Var p(Index r, Index c, double shift = 0.0) {
    Mat v = rng_normal(rng, r, c, 1.0);
    v.array() += shift;
    return A::param(v);
  }
  // Random linear functional, so every output entry gets a distinct weight.
  A::Var probe(const A::Var& y, const Mat& w) { return A::sum_all(A::mul(y, A::constant(w))); }
};

constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("autodiff: elementwise and linear-algebra primitives pass gradcheck") {
  Fixture f;
  A::Var a = f.p(4, 3), b = f.p(4, 3), c = f.p(3, 5);
  A::Var pos = A::param((rng_uniform(f.rng, 4, 3).array() + 0.5).matrix());
  Mat w43 = f.weights(4, 3), w45 = f.weights(4, 5), w34 = f.weights(3, 4);
  CHECK(oracle::gradcheck([&] { return f.probe(A::add(a, b), w43); }, {a, b}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::sub(a, b), w43); }, {a, b}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::mul(a, b), w43); }, {a, b}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::div(a, pos), w43); }, {a, pos}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::scale(a, -2.5), w43); }, {a}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::affine(a, 0.7, 3.0), w43); }, {a}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::neg(a), w43); }, {a}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::matmul(a, c), w45); }, {a, c}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::transpose(a), w34); }, {a}) <= kTol);
}

TEST_CASE("autodiff: broadcasting and reductions pass gradcheck") {
  Fixture f;
  A::Var x = f.p(5, 3), bias = f.p(1, 3), col = f.p(5, 1), s = f.p(1, 1);
  Mat w53 = f.weights(5, 3), w13 = f.weights(1, 3), w51 = f.weights(5, 1), w11 = f.weights(1, 1);
  CHECK(oracle::gradcheck([&] { return f.probe(A::add_bias(x, bias), w53); }, {x, bias}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::sum_rows(x), w13); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::broadcast_rows(bias, 5), w53); }, {bias}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::sum_cols(x), w51); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::broadcast_cols(col, 3), w53); }, {col}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::sum_all(x), w11); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::expand(s, 5, 3), w53); }, {s}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::mean_all(x), w11); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::mul_col(x, col), w53); }, {x, col}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::scale_by(x, s), w53); }, {x, s}) <= kTol);
}

TEST_CASE("autodiff: nonlinearities pass gradcheck") {
  Fixture f;
  A::Var x = f.p(4, 3);
  // Keep relu / clamp_min away from their kinks.
  Mat safe = x.value();
  for (Index i = 0; i < safe.size(); ++i)
    if (std::abs(safe.data()[i]) < 0.05) safe.data()[i] = 0.3;
  A::Var k = A::param(safe);
  A::Var pos = A::param((rng_uniform(f.rng, 4, 3).array() + 0.5).matrix());
  Mat w = f.weights(4, 3);
  CHECK(oracle::gradcheck([&] { return f.probe(A::relu(k), w); }, {k}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::clamp_min(k, 0.0), w); }, {k}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::sigmoid(x), w); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::softplus(x), w); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::exp(x), w); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::log(pos), w); }, {pos}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::row_softmax(x), w); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::log_softmax(x), w); }, {x}) <= kTol);
}

TEST_CASE("autodiff: structural primitives pass gradcheck") {
  Fixture f;
  A::Var a = f.p(4, 2), b = f.p(4, 3), c = f.p(2, 2);
  IndexList idx{3, 0, 0, 2, 1};
  Mat w45 = f.weights(4, 5), w62 = f.weights(6, 2), w42 = f.weights(4, 2);
  Mat w52 = f.weights(5, 2), w47 = f.weights(4, 7), w72 = f.weights(7, 2);
  A::Var parts_c[] = {a, b};
  A::Var parts_r[] = {a, c};
  CHECK(oracle::gradcheck([&] { return f.probe(A::concat_cols(parts_c), w45); }, {a, b}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::concat_rows(parts_r), w62); }, {a, c}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::slice_cols(b, 1, 2), w42); }, {b}) <= kTol);
  Mat w33 = f.weights(3, 3);
  CHECK(oracle::gradcheck([&] { return f.probe(A::slice_rows(b, 1, 3), w33); }, {b}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::pad_cols(b, 2, 7), w47); }, {b}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::pad_rows(a, 1, 7), w72); }, {a}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::gather_rows(a, idx), w52); }, {a}) <= kTol);
  A::Var s = f.p(5, 2);
  CHECK(oracle::gradcheck([&] { return f.probe(A::scatter_add_rows(s, idx, 4), w42); }, {s}) <= kTol);
}

TEST_CASE("autodiff: graph, operator and loss primitives pass gradcheck") {
  Fixture f;
  Graph g = oracle::random_connected(7, 0.3, f.rng, true);
  A::Var x = f.p(7, 3);
  Mat w = f.weights(7, 3);
  CHECK(oracle::gradcheck([&] { return f.probe(A::graph_aggregate(g, x), w); }, {x}) <= kTol);
  auto op = std::make_shared<const LinearOperator>(dense_operator(f.weights(4, 7)));
  Mat w43 = f.weights(4, 3);
  CHECK(oracle::gradcheck([&] { return f.probe(A::linear_apply(op, x), w43); }, {x}) <= kTol);

  Mat target = A::row_softmax(A::constant(f.weights(7, 3))).value();
  A::Var probs = A::param((rng_uniform(f.rng, 7, 3).array() + 0.1).matrix());
  A::Var other = f.p(7, 3);
  CHECK(oracle::gradcheck([&] { return A::cross_entropy_logits(x, A::constant(target)); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return A::cross_entropy_probs(probs, A::constant(target)); }, {probs}) <= kTol);
  CHECK(oracle::gradcheck([&] { return A::mse(x, other); }, {x, other}) <= kTol);

  IndexList seg{0, 0, 1, 2, 2, 2, 1};
  A::Var sc = f.p(3, 1);
  Mat w31 = f.weights(3, 1);
  CHECK(oracle::gradcheck([&] { return f.probe(A::segment_sum(x, seg, 3), w31); }, {x}) <= kTol);
  CHECK(oracle::gradcheck([&] { return f.probe(A::segment_broadcast(sc, seg, 3), w); }, {sc}) <= kTol);
}

TEST_CASE("autodiff: loss values match closed forms") {
  Mat logits(2, 2);
  logits << 0.0, 0.0, 1.0, 3.0;
  Mat target(2, 2);
  target << 1.0, 0.0, 0.0, 1.0;
  const double ce = A::cross_entropy_logits(A::constant(logits), A::constant(target)).item();
  CHECK(ce == doctest::Approx(0.5 * (std::log(2.0) + std::log(1.0 + std::exp(-2.0)))).epsilon(1e-14));
  Mat probs(1, 2);
  probs << 0.0, 1.0;
  Mat t1(1, 2);
  t1 << 1.0, 0.0;
  CHECK(A::cross_entropy_probs(A::constant(probs), A::constant(t1)).item() ==
        doctest::Approx(-std::log(1e-12)).epsilon(1e-14));
  Mat a(1, 2), b(1, 2);
  a << 1, 2;
  b << 0, 0;
  CHECK(A::mse(A::constant(a), A::constant(b)).item() == doctest::Approx(2.5));
  Mat s(1, 3);
  s << 1000.0, 1000.0, -1000.0;
  Mat p = A::row_softmax(A::constant(s)).value();
  CHECK(p.allFinite());
  CHECK(p(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("autodiff: shared subexpressions accumulate gradients") {
  A::Var x = A::param(Mat::Constant(1, 1, 3.0));
  A::Var y = A::mul(x, x);
  A::Var z = A::add(y, y);  // 2 x^2
  A::backward(z);
  CHECK(x.grad()(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("autodiff: backward consumes the tape; a second traversal throws") {
  A::Var x = A::param(Mat::Constant(1, 1, 2.0));
  A::Var y = A::mul(x, x);
  A::backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(4.0));
  CHECK_THROWS_AS(A::backward(y), Error);
}

TEST_CASE("autodiff: non-scalar backward needs a seed") {
  A::Var x = A::param(Mat::Ones(2, 2));
  A::Var y = A::scale(x, 3.0);
  CHECK_THROWS(A::backward(y));
  A::Var y2 = A::scale(x, 3.0);
  Mat seed = Mat::Ones(2, 2);
  A::backward(y2, &seed);
  CHECK(x.grad() == Mat::Constant(2, 2, 3.0));
}

TEST_CASE("autodiff: NoGradGuard stops recording; EnableGradGuard restores it") {
  A::Var x = A::param(Mat::Ones(2, 1));
  {
    A::NoGradGuard ng;
    CHECK_FALSE(A::grad_enabled());
    A::Var y = A::scale(x, 2.0);
    CHECK_FALSE(y.requires_grad());
    {
      A::EnableGradGuard eg;
      CHECK(A::grad_enabled());
      CHECK(A::scale(x, 2.0).requires_grad());
    }
    CHECK_FALSE(A::grad_enabled());
  }
  CHECK(A::grad_enabled());
}

TEST_CASE("autodiff: grad() leaves leaves untouched and reports unreached inputs as zero") {
  A::Var x = A::param(Mat::Constant(2, 1, 1.5));
  A::Var u = A::param(Mat::Ones(3, 1));
  A::Var y = A::sum_all(A::mul(x, x));
  A::Var ins[] = {x, u};
  auto g = A::grad(y, ins);
  CHECK(g[0].value() == Mat::Constant(2, 1, 3.0));
  CHECK(g[1].value() == Mat::Zero(3, 1));
  CHECK(x.grad().size() == 0);
}

TEST_CASE("autodiff: second-order gradients match finite differences of the first") {
  Fixture f;
  A::Var x = f.p(4, 2);
  A::Var w = f.p(2, 2);
  Mat probe = f.weights(4, 2);
  // h(x, w) = <grad_x sum(softplus(x w))^2, probe>
  auto h = [&] {
    A::Var y = A::sum_all(A::mul(A::softplus(A::matmul(x, w)), A::softplus(A::matmul(x, w))));
    A::Var xs[] = {x};
    auto gx = A::grad(y, xs, nullptr, true);
    return f.probe(gx[0], probe);
  };
  CHECK(oracle::gradcheck(h, {x, w}) <= kTol);

  // Same through the nonlinear edge forward map.
  Graph g = oracle::random_connected(6, 0.3, f.rng);
  Mat src = rng_normal(f.rng, 6, 2, 1.0);
  Mat d = rng_normal(f.rng, 12, 2, 1.0);
  A::Var theta = A::param((rng_uniform(f.rng, g.num_edges(), 1).array() + 0.5).matrix());
  auto step = [&] {
    A::Var z = A::scale(theta, 1.0);
    A::Var r = A::sub(edge_diffusion_forward(g, z, src, 2), A::constant(d));
    A::Var loss = A::scale(A::sum_all(A::mul(r, r)), 0.5);
    A::Var zs[] = {z};
    auto gz = A::grad(loss, zs, nullptr, true);
    A::Var z1 = A::sub(z, A::scale(gz[0], 0.1));
    return A::sum_all(A::mul(z1, z1));
  };
  CHECK(oracle::gradcheck(step, {theta}) <= kTol);
}

TEST_CASE("autodiff: shape mismatches are reported") {
  A::Var a = A::param(Mat::Ones(2, 3)), b = A::param(Mat::Ones(3, 2));
  CHECK_THROWS_AS(A::add(a, b), ShapeError);
  CHECK_THROWS_AS(A::matmul(a, a), ShapeError);
  A::Var parts[] = {a, b};
  CHECK_THROWS_AS(A::concat_cols(parts), ShapeError);
}
