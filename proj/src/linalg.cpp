#include "grip/linalg.hpp"

#include <cmath>

#include "grip/error.hpp"

namespace grip {

LinearOperator identity_operator(Index n) {
  auto id = [](const Mat& x) { return x; };
  return {id, id, n, n};
}

LinearOperator dense_operator(const Mat& m) {
  Mat mt = m.transpose();
  return {[m](const Mat& x) -> Mat { return m * x; }, [mt](const Mat& y) -> Mat { return mt * y; },
          m.cols(), m.rows()};
}

LinearOperator compose(const LinearOperator& a, const LinearOperator& b) {
  return {[a, b](const Mat& x) { return a.forward(b.forward(x)); },
          [a, b](const Mat& y) { return b.adjoint(a.adjoint(y)); }, b.in_rows, a.out_rows};
}

namespace {

void check_finite(double v, const char* what, Index it) {
  if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite value", static_cast<long>(it));
}

}  // namespace

CgResult cg_solve(const LinearOperator& op, const Mat& b, const Mat& x0, double tol, Index max_iter) {
  if (b.rows() != x0.rows() || b.cols() != x0.cols()) throw ShapeError("cg_solve: b and x0 shapes differ");
  CgResult out;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.x = Mat::Zero(b.rows(), b.cols());
    return out;
  }
  Mat x = x0;
  Mat r = b - op.forward(x);
  double rr = r.squaredNorm();
  check_finite(rr, "cg_solve", 0);
  out.residual = std::sqrt(rr) / bnorm;
  Mat p = r;
  Index it = 0;
  while (out.residual > tol && it < max_iter) {
    Mat q = op.forward(p);
    const double pq = dot(p, q);
    check_finite(pq, "cg_solve", it);
    if (pq <= 0.0) break;
    const double alpha = rr / pq;
    x += alpha * p;
    r -= alpha * q;
    const double rr_new = r.squaredNorm();
    check_finite(rr_new, "cg_solve", it);
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++it;
    out.residual = std::sqrt(rr) / bnorm;
  }
  out.x = std::move(x);
  out.iterations = it;
  return out;
}

Mat cgls_solve(const LinearOperator& op, const Mat& d, const Mat& x0, Index iters) {
  Mat x = x0;
  if (iters <= 0) return x;
  Mat r = d - op.forward(x);
  Mat s = op.adjoint(r);
  Mat p = s;
  double gamma = s.squaredNorm();
  const double gamma0 = gamma;
  for (Index k = 0; k < iters; ++k) {
    if (gamma <= 1e-30 * gamma0 || gamma == 0.0) break;
    Mat q = op.forward(p);
    const double qq = q.squaredNorm();
    check_finite(qq, "cgls_solve", k);
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    x += alpha * p;
    r -= alpha * q;
    s = op.adjoint(r);
    const double gamma_new = s.squaredNorm();
    check_finite(gamma_new, "cgls_solve", k);
    p = s + (gamma_new / gamma) * p;
    gamma = gamma_new;
  }
  return x;
}

double power_iteration(const LinearOperator& op, Index rows, Index iters) {
  Mat v = Mat::Ones(rows, 1);
  for (Index r = 0; r < rows; ++r) v(r, 0) += 0.01 * static_cast<double>(r % 7);
  v /= v.norm();
  double lambda = 0.0;
  for (Index k = 0; k < iters; ++k) {
    Mat w = op.forward(v);
    lambda = dot(v, w);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
  }
  return lambda;
}

}  // namespace grip
