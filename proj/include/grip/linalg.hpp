#pragma once

#include <functional>

#include "grip/types.hpp"

namespace grip {

// A linear map acting column-wise on (in_rows x c) matrices, paired with its
// adjoint. Column count c is free.
struct LinearOperator {
  std::function<Mat(const Mat&)> forward;
  std::function<Mat(const Mat&)> adjoint;
  Index in_rows = 0;
  Index out_rows = 0;

  Mat apply(const Mat& x) const { return forward(x); }
  Mat apply_adjoint(const Mat& y) const { return adjoint(y); }
  LinearOperator transposed() const { return {adjoint, forward, out_rows, in_rows}; }
};

LinearOperator identity_operator(Index n);
LinearOperator dense_operator(const Mat& m);
// a(b(x))
LinearOperator compose(const LinearOperator& a, const LinearOperator& b);

struct CgResult {
  Mat x;
  double residual = 0.0;  // relative, ||b - A x|| / ||b||
  Index iterations = 0;
};

// Conjugate gradient for a symmetric positive (semi-)definite operator,
// treating the whole matrix as one vector. Stops at relative residual `tol`
// or after `max_iter` steps. Throws NumericalError on non-finite values.
CgResult cg_solve(const LinearOperator& op, const Mat& b, const Mat& x0, double tol, Index max_iter);

// Exactly `iters` CGLS steps on min ||A x - d||^2 from x0. Steps with a
// vanishing normal-equation residual leave x unchanged.
Mat cgls_solve(const LinearOperator& op, const Mat& d, const Mat& x0, Index iters);

// Largest eigenvalue of a symmetric PSD operator by power iteration.
double power_iteration(const LinearOperator& op, Index rows, Index iters = 200);

}  // namespace grip
