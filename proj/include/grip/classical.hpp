#pragma once

#include <string>
#include <vector>

#include "grip/forward.hpp"

namespace grip {

enum class Regularizer { laplacian, tikhonov };

std::string to_string(Regularizer r);
Regularizer regularizer_from_string(const std::string& s);

struct ClassicalConfig {
  Regularizer regularizer = Regularizer::laplacian;
  double alpha = 0.1;
  double mu = 0.1;
  Index max_iter = 3000;
  double stop_nmse = 0.0025;
  double pinv_tol = 1e-8;
  Index pinv_max_iter = 500;
};

void validate(const ClassicalConfig& cfg);

struct ClassicalResult {
  Mat x;                         // logits for classification
  std::vector<double> data_fit;  // nMSE of the residual before each update
  std::vector<double> recovery;  // empty when the problem carries no truth
  Index iterations = 0;          // updates applied
  bool converged = false;        // stop_nmse reached
};

// R x for the configured regulariser. Edge targets use the Laplacian of the
// line graph (edges adjacent when they share a node).
Mat apply_regularizer(const Graph& g, Target target, Regularizer r, const Mat& x);

// Starting point: zeros for node targets, ones for edge targets.
Mat classical_start(const Problem& p);

// Residual F(x) - d, with F applied to row-softmax(x) for classification.
Mat classical_residual(const Problem& p, const Mat& x);
// J^T (F(x) - d) of the residual above; autodiff for the nonlinear cases.
Mat classical_gradient(const Problem& p, const Mat& x);

// x <- x - mu (J^T(F(x) - d) + alpha R x) until the data-fit nMSE drops below
// stop_nmse or max_iter updates. Throws NumericalError when the residual norm
// exceeds 10x its initial value.
ClassicalResult solve_variational_classical(const Problem& p, const ClassicalConfig& cfg);

struct ScaleSpaceResult {
  std::vector<Mat> trace;  // x_1 ... x_iters
  std::vector<double> data_fit;
  std::vector<double> recovery;
};

// x <- x - mu L^+ J^T (F(x) - d) from x = 0, linear forward operators only.
ScaleSpaceResult solve_scale_space(const Problem& p, const ClassicalConfig& cfg, Index iters);

// Recovery nMSE of an estimate (softmax of logits against the one-hot truth
// for classification).
double recovery_nmse(const Problem& p, const Mat& x);

// iter,data_fit_nmse[,recovery_nmse]
std::string trace_csv(const std::vector<double>& data_fit, const std::vector<double>& recovery);

}  // namespace grip
