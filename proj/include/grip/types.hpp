#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace grip {

using Index = std::int64_t;

// Dense row-major real matrix; node features are stored one node per row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

using IndexList = std::vector<Index>;

// Frobenius inner product.
inline double dot(const Mat& a, const Mat& b) { return a.cwiseProduct(b).sum(); }

}  // namespace grip
