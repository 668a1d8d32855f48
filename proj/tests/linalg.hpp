#pragma once

#include <cstddef>
#include <span>

#include <Eigen/SVD>

namespace testing_linalg {

/// Singular values of a row-major n x n matrix, largest first.
inline Eigen::VectorXd singular_values(std::span<const double> flat, std::size_t n) {
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = flat[i * n + j];
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
}

}  // namespace testing_linalg
