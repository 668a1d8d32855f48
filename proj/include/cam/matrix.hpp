#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cam/error.hpp"
#include "cam/tensor.hpp"

namespace cam {

/// Plain row-major real matrix; sequences are stored frames x features.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c)
      fail(ErrorCode::ShapeMismatch, "Matrix: " + std::to_string(data.size()) +
                                         " values for " + std::to_string(r) + "x" +
                                         std::to_string(c));
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Records every row of `x` as a constant vector node.
template <class Real>
std::vector<Var> frames(BasicTape<Real>& tape, const Matrix& x) {
  std::vector<Var> out;
  out.reserve(x.rows);
  for (std::size_t t = 0; t < x.rows; ++t) out.push_back(tape.constant(x.row(t)));
  return out;
}

}  // namespace cam
