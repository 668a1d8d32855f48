#pragma once

#include <cstdint>
#include <random>

#include "cam/tensor.hpp"

namespace cam {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream). Streams separate the consumers
/// of one run seed (initialization per phase, shuffling, data generation).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline void fill_uniform(DiffArray& a, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : a.values) v = dist(rng);
}

/// Uniform in +-1/sqrt(fan_in), with fan_in taken as the column count.
inline DiffArray uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  DiffArray a = DiffArray::matrix(rows, cols);
  fill_uniform(a, 1.0 / std::sqrt(static_cast<double>(cols)), rng);
  return a;
}

}  // namespace cam
