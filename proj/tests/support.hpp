#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mlenkf/linalg.hpp"

namespace mlenkf::testing {

// Test-side randomness; independent of the library streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double normal() { return normal_(eng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_);
  }

  Matrix matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  SymMatrix symmetric(std::size_t d) { return SymMatrix::symmetrized(matrix(d, d)); }

  // B·Bᵀ with B d×k; rank min(d, k).
  SymMatrix psd(std::size_t d, std::size_t k) {
    const Matrix b = matrix(d, k);
    return SymMatrix::symmetrized(b * b.transposed());
  }

  SymMatrix spd(std::size_t d, double shift = 0.1) {
    return psd(d, d) + shift * SymMatrix::identity(d);
  }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_;
};

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace mlenkf::testing
