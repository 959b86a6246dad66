#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mlenkf/linalg.hpp"

namespace mlenkf {

struct GaussianMoments {
  Vector mean;
  SymMatrix cov;
};

struct CostRecord {
  std::uint64_t substeps = 0;
  double wall_seconds = 0.0;
  std::vector<std::size_t> ensemble_sizes;  // M for EnKF, {M_ℓ} for MLEnKF
};

/// Per-epoch filter estimates. Entry 0 holds the initial moments and entry n
/// the updated estimate at observation time n.
struct FilterTrace {
  std::string method;
  std::vector<Vector> mean;
  std::vector<SymMatrix> cov;
  std::vector<bool> truncated;  // whether the gain used a PSD-truncated covariance
  CostRecord cost;

  std::size_t epochs() const { return mean.empty() ? 0 : mean.size() - 1; }

  void push(Vector m, SymMatrix c, bool was_truncated = false) {
    mean.push_back(std::move(m));
    cov.push_back(std::move(c));
    truncated.push_back(was_truncated);
  }
};

}  // namespace mlenkf
