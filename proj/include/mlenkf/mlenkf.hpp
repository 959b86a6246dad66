#pragma once

// Multilevel ensemble Kalman filter.
//
// The ensemble is a hierarchy of levels ℓ = 0..L. Level ℓ holds M_ℓ pairs of
// particles integrated with steps(ℓ) and steps(ℓ−1) substeps on one shared
// Brownian path; level 0 has no coarse partner. Moments are telescoping sums of
// per-level sample moments, the gain uses the PSD-truncated multilevel
// covariance in its denominator, and both members of a pair are corrected
// with the same perturbed observation.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mlenkf/enkf.hpp"
#include "mlenkf/integrate.hpp"
#include "mlenkf/kalman.hpp"
#include "mlenkf/linalg.hpp"
#include "mlenkf/models.hpp"
#include "mlenkf/trace.hpp"

namespace mlenkf {

/// Weak-error (α), strong-coupling variance (β) and cost (γ) exponents of the
/// level hierarchy, all with respect to N_ℓ.
struct Rates {
  double alpha = 1.0;
  double beta = 2.0;
  double gamma = 1.0;
};

struct Allocation {
  int max_level = 0;                       // L
  std::vector<std::size_t> m_per_level;    // M_0 .. M_L
  Rates rates;
  double c_m = 1.0;
  double epsilon = 1.0;
};

/// L = ⌈ln(1/ε) / (α·ln N̂)⌉ (at least 0), then M_ℓ per allocate_levels.
Allocation allocate(double epsilon, const Rates& rates, const LevelGrid& grid, double c_m = 1.0);

/// M_ℓ = ⌈c_M · N_ℓ^{−(β+2γ)/3} · F⌉ for ℓ = 0..L with
///   F = N_L^{2α}                  if β > γ,
///   F = max(L,1)² · N_L^{2α}      if β = γ,
///   F = N_L^{2α + 2(γ−β)/3}       if β < γ,
/// floored at 1. The reported ε is N̂^{−αL}.
Allocation allocate_levels(int max_level, const Rates& rates, const LevelGrid& grid,
                           double c_m = 1.0);

/// Substeps per epoch: Σ_ℓ M_ℓ·(N_ℓ + N_{ℓ−1}), N_{−1} = 0.
std::uint64_t allocation_cost(const Allocation& alloc, const LevelGrid& grid);

/// Largest allocation whose per-epoch cost does not exceed `budget`; the L = 0
/// allocation when even that is too expensive.
Allocation allocate_for_budget(double budget, const Rates& rates, const LevelGrid& grid,
                               double c_m = 1.0, int max_level_cap = 40);

struct MultilevelEnsemble {
  std::vector<Matrix> fine;    // level ℓ: M_ℓ × d, resolution steps(ℓ)
  std::vector<Matrix> coarse;  // level ℓ: M_ℓ × d, resolution steps(ℓ−1); zeros at ℓ = 0

  int max_level() const { return static_cast<int>(fine.size()) - 1; }
  std::size_t dim() const { return fine.empty() ? 0 : fine.front().cols(); }
  CoupledPair pair(int level, std::size_t i) const;
};

/// Empty hierarchy shaped like the allocation (all states zero).
MultilevelEnsemble make_multilevel_ensemble(const Allocation& alloc, std::size_t dim);

/// Σ_ℓ E_{M_ℓ}[fine_ℓ − coarse_ℓ], coarse_0 ≡ 0.
Vector ml_mean(const MultilevelEnsemble& e);
/// Σ_ℓ cov_{M_ℓ}[fine_ℓ] − cov_{M_ℓ}[coarse_ℓ]. Symmetric, possibly indefinite.
SymMatrix ml_cov(const MultilevelEnsemble& e);
/// Σ_ℓ (1/M_ℓ) Σ_i φ(fine_{ℓ,i}) − φ(coarse_{ℓ,i}), with no coarse term at ℓ = 0.
double ml_estimate(const MultilevelEnsemble& e, const Observable& phi);

struct MultilevelGain {
  Matrix gain;
  bool truncated = false;  // the denominator covariance had a negative eigenvalue
};

/// K = C·Hᵀ·(H·C̃·Hᵀ + Γ)⁻¹ with C̃ the PSD truncation of C.
MultilevelGain ml_gain_flagged(const SymMatrix& c_ml, const ObservationModel& obs);
Matrix ml_gain(const SymMatrix& c_ml, const ObservationModel& obs);

/// Corrects every pair with its own perturbed observation ỹ = y + η^ℓ_i, applied
/// identically to the fine and coarse member.
MultilevelEnsemble ml_update(MultilevelEnsemble e, const Matrix& gain, const ObservationModel& obs,
                             std::span<const double> y, int epoch, const FilterSettings& settings);

/// Advances every pair one epoch (filter coordinates in and out).
MultilevelEnsemble ml_predict(MultilevelEnsemble e, const SdeModel& model, const LevelGrid& grid,
                              int epoch, const FilterSettings& settings, CostTally& tally);

struct MlenkfStep {
  MultilevelEnsemble ensemble;
  bool truncated = false;
};

MlenkfStep mlenkf_step(MultilevelEnsemble e, const SdeModel& model, const LevelGrid& grid,
                       const ObservationModel& obs, std::span<const double> y, int epoch,
                       const FilterSettings& settings, CostTally& tally);

/// Each level's pairs start from a common draw of N(init.mean, init.cov).
MultilevelEnsemble initial_multilevel_ensemble(const Allocation& alloc, const GaussianMoments& init,
                                               std::uint64_t seed);

/// Runs the filter over ys with one persistent multilevel ensemble. The trace
/// reports the raw multilevel mean and covariance after each update.
FilterTrace mlenkf_run(const Allocation& alloc, const SdeModel& model, const LevelGrid& grid,
                       const ObservationModel& obs, std::span<const Vector> ys,
                       const GaussianMoments& init, const FilterSettings& settings);

}  // namespace mlenkf
