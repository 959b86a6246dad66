#pragma once

// Single-level ensemble Kalman filter with perturbed observations.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "mlenkf/integrate.hpp"
#include "mlenkf/kalman.hpp"
#include "mlenkf/linalg.hpp"
#include "mlenkf/models.hpp"
#include "mlenkf/trace.hpp"

namespace mlenkf {

/// Scalar quantity of interest evaluated on one particle (filter coordinates).
using Observable = std::function<double(std::span<const double>)>;

/// How a particle is advanced over one epoch: the model's exact transition, or
/// `steps` uniform integrator steps.
struct Propagator {
  bool exact = false;
  std::size_t steps = 0;
  Integrator scheme = Integrator::euler_maruyama;

  static Propagator exact_transition() { return {true, 0, Integrator::euler_maruyama}; }
  static Propagator numerical(std::size_t steps, Integrator scheme) { return {false, steps, scheme}; }
  /// Ψ^ℓ on the grid with the model's preferred scheme.
  static Propagator level(const SdeModel& model, const LevelGrid& grid, int level) {
    return numerical(grid.steps(level), model.preferred_integrator());
  }
};

/// M particles stored row-wise (M × d) in filter coordinates. `level` tags the
/// random streams of the members.
struct Ensemble {
  Matrix members;
  int level = 0;

  std::size_t size() const { return members.rows(); }
  std::size_t dim() const { return members.cols(); }
};

/// Per-run knobs shared by the ensemble filters.
struct FilterSettings {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

Vector sample_mean(const Matrix& members);
/// (1/M)·Σ (v − v̄)(v − v̄)ᵀ; equals E_M[vvᵀ] − E_M[v]E_M[v]ᵀ.
SymMatrix sample_cov(const Matrix& members);
Vector sample_mean(const Ensemble& e);
SymMatrix sample_cov(const Ensemble& e);

/// (1/M)·Σ φ(v_i).
double enkf_estimate(const Ensemble& e, const Observable& phi);

/// Advances one particle (filter coordinates) over epoch `epoch` using the
/// drive stream keyed by (epoch, level, particle).
void propagate_particle(const SdeModel& model, const Propagator& prop, std::span<double> x,
                        int epoch, int level, std::uint32_t particle, std::uint64_t seed,
                        BrownianPath& scratch, CostTally& tally);

/// y + η with η ~ N(0, Γ) from the perturb stream keyed by (epoch, level, particle).
Vector perturbed_observation(const ObservationModel& obs, std::span<const double> y, int epoch,
                             int level, std::uint32_t particle, std::uint64_t seed);

/// x ← (I − KH)·x + K·ỹ, with i_minus_kh = I − KH precomputed.
void correct_particle(std::span<double> x, const Matrix& i_minus_kh, const Matrix& gain,
                      std::span<const double> y_tilde);

/// One predict/update cycle. Each member is propagated on its own stream, the
/// gain comes from the forecast sample moments, and each member is corrected
/// with its own perturbed observation.
Ensemble enkf_step(Ensemble e, const SdeModel& model, const Propagator& prop,
                   const ObservationModel& obs, std::span<const double> y, int epoch,
                   const FilterSettings& settings, CostTally& tally);

/// M members drawn from N(init.mean, init.cov) on init streams.
Ensemble initial_ensemble(const GaussianMoments& init, std::size_t members, int level,
                          std::uint64_t seed);

FilterTrace enkf_run(const SdeModel& model, const Propagator& prop, const ObservationModel& obs,
                     std::span<const Vector> ys, const GaussianMoments& init, std::size_t members,
                     int level, const FilterSettings& settings);

/// Cost-budget mapping: M = ⌈c·J^{2/3}⌉ members and ⌈c·J^{1/3}⌉ steps per
/// epoch for a per-epoch budget of J substeps.
struct EnkfAllocation {
  std::size_t members = 1;
  std::size_t steps = 1;
};
EnkfAllocation enkf_budget_allocation(double budget, double c = 1.0);

}  // namespace mlenkf
