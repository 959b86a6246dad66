#pragma once

// Level hierarchy of one-epoch solution operators and coupled pair
// propagation.

#include <cstddef>
#include <cstdint>
#include <span>

#include "mlenkf/linalg.hpp"
#include "mlenkf/models.hpp"
#include "mlenkf/stochastic.hpp"

namespace mlenkf {

/// steps(ℓ) = n0 · nhat^ℓ uniform steps per unit epoch.
class LevelGrid {
 public:
  /// nhat = 1 is accepted as a degenerate hierarchy in which every level has
  /// the same resolution.
  LevelGrid(std::size_t n0, std::size_t nhat);

  std::size_t n0() const { return n0_; }
  std::size_t nhat() const { return nhat_; }
  std::size_t steps(int level) const;
  double dt(int level) const { return 1.0 / static_cast<double>(steps(level)); }

 private:
  std::size_t n0_;
  std::size_t nhat_;
};

/// Integrator substep counter. One unit is one Euler/Milstein step (or one
/// exact transition).
struct CostTally {
  std::uint64_t substeps = 0;
};

/// Fine/coarse particle pair driven by one Brownian realization. At level 0
/// the coarse slot is all zeros and never read.
struct CoupledPair {
  Vector fine;
  Vector coarse;
  int level = 0;
};

/// u ← u + a(u)·dt + b(u)·dW, in place. Throws Overflow on a non-finite result.
void em_step(const SdeModel& model, std::span<double> u, int epoch, double dt,
             std::span<const double> dW);
Vector em_step(const SdeModel& model, std::span<const double> u, int epoch, double dt,
               std::span<const double> dW);

/// Euler–Maruyama plus ½·b·b′·(dW² − dt). Scalar models only.
void milstein_step(const SdeModel& model, std::span<double> u, int epoch, double dt,
                   std::span<const double> dW);
Vector milstein_step(const SdeModel& model, std::span<const double> u, int epoch, double dt,
                     std::span<const double> dW);

/// Applies one integrator step per path increment to the SDE state `u`.
void integrate_path(const SdeModel& model, Integrator scheme, std::span<double> u, int epoch,
                    const BrownianPath& path, CostTally& tally);

/// Same as integrate_path but `x` is in filter coordinates; converts to the SDE
/// state and back around the integration.
void advance_filter_state(const SdeModel& model, Integrator scheme, std::span<double> x,
                          int epoch, const BrownianPath& path, CostTally& tally);

/// Ψ^ℓ: steps(ℓ) integrator steps with the model's preferred scheme over one
/// epoch. `path` must hold steps(ℓ) increments.
Vector propagate_level(const SdeModel& model, const LevelGrid& grid, int level,
                       std::span<const double> u, int epoch, const BrownianPath& path,
                       CostTally& tally);

/// Advances both members of a level ≥ 1 pair: the fine state on a freshly drawn
/// steps(ℓ) path, the coarse state on that path summed nhat increments at a
/// time. States are in SDE coordinates.
CoupledPair propagate_pair(const SdeModel& model, const LevelGrid& grid, const CoupledPair& pair,
                           int epoch, Stream& s, CostTally& tally);

}  // namespace mlenkf
