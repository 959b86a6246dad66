#include "mlenkf/mlenkf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "mlenkf/error.hpp"
#include "mlenkf/parallel.hpp"
#include "numeric.hpp"

namespace mlenkf {

using detail::tolerant_ceil;

namespace {

void validate_rates(const Rates& r) {
  if (!(r.alpha > 0.0) || !(r.beta > 0.0) || !(r.gamma > 0.0)) {
    throw InvalidInput("allocate: rates alpha, beta, gamma must all be positive");
  }
  if (r.alpha < 0.5 * std::min(r.beta, r.gamma)) {
    throw InvalidInput("allocate: rates must satisfy alpha >= min(beta, gamma)/2");
  }
}

// Maps a flat index over all pairs of all levels to (level, particle).
struct LevelIndex {
  std::vector<std::size_t> offsets;  // offsets[ℓ] = Σ_{k<ℓ} M_k; back() = total

  explicit LevelIndex(const MultilevelEnsemble& e) {
    offsets.push_back(0);
    for (const Matrix& f : e.fine) offsets.push_back(offsets.back() + f.rows());
  }
  std::size_t total() const { return offsets.back(); }
  std::pair<int, std::size_t> locate(std::size_t flat) const {
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const auto level = static_cast<std::size_t>(it - offsets.begin()) - 1;
    return {static_cast<int>(level), flat - offsets[level]};
  }
};

}  // namespace

// --- Allocation --------------------------------------------------------------

Allocation allocate_levels(int max_level, const Rates& rates, const LevelGrid& grid, double c_m) {
  validate_rates(rates);
  if (max_level < 0) throw InvalidInput("allocate: L must be non-negative");
  if (!(c_m > 0.0)) throw InvalidInput("allocate: c_M must be positive");

  const double n_l = static_cast<double>(grid.steps(max_level));
  const double exponent = (rates.beta + 2.0 * rates.gamma) / 3.0;
  double f;
  if (rates.beta > rates.gamma) {
    f = std::pow(n_l, 2.0 * rates.alpha);
  } else if (rates.beta == rates.gamma) {
    const double l = std::max(1, max_level);
    f = l * l * std::pow(n_l, 2.0 * rates.alpha);
  } else {
    f = std::pow(n_l, 2.0 * rates.alpha + 2.0 * (rates.gamma - rates.beta) / 3.0);
  }

  Allocation a;
  a.max_level = max_level;
  a.rates = rates;
  a.c_m = c_m;
  a.epsilon = std::pow(static_cast<double>(grid.nhat()), -rates.alpha * max_level);
  for (int l = 0; l <= max_level; ++l) {
    const double n = static_cast<double>(grid.steps(l));
    const double m = tolerant_ceil(c_m * std::pow(n, -exponent) * f);
    a.m_per_level.push_back(static_cast<std::size_t>(std::max(1.0, m)));
  }
  return a;
}

Allocation allocate(double epsilon, const Rates& rates, const LevelGrid& grid, double c_m) {
  if (!(epsilon > 0.0)) throw InvalidInput("allocate: epsilon must be positive");
  validate_rates(rates);
  if (grid.nhat() < 2) throw InvalidInput("allocate: refinement factor must be at least 2");
  const double raw = std::log(1.0 / epsilon) / (rates.alpha * std::log(static_cast<double>(grid.nhat())));
  const int l = static_cast<int>(std::max(0.0, tolerant_ceil(raw)));
  Allocation a = allocate_levels(l, rates, grid, c_m);
  a.epsilon = epsilon;
  return a;
}

std::uint64_t allocation_cost(const Allocation& alloc, const LevelGrid& grid) {
  std::uint64_t cost = 0;
  for (int l = 0; l <= alloc.max_level; ++l) {
    const std::uint64_t per_pair = grid.steps(l) + (l > 0 ? grid.steps(l - 1) : 0);
    cost += alloc.m_per_level[static_cast<std::size_t>(l)] * per_pair;
  }
  return cost;
}

Allocation allocate_for_budget(double budget, const Rates& rates, const LevelGrid& grid, double c_m,
                               int max_level_cap) {
  if (!(budget > 0.0)) throw InvalidInput("allocate_for_budget: budget must be positive");
  if (grid.nhat() < 2) throw InvalidInput("allocate_for_budget: refinement factor must be at least 2");
  Allocation best = allocate_levels(0, rates, grid, c_m);
  for (int l = 1; l <= max_level_cap; ++l) {
    Allocation candidate = allocate_levels(l, rates, grid, c_m);
    if (static_cast<double>(allocation_cost(candidate, grid)) > budget) break;
    best = std::move(candidate);
  }
  return best;
}

// --- Ensemble and moments ----------------------------------------------------

CoupledPair MultilevelEnsemble::pair(int level, std::size_t i) const {
  const auto l = static_cast<std::size_t>(level);
  const auto f = fine.at(l).row(i);
  const auto c = coarse.at(l).row(i);
  return {Vector(f.begin(), f.end()), Vector(c.begin(), c.end()), level};
}

MultilevelEnsemble make_multilevel_ensemble(const Allocation& alloc, std::size_t dim) {
  if (alloc.m_per_level.size() != static_cast<std::size_t>(alloc.max_level) + 1) {
    throw InvalidInput("make_multilevel_ensemble: allocation has inconsistent level count");
  }
  MultilevelEnsemble e;
  for (std::size_t m : alloc.m_per_level) {
    if (m == 0) throw InvalidInput("make_multilevel_ensemble: every level needs M_l >= 1");
    e.fine.emplace_back(m, dim);
    e.coarse.emplace_back(m, dim);
  }
  return e;
}

Vector ml_mean(const MultilevelEnsemble& e) {
  if (e.fine.empty()) throw InvalidInput("ml_mean: empty hierarchy");
  Vector mean = sample_mean(e.fine[0]);
  const std::size_t d = mean.size();
  for (std::size_t l = 1; l < e.fine.size(); ++l) {
    const Matrix& f = e.fine[l];
    const Matrix& c = e.coarse[l];
    Vector diff(d, 0.0);
    for (std::size_t i = 0; i < f.rows(); ++i)
      for (std::size_t k = 0; k < d; ++k) diff[k] += f(i, k) - c(i, k);
    const double inv = 1.0 / static_cast<double>(f.rows());
    for (std::size_t k = 0; k < d; ++k) mean[k] += diff[k] * inv;
  }
  return mean;
}

SymMatrix ml_cov(const MultilevelEnsemble& e) {
  if (e.fine.empty()) throw InvalidInput("ml_cov: empty hierarchy");
  SymMatrix cov = sample_cov(e.fine[0]);
  for (std::size_t l = 1; l < e.fine.size(); ++l) {
    cov = cov + (sample_cov(e.fine[l]) - sample_cov(e.coarse[l]));
  }
  return cov;
}

double ml_estimate(const MultilevelEnsemble& e, const Observable& phi) {
  if (e.fine.empty()) throw InvalidInput("ml_estimate: empty hierarchy");
  double total = 0.0;
  for (std::size_t l = 0; l < e.fine.size(); ++l) {
    const Matrix& f = e.fine[l];
    double sum = 0.0;
    for (std::size_t i = 0; i < f.rows(); ++i) {
      sum += l == 0 ? phi(f.row(i)) : phi(f.row(i)) - phi(e.coarse[l].row(i));
    }
    total += sum / static_cast<double>(f.rows());
  }
  return total;
}

// --- Gain and update ---------------------------------------------------------

MultilevelGain ml_gain_flagged(const SymMatrix& c_ml, const ObservationModel& obs) {
  PsdTruncation truncated = psd_truncate_flagged(c_ml);
  return {kalman_gain(c_ml, truncated.matrix, obs), truncated.modified};
}

Matrix ml_gain(const SymMatrix& c_ml, const ObservationModel& obs) {
  return ml_gain_flagged(c_ml, obs).gain;
}

MultilevelEnsemble ml_update(MultilevelEnsemble e, const Matrix& gain, const ObservationModel& obs,
                             std::span<const double> y, int epoch, const FilterSettings& settings) {
  if (y.size() != obs.obs_dim()) throw InvalidInput("ml_update: observation has wrong dimension");
  if (gain.rows() != e.dim() || gain.cols() != obs.obs_dim()) {
    throw InvalidInput("ml_update: gain has wrong shape");
  }
  const Matrix i_minus_kh = Matrix::identity(e.dim()) - gain * obs.h();
  const LevelIndex index(e);
  parallel_for(index.total(), settings.threads, [&](std::size_t b, std::size_t end, CostTally&) {
    for (std::size_t flat = b; flat < end; ++flat) {
      const auto [level, i] = index.locate(flat);
      const Vector y_tilde =
          perturbed_observation(obs, y, epoch, level, static_cast<std::uint32_t>(i), settings.seed);
      const auto l = static_cast<std::size_t>(level);
      correct_particle(e.fine[l].row(i), i_minus_kh, gain, y_tilde);
      if (level > 0) correct_particle(e.coarse[l].row(i), i_minus_kh, gain, y_tilde);
    }
  });
  return e;
}

MultilevelEnsemble ml_predict(MultilevelEnsemble e, const SdeModel& model, const LevelGrid& grid,
                              int epoch, const FilterSettings& settings, CostTally& tally) {
  if (e.dim() != model.dim()) throw InvalidInput("ml_predict: ensemble dimension does not match model");
  const Integrator scheme = model.preferred_integrator();
  const LevelIndex index(e);
  const CostTally spent =
      parallel_for(index.total(), settings.threads, [&](std::size_t b, std::size_t end, CostTally& t) {
        BrownianPath fine_path;
        BrownianPath coarse_path;
        for (std::size_t flat = b; flat < end; ++flat) {
          const auto [level, i] = index.locate(flat);
          const auto l = static_cast<std::size_t>(level);
          if (level == 0) {
            propagate_particle(model, Propagator::numerical(grid.steps(0), scheme), e.fine[0].row(i),
                               epoch, 0, static_cast<std::uint32_t>(i), settings.seed, fine_path, t);
            continue;
          }
          Stream s({static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(level),
                    static_cast<std::uint32_t>(i), StreamRole::drive},
                   settings.seed);
          draw_brownian(s, grid.steps(level), model.drive_dim(), fine_path);
          coarsen(fine_path, grid.nhat(), coarse_path);
          advance_filter_state(model, scheme, e.fine[l].row(i), epoch, fine_path, t);
          advance_filter_state(model, scheme, e.coarse[l].row(i), epoch, coarse_path, t);
        }
      });
  tally.substeps += spent.substeps;
  return e;
}

MlenkfStep mlenkf_step(MultilevelEnsemble e, const SdeModel& model, const LevelGrid& grid,
                       const ObservationModel& obs, std::span<const double> y, int epoch,
                       const FilterSettings& settings, CostTally& tally) {
  e = ml_predict(std::move(e), model, grid, epoch, settings, tally);
  const MultilevelGain g = ml_gain_flagged(ml_cov(e), obs);
  return {ml_update(std::move(e), g.gain, obs, y, epoch, settings), g.truncated};
}

MultilevelEnsemble initial_multilevel_ensemble(const Allocation& alloc, const GaussianMoments& init,
                                               std::uint64_t seed) {
  const std::size_t d = init.mean.size();
  MultilevelEnsemble e = make_multilevel_ensemble(alloc, d);
  for (int level = 0; level <= alloc.max_level; ++level) {
    const auto l = static_cast<std::size_t>(level);
    const Ensemble draws = initial_ensemble(init, alloc.m_per_level[l], level, seed);
    e.fine[l] = draws.members;
    if (level > 0) e.coarse[l] = draws.members;
  }
  return e;
}

FilterTrace mlenkf_run(const Allocation& alloc, const SdeModel& model, const LevelGrid& grid,
                       const ObservationModel& obs, std::span<const Vector> ys,
                       const GaussianMoments& init, const FilterSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  MultilevelEnsemble e = initial_multilevel_ensemble(alloc, init, settings.seed);
  FilterTrace trace;
  trace.method = "mlenkf";
  trace.push(ml_mean(e), ml_cov(e));
  CostTally tally;
  for (std::size_t n = 0; n < ys.size(); ++n) {
    MlenkfStep step = mlenkf_step(std::move(e), model, grid, obs, ys[n], static_cast<int>(n), settings, tally);
    e = std::move(step.ensemble);
    trace.push(ml_mean(e), ml_cov(e), step.truncated);
  }
  trace.cost.substeps = tally.substeps;
  trace.cost.ensemble_sizes = alloc.m_per_level;
  trace.cost.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace mlenkf
