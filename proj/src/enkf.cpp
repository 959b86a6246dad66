#include "mlenkf/enkf.hpp"

#include <chrono>
#include <cmath>

#include "mlenkf/error.hpp"
#include "mlenkf/parallel.hpp"
#include "mlenkf/stochastic.hpp"
#include "numeric.hpp"

namespace mlenkf {

Vector sample_mean(const Matrix& members) {
  if (members.rows() == 0) throw InvalidInput("sample_mean: empty ensemble");
  const std::size_t d = members.cols();
  // Accumulated relative to the first member; exact for constant ensembles.
  const auto ref = members.row(0);
  Vector shift(d, 0.0);
  for (std::size_t i = 1; i < members.rows(); ++i)
    for (std::size_t k = 0; k < d; ++k) shift[k] += members(i, k) - ref[k];
  const double inv = 1.0 / static_cast<double>(members.rows());
  Vector mean(d);
  for (std::size_t k = 0; k < d; ++k) mean[k] = ref[k] + shift[k] * inv;
  return mean;
}

SymMatrix sample_cov(const Matrix& members) {
  const Vector mean = sample_mean(members);
  const std::size_t d = members.cols();
  SymMatrix cov(d);
  Matrix acc(d, d);
  for (std::size_t i = 0; i < members.rows(); ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double da = members(i, a) - mean[a];
      for (std::size_t b = a; b < d; ++b) acc(a, b) += da * (members(i, b) - mean[b]);
    }
  }
  const double inv = 1.0 / static_cast<double>(members.rows());
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) cov.set(a, b, acc(a, b) * inv);
  return cov;
}

Vector sample_mean(const Ensemble& e) { return sample_mean(e.members); }
SymMatrix sample_cov(const Ensemble& e) { return sample_cov(e.members); }

double enkf_estimate(const Ensemble& e, const Observable& phi) {
  if (e.size() == 0) throw InvalidInput("enkf_estimate: empty ensemble");
  double sum = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) sum += phi(e.members.row(i));
  return sum / static_cast<double>(e.size());
}

void propagate_particle(const SdeModel& model, const Propagator& prop, std::span<double> x,
                        int epoch, int level, std::uint32_t particle, std::uint64_t seed,
                        BrownianPath& scratch, CostTally& tally) {
  Stream s({static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(level), particle,
            StreamRole::drive},
           seed);
  if (prop.exact) {
    std::array<double, 16> z{};
    const std::size_t k = model.exact_noise_dim();
    if (k == 0) throw InvalidInput("propagate_particle: model has no exact transition");
    if (k > z.size()) throw InvalidInput("propagate_particle: exact noise dimension too large");
    s.fill_normal(std::span(z).first(k));
    model.exact_transition(x, epoch, std::span<const double>(z).first(k));
    tally.substeps += 1;
    return;
  }
  draw_brownian(s, prop.steps, model.drive_dim(), scratch);
  advance_filter_state(model, prop.scheme, x, epoch, scratch, tally);
}

Vector perturbed_observation(const ObservationModel& obs, std::span<const double> y, int epoch,
                             int level, std::uint32_t particle, std::uint64_t seed) {
  Stream s({static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(level), particle,
            StreamRole::perturb},
           seed);
  Vector z(obs.obs_dim());
  s.fill_normal(z);
  Vector out(y.begin(), y.end());
  const Matrix& l = obs.gamma_chol();
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) out[i] += l(i, j) * z[j];
  return out;
}

void correct_particle(std::span<double> x, const Matrix& i_minus_kh, const Matrix& gain,
                      std::span<const double> y_tilde) {
  const std::size_t d = x.size();
  std::array<double, 64> prior{};
  if (d > prior.size()) throw InvalidInput("correct_particle: state dimension too large");
  std::copy(x.begin(), x.end(), prior.begin());
  for (std::size_t i = 0; i < d; ++i) {
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += i_minus_kh(i, j) * prior[j];
    for (std::size_t j = 0; j < y_tilde.size(); ++j) v += gain(i, j) * y_tilde[j];
    x[i] = v;
  }
}

Ensemble enkf_step(Ensemble e, const SdeModel& model, const Propagator& prop,
                   const ObservationModel& obs, std::span<const double> y, int epoch,
                   const FilterSettings& settings, CostTally& tally) {
  if (y.size() != obs.obs_dim()) throw InvalidInput("enkf_step: observation has wrong dimension");
  if (e.dim() != model.dim() || e.dim() != obs.state_dim()) {
    throw InvalidInput("enkf_step: ensemble dimension does not match the models");
  }
  const std::size_t m = e.size();

  const CostTally predicted = parallel_for(m, settings.threads, [&](std::size_t b, std::size_t end, CostTally& t) {
    BrownianPath scratch;
    for (std::size_t i = b; i < end; ++i) {
      propagate_particle(model, prop, e.members.row(i), epoch, e.level,
                         static_cast<std::uint32_t>(i), settings.seed, scratch, t);
    }
  });
  tally.substeps += predicted.substeps;

  const Matrix gain = kalman_gain(sample_cov(e.members), obs);
  const Matrix i_minus_kh = Matrix::identity(e.dim()) - gain * obs.h();

  parallel_for(m, settings.threads, [&](std::size_t b, std::size_t end, CostTally&) {
    for (std::size_t i = b; i < end; ++i) {
      const Vector y_tilde =
          perturbed_observation(obs, y, epoch, e.level, static_cast<std::uint32_t>(i), settings.seed);
      correct_particle(e.members.row(i), i_minus_kh, gain, y_tilde);
    }
  });
  return e;
}

Ensemble initial_ensemble(const GaussianMoments& init, std::size_t members, int level,
                          std::uint64_t seed) {
  if (members == 0) throw InvalidInput("initial_ensemble: need at least one member");
  const std::size_t d = init.mean.size();
  if (init.cov.dim() != d) throw InvalidInput("initial_ensemble: mean/cov dimension mismatch");
  const Matrix factor = psd_factor(init.cov);
  Ensemble e{Matrix(members, d), level};
  for (std::size_t i = 0; i < members; ++i) {
    Stream s({0u, static_cast<std::uint32_t>(level), static_cast<std::uint32_t>(i), StreamRole::init},
             seed);
    const Vector x = gaussian(s, init.mean, factor);
    std::copy(x.begin(), x.end(), e.members.row(i).begin());
  }
  return e;
}

FilterTrace enkf_run(const SdeModel& model, const Propagator& prop, const ObservationModel& obs,
                     std::span<const Vector> ys, const GaussianMoments& init, std::size_t members,
                     int level, const FilterSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  Ensemble e = initial_ensemble(init, members, level, settings.seed);
  FilterTrace trace;
  trace.method = "enkf";
  trace.push(sample_mean(e), sample_cov(e));
  CostTally tally;
  for (std::size_t n = 0; n < ys.size(); ++n) {
    e = enkf_step(std::move(e), model, prop, obs, ys[n], static_cast<int>(n), settings, tally);
    trace.push(sample_mean(e), sample_cov(e));
  }
  trace.cost.substeps = tally.substeps;
  trace.cost.ensemble_sizes = {members};
  trace.cost.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

EnkfAllocation enkf_budget_allocation(double budget, double c) {
  if (!(budget > 0.0) || !(c > 0.0)) throw InvalidInput("enkf_budget_allocation: budget and c must be > 0");
  EnkfAllocation a;
  const double root = std::cbrt(budget);
  a.members = static_cast<std::size_t>(std::max(1.0, detail::tolerant_ceil(c * root * root)));
  a.steps = static_cast<std::size_t>(std::max(1.0, detail::tolerant_ceil(c * root)));
  return a;
}

}  // namespace mlenkf
