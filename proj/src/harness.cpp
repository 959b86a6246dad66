#include "mlenkf/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

#include "mlenkf/error.hpp"
#include "mlenkf/parallel.hpp"

namespace mlenkf {

namespace {

constexpr std::uint32_t kSignalNoiseLevel = 0;
constexpr std::uint32_t kObservationNoiseLevel = 1;

double vector_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

SyntheticData synthesize(const SdeModel& model, const ObservationModel& obs, std::size_t epochs,
                         std::uint64_t seed, double noise_scale) {
  if (!model.has_exact_transition()) {
    throw InvalidInput("synthesize: model '" + std::string(model.name()) + "' has no exact transition");
  }
  SyntheticData data;
  Vector x = model.initial_filter_state();
  data.truth.push_back(x);
  Vector xi(model.exact_noise_dim());
  Vector eta(obs.obs_dim());
  for (std::size_t n = 0; n < epochs; ++n) {
    const auto epoch = static_cast<std::uint32_t>(n);
    Stream signal({epoch, kSignalNoiseLevel, 0u, StreamRole::truth}, seed);
    signal.fill_normal(xi);
    for (double& z : xi) z *= noise_scale;
    model.exact_transition(x, static_cast<int>(n), xi);
    data.truth.push_back(x);

    Stream noise({epoch, kObservationNoiseLevel, 0u, StreamRole::truth}, seed);
    noise.fill_normal(eta);
    for (double& z : eta) z *= noise_scale;
    data.observations.push_back(observe(x, obs, eta));
  }
  return data;
}

GaussianMoments initial_moments(const SdeModel& model) {
  return {model.initial_filter_state(), SymMatrix(model.dim())};
}

FilterTrace gold_standard(const SdeModel& model, const ObservationModel& obs,
                          std::span<const Vector> ys) {
  const auto sig = model.linear_signal();
  if (!sig) throw InvalidInput("gold_standard: model '" + std::string(model.name()) + "' is not linear-Gaussian");
  std::vector<Vector> controls;
  controls.reserve(ys.size());
  for (std::size_t n = 0; n < ys.size(); ++n) controls.push_back(model.control(static_cast<int>(n)));
  FilterTrace trace = kf_run(*sig, obs, ys, initial_moments(model), controls);
  trace.method = "kalman";
  return trace;
}

double rmse(const FilterTrace& est, const FilterTrace& ref, TraceField field) {
  if (est.mean.size() != ref.mean.size() || est.cov.size() != ref.cov.size()) {
    throw InvalidInput("rmse: traces have different lengths");
  }
  const std::size_t n = est.epochs();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    double e;
    if (field == TraceField::mean) {
      e = vector_distance(est.mean[k], ref.mean[k]);
    } else {
      e = spectral_norm(ref.cov[k] - est.cov[k]);
    }
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(n));
}

double fit_rate(std::span<const RatePoint> points) {
  if (points.size() < 2) throw InvalidInput("fit_rate: need at least two points");
  double sx = 0.0, sy = 0.0;
  for (const RatePoint& p : points) {
    if (!(p.x > 0.0) || !(p.y > 0.0)) throw InvalidInput("fit_rate: coordinates must be positive");
    sx += std::log(p.x);
    sy += std::log(p.y);
  }
  const double n = static_cast<double>(points.size());
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (const RatePoint& p : points) {
    const double dx = std::log(p.x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(p.y) - my);
  }
  if (sxx == 0.0) throw InvalidInput("fit_rate: all x values coincide");
  return sxy / sxx;
}

double exceedance_ref(double m, double c, double threshold) {
  if (!(c > 0.0)) throw InvalidInput("exceedance_ref: variance must be positive");
  return 0.5 * std::erfc((threshold - m) / std::sqrt(2.0 * c));
}

// --- Level decay ---------------------------------------------------------------

double LevelDecay::beta_hat_for(double p) const {
  for (std::size_t k = 0; k < moment_orders.size(); ++k)
    if (moment_orders[k] == p) return beta_hat[k];
  throw InvalidInput("LevelDecay: moment order not estimated");
}

LevelDecay level_decay(const SdeModel& model, const LevelGrid& grid, const Observable& phi,
                       int max_level, std::span<const double> moment_orders,
                       const LevelDecaySettings& settings) {
  if (max_level < 2) throw InvalidInput("level_decay: need max_level >= 2 to fit a slope");
  if (settings.samples < 2) throw InvalidInput("level_decay: need at least two samples");
  for (double p : moment_orders)
    if (!(p >= 1.0)) throw InvalidInput("level_decay: moment orders must be >= 1");

  LevelDecay out;
  out.moment_orders.assign(moment_orders.begin(), moment_orders.end());
  const std::size_t m = settings.samples;
  const Integrator scheme = model.preferred_integrator();
  Vector start = model.initial_filter_state();
  model.to_state(start);

  std::vector<double> diffs(m);
  for (int level = 1; level <= max_level; ++level) {
    parallel_for(m, settings.threads, [&](std::size_t b, std::size_t end, CostTally& tally) {
      BrownianPath fine_path;
      BrownianPath coarse_path;
      Vector fine(start.size());
      Vector coarse(start.size());
      for (std::size_t i = b; i < end; ++i) {
        Stream s({static_cast<std::uint32_t>(settings.epoch), static_cast<std::uint32_t>(level),
                  static_cast<std::uint32_t>(i), StreamRole::drive},
                 settings.seed);
        draw_brownian(s, grid.steps(level), model.drive_dim(), fine_path);
        coarsen(fine_path, grid.nhat(), coarse_path);
        fine = start;
        coarse = start;
        integrate_path(model, scheme, fine, settings.epoch, fine_path, tally);
        integrate_path(model, scheme, coarse, settings.epoch, coarse_path, tally);
        diffs[i] = phi(fine) - phi(coarse);
      }
    });

    LevelDecayRow row;
    row.level = level;
    row.steps = grid.steps(level);
    double sum = 0.0;
    for (double d : diffs) sum += d;
    row.mean_diff = std::abs(sum / static_cast<double>(m));
    for (double p : moment_orders) {
      double acc = 0.0;
      for (double d : diffs) acc += std::pow(std::abs(d), p);
      row.moment_diff.push_back(std::pow(acc / static_cast<double>(m), 1.0 / p));
    }
    out.rows.push_back(std::move(row));
  }

  std::vector<RatePoint> weak;
  for (const auto& row : out.rows)
    if (row.mean_diff > 0.0) weak.push_back({static_cast<double>(row.steps), row.mean_diff});
  out.alpha_hat = weak.size() >= 2 ? -fit_rate(weak) : 0.0;

  for (std::size_t k = 0; k < moment_orders.size(); ++k) {
    std::vector<RatePoint> strong;
    for (const auto& row : out.rows)
      if (row.moment_diff[k] > 0.0) strong.push_back({static_cast<double>(row.steps), row.moment_diff[k]});
    out.beta_hat.push_back(strong.size() >= 2 ? -2.0 * fit_rate(strong) : 0.0);
  }
  return out;
}

// --- Benchmark -------------------------------------------------------------------

std::vector<double> geometric_budgets(double min, double max, double factor) {
  if (!(min > 0.0) || !(max >= min) || !(factor > 1.0)) {
    throw InvalidInput("geometric_budgets: need 0 < min <= max and factor > 1");
  }
  std::vector<double> out;
  for (double b = min; b <= max * (1.0 + 1e-9); b *= factor) out.push_back(b);
  return out;
}

std::vector<BenchmarkRow> benchmark(const SdeModel& model, const ObservationModel& obs,
                                    const LevelGrid& grid, const BenchmarkConfig& config) {
  if (config.budgets.empty()) throw InvalidInput("benchmark: no budgets given");
  if (config.replicates == 0) throw InvalidInput("benchmark: need at least one replicate");

  const SyntheticData data = synthesize(model, obs, config.epochs, config.master_seed);
  const FilterTrace reference = gold_standard(model, obs, data.observations);
  const GaussianMoments init = initial_moments(model);

  std::vector<double> budgets = config.budgets;
  std::sort(budgets.begin(), budgets.end());

  std::vector<BenchmarkRow> rows;
  auto score = [&](const std::string& method, double budget, std::uint64_t seed, const FilterTrace& t) {
    rows.push_back({method, budget, t.cost.substeps, t.cost.wall_seconds,
                    rmse(t, reference, TraceField::mean), rmse(t, reference, TraceField::cov), seed,
                    t.cost.ensemble_sizes});
  };

  if (config.run_enkf) {
    for (double budget : budgets) {
      const EnkfAllocation a = enkf_budget_allocation(budget, config.enkf_c);
      const Propagator prop = Propagator::numerical(a.steps, model.preferred_integrator());
      for (std::size_t r = 0; r < config.replicates; ++r) {
        const std::uint64_t seed = config.master_seed + r;
        score("enkf", budget, seed,
              enkf_run(model, prop, obs, data.observations, init, a.members, 0, {seed, config.threads}));
      }
    }
  }
  if (config.run_mlenkf) {
    for (double budget : budgets) {
      const Allocation a = allocate_for_budget(budget, config.rates, grid, config.c_m);
      for (std::size_t r = 0; r < config.replicates; ++r) {
        const std::uint64_t seed = config.master_seed + r;
        score("mlenkf", budget, seed,
              mlenkf_run(a, model, grid, obs, data.observations, init, {seed, config.threads}));
      }
    }
  }
  return rows;
}

// --- CSV -------------------------------------------------------------------------

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_benchmark_csv(std::ostream& out, std::span<const BenchmarkRow> rows) {
  out << "method,budget,substeps,wall_seconds,rmse_mean,rmse_cov,seed\n";
  for (const BenchmarkRow& r : rows) {
    out << r.method << ',' << format_real(r.budget) << ',' << r.substeps << ','
        << format_real(r.wall_seconds) << ',' << format_real(r.rmse_mean) << ','
        << format_real(r.rmse_cov) << ',' << r.seed << '\n';
  }
}

void write_trace_csv(std::ostream& out, const FilterTrace& trace) {
  const std::size_t d = trace.mean.empty() ? 0 : trace.mean.front().size();
  out << "epoch";
  for (std::size_t i = 0; i < d; ++i) out << ",mean_" << i;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) out << ",cov_" << i << '_' << j;
  out << ",truncated\n";
  for (std::size_t n = 0; n < trace.mean.size(); ++n) {
    out << n;
    for (double v : trace.mean[n]) out << ',' << format_real(v);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) out << ',' << format_real(trace.cov[n](i, j));
    out << ',' << (trace.truncated[n] ? 1 : 0) << '\n';
  }
}

void write_level_decay_csv(std::ostream& out, const LevelDecay& decay) {
  out << "level,steps,mean_diff";
  for (double p : decay.moment_orders) out << ",norm_p" << format_real(p);
  out << '\n';
  for (const LevelDecayRow& row : decay.rows) {
    out << row.level << ',' << row.steps << ',' << format_real(row.mean_diff);
    for (double v : row.moment_diff) out << ',' << format_real(v);
    out << '\n';
  }
}

}  // namespace mlenkf
