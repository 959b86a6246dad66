#pragma once

// Experiment drivers: synthetic data, reference filters, error measures, level
// decay estimation and cost-vs-error sweeps.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mlenkf/enkf.hpp"
#include "mlenkf/integrate.hpp"
#include "mlenkf/kalman.hpp"
#include "mlenkf/mlenkf.hpp"
#include "mlenkf/models.hpp"
#include "mlenkf/trace.hpp"

namespace mlenkf {

struct SyntheticData {
  std::vector<Vector> truth;         // filter coordinates, times 0..N
  std::vector<Vector> observations;  // times 1..N
};

/// One exact signal realization from the model's initial condition and noisy
/// observations of it, both drawn from truth-role streams. `noise_scale`
/// multiplies every standard normal draw (0 gives the noiseless path).
SyntheticData synthesize(const SdeModel& model, const ObservationModel& obs, std::size_t epochs,
                         std::uint64_t seed, double noise_scale = 1.0);

/// Dirac initial law at the model's initial condition.
GaussianMoments initial_moments(const SdeModel& model);

/// Kalman filter on the model's linear-Gaussian form (with its known controls).
FilterTrace gold_standard(const SdeModel& model, const ObservationModel& obs,
                          std::span<const Vector> ys);

enum class TraceField { mean, cov };

/// sqrt(Σ_{n=1}^N |ref_n − est_n|² / N). Means use the Euclidean norm,
/// covariances the induced 2-norm.
double rmse(const FilterTrace& est, const FilterTrace& ref, TraceField field);

struct RatePoint {
  double x = 0.0;
  double y = 0.0;
};

/// Least-squares slope of log y against log x.
double fit_rate(std::span<const RatePoint> points);

/// 1 − Φ((threshold − m)/√c).
double exceedance_ref(double m, double c, double threshold);

struct LevelDecayRow {
  int level = 0;
  std::size_t steps = 0;
  double mean_diff = 0.0;               // |E[φ(Ψ^ℓ) − φ(Ψ^{ℓ−1})]|
  std::vector<double> moment_diff;      // ‖φ(Ψ^ℓ) − φ(Ψ^{ℓ−1})‖_p, one per requested p
};

struct LevelDecay {
  std::vector<double> moment_orders;
  std::vector<LevelDecayRow> rows;  // ℓ = 1..ℓ_max
  double alpha_hat = 0.0;
  std::vector<double> beta_hat;     // one per requested p

  double beta_hat_for(double p) const;
};

struct LevelDecaySettings {
  std::size_t samples = 100000;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Estimates level differences of φ over one epoch from the model's initial
/// condition for ℓ = 1..max_level (M coupled pairs per level; φ acts on the
/// SDE state) and fits α̂ = −slope of log|E Δ| and β̂(p) = −2·slope of log‖Δ‖_p
/// against log N_ℓ.
LevelDecay level_decay(const SdeModel& model, const LevelGrid& grid, const Observable& phi,
                       int max_level, std::span<const double> moment_orders,
                       const LevelDecaySettings& settings);

struct BenchmarkConfig {
  std::size_t epochs = 100;
  std::vector<double> budgets;        // per-epoch substep budgets J
  std::size_t replicates = 1;         // filter seeds master_seed + r
  std::uint64_t master_seed = 0;      // also seeds the observation realization
  Rates rates;
  double c_m = 1.0;
  double enkf_c = 1.0;
  bool run_enkf = true;
  bool run_mlenkf = true;
  std::size_t threads = 1;
};

/// Geometric sweep min, min·factor, … up to and including max (within 1e-9).
std::vector<double> geometric_budgets(double min, double max, double factor);

struct BenchmarkRow {
  std::string method;
  double budget = 0.0;
  std::uint64_t substeps = 0;
  double wall_seconds = 0.0;
  double rmse_mean = 0.0;
  double rmse_cov = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> ensemble_sizes;
};

/// For each (method, budget, replicate): allocate, run the filter against one
/// fixed observation realization and score it against the gold standard.
/// Rows are ordered by method, then budget, then seed.
std::vector<BenchmarkRow> benchmark(const SdeModel& model, const ObservationModel& obs,
                                    const LevelGrid& grid, const BenchmarkConfig& config);

/// `method,budget,substeps,wall_seconds,rmse_mean,rmse_cov,seed`
void write_benchmark_csv(std::ostream& out, std::span<const BenchmarkRow> rows);
/// `epoch,mean_0..,cov_0_0,cov_0_1..,truncated`; upper triangle of the covariance.
void write_trace_csv(std::ostream& out, const FilterTrace& trace);
/// `level,steps,mean_diff,norm_p<p>...`
void write_level_decay_csv(std::ostream& out, const LevelDecay& decay);

/// 17 significant digits, '.' decimal separator, independent of locale.
std::string format_real(double v);

}  // namespace mlenkf
