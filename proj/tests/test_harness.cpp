#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "mlenkf/error.hpp"
#include "mlenkf/harness.hpp"
#include "support.hpp"

using namespace mlenkf;

namespace {

// A scalar model with no exact sampler.
class DriftOnly final : public SdeModel {
 public:
  std::string_view name() const override { return "drift-only"; }
  std::size_t dim() const override { return 1; }
  std::size_t drive_dim() const override { return 1; }
  void drift(std::span<const double> u, int, std::span<double> out) const override { out[0] = -u[0]; }
  void diffusion(std::span<const double>, int, std::span<double> out) const override { out[0] = 0.0; }
  double diffusion_derivative_product(double, int) const override { return 0.0; }
  Integrator preferred_integrator() const override { return Integrator::euler_maruyama; }
  Vector initial_filter_state() const override { return {1.0}; }
};

FilterTrace scalar_trace(std::initializer_list<double> means, std::initializer_list<double> covs) {
  FilterTrace t;
  auto c = covs.begin();
  for (double m : means) t.push({m}, SymMatrix{{*c++}});
  return t;
}

}  // namespace

TEST_CASE("noiseless OU truth decays geometrically and is observed exactly") {
  const OuModel ou = ou_model(0.5);
  const SyntheticData d = synthesize(ou, scalar_observation(1.0, 0.04), 10, 1, 0.0);
  REQUIRE(d.truth.size() == 11);
  REQUIRE(d.observations.size() == 10);
  for (std::size_t n = 0; n <= 10; ++n) CHECK(d.truth[n][0] == doctest::Approx(std::exp(-static_cast<double>(n))).epsilon(1e-13));
  for (std::size_t n = 0; n < 10; ++n) CHECK(d.observations[n] == d.truth[n + 1]);
}

TEST_CASE("noiseless GBM log-truth alternates") {
  const GbmModel gbm = gbm_model(0.25);
  const SyntheticData d = synthesize(gbm, scalar_observation(1.0, 0.0625), 4, 1, 0.0);
  CHECK(d.truth[0][0] == 0.0);
  CHECK(d.truth[1][0] == 0.03125);
  CHECK(d.truth[2][0] == 0.0);
  CHECK(d.truth[3][0] == 0.03125);
}

TEST_CASE("synthesis is deterministic in the seed") {
  const OuModel ou = ou_model(0.5);
  const ObservationModel obs = scalar_observation(1.0, 0.04);
  const SyntheticData a = synthesize(ou, obs, 50, 9);
  const SyntheticData b = synthesize(ou, obs, 50, 9);
  const SyntheticData c = synthesize(ou, obs, 50, 10);
  CHECK(a.truth == b.truth);
  CHECK(a.observations == b.observations);
  CHECK(a.observations != c.observations);
}

TEST_CASE("synthesis needs an exact transition") {
  CHECK_THROWS_AS(synthesize(DriftOnly{}, scalar_observation(1.0, 0.04), 3, 1), InvalidInput);
  CHECK_THROWS_AS(gold_standard(DriftOnly{}, scalar_observation(1.0, 0.04), {}), InvalidInput);
}

TEST_CASE("rmse examples") {
  const FilterTrace ref = scalar_trace({9.0, 0.0, 0.0}, {0.0, 1.0, 1.0});
  CHECK(rmse(ref, ref, TraceField::mean) == 0.0);
  CHECK(rmse(ref, ref, TraceField::cov) == 0.0);
  const FilterTrace shifted = scalar_trace({9.0, 0.25, 0.25}, {0.0, 1.5, 1.5});
  CHECK(rmse(shifted, ref, TraceField::mean) == 0.25);
  CHECK(rmse(shifted, ref, TraceField::cov) == 0.5);
  const FilterTrace est = scalar_trace({-4.0, 3.0, 4.0}, {0.0, 1.0, 1.0});
  CHECK(rmse(est, ref, TraceField::mean) == doctest::Approx(3.5355339059327378).epsilon(1e-15));
  CHECK_THROWS_AS(rmse(scalar_trace({0.0, 1.0}, {0.0, 0.0}), ref, TraceField::mean), InvalidInput);
}

TEST_CASE("rmse ignores the order of epochs") {
  const FilterTrace ref = scalar_trace({0.0, 0.1, 0.2, 0.3}, {0.0, 1.0, 2.0, 3.0});
  const FilterTrace a = scalar_trace({0.0, 0.5, -0.2, 0.9}, {0.0, 1.1, 2.5, 2.0});
  const FilterTrace ref_p = scalar_trace({0.0, 0.3, 0.1, 0.2}, {0.0, 3.0, 1.0, 2.0});
  const FilterTrace a_p = scalar_trace({0.0, 0.9, 0.5, -0.2}, {0.0, 2.0, 1.1, 2.5});
  CHECK(rmse(a, ref, TraceField::mean) == doctest::Approx(rmse(a_p, ref_p, TraceField::mean)).epsilon(1e-15));
  CHECK(rmse(a, ref, TraceField::cov) == doctest::Approx(rmse(a_p, ref_p, TraceField::cov)).epsilon(1e-15));
}

TEST_CASE("fit_rate examples") {
  const RatePoint exact[] = {{1.0, 1.0}, {10.0, std::pow(10.0, -0.5)}, {100.0, 0.1}};
  CHECK(std::abs(fit_rate(exact) + 0.5) <= 1e-12);
  const RatePoint two[] = {{1.0, 1.0}, {4.0, 2.0}};
  CHECK(fit_rate(two) == doctest::Approx(0.5).epsilon(1e-14));

  mlenkf::testing::Rng rng(2);
  std::vector<RatePoint> noisy;
  for (int i = 0; i < 20; ++i) {
    const double x = std::pow(10.0, i / 5.0);
    noisy.push_back({x, 3.0 / x * (1.0 + 0.01 * rng.normal())});
  }
  CHECK(std::abs(fit_rate(noisy) + 1.0) <= 0.05);

  const RatePoint one[] = {{1.0, 1.0}};
  CHECK_THROWS_AS(fit_rate(one), InvalidInput);
  const RatePoint bad[] = {{1.0, 1.0}, {2.0, 0.0}};
  CHECK_THROWS_AS(fit_rate(bad), InvalidInput);
}

TEST_CASE("exceedance reference values") {
  CHECK(exceedance_ref(0.1, 0.04, 0.1) == 0.5);
  CHECK(exceedance_ref(0.1 + 3.0 * 0.2, 0.04, 0.1) == doctest::Approx(0.9986501019683699).epsilon(1e-12));
  CHECK(exceedance_ref(0.1 - 3.0 * 0.2, 0.04, 0.1) == doctest::Approx(0.0013498980316301).epsilon(1e-9));
  CHECK_THROWS_AS(exceedance_ref(0.0, 0.0, 0.1), InvalidInput);
}

TEST_CASE("GBM gold standard equals a scalar Kalman recursion with controls") {
  const GbmModel gbm = gbm_model(0.25);
  const ObservationModel obs = scalar_observation(1.0, 0.0625);
  const SyntheticData d = synthesize(gbm, obs, 200, 3);
  const FilterTrace t = gold_standard(gbm, obs, d.observations);
  double m = 0.0, c = 0.0;
  const double s2 = 0.0625;
  for (std::size_t n = 0; n < 200; ++n) {
    m += (n % 2 == 0 ? 1.0 : -1.0) * s2 / 2.0;
    c += s2;
    const double k = c / (c + 0.0625);
    m += k * (d.observations[n][0] - m);
    c *= 1.0 - k;
    CHECK(std::abs(t.mean[n + 1][0] - m) <= 1e-10);
    CHECK(std::abs(t.cov[n + 1](0, 0) - c) <= 1e-10);
  }
}

TEST_CASE("level decay structure") {
  const OuModel ou = ou_model(0.5);
  const double orders[] = {2.0, 4.0};
  LevelDecaySettings s;
  s.samples = 2000;
  const LevelDecay d = level_decay(ou, LevelGrid(2, 2), [](std::span<const double> u) { return u[0]; }, 4, orders, s);
  REQUIRE(d.rows.size() == 4);
  CHECK(d.rows[0].level == 1);
  CHECK(d.rows[3].steps == 32);
  CHECK(d.beta_hat.size() == 2);
  CHECK(d.beta_hat_for(4.0) == d.beta_hat[1]);
  CHECK_THROWS_AS(d.beta_hat_for(3.0), InvalidInput);
  CHECK_THROWS_AS(level_decay(ou, LevelGrid(2, 2), [](std::span<const double> u) { return u[0]; }, 1, orders, s),
                  InvalidInput);

  std::ostringstream csv;
  write_level_decay_csv(csv, d);
  CHECK(csv.str().rfind("level,steps,mean_diff,norm_p2,norm_p4\n1,4,", 0) == 0);
}

TEST_CASE("OU level decay rates") {
  const OuModel ou = ou_model(0.5);
  const double orders[] = {2.0};
  LevelDecaySettings s;
  s.samples = 20000;
  s.seed = 4;
  const LevelDecay d = level_decay(ou, LevelGrid(2, 2), [](std::span<const double> u) { return u[0]; }, 6, orders, s);
  CHECK(d.alpha_hat >= 0.8);
  CHECK(d.alpha_hat <= 1.2);
  CHECK(d.beta_hat[0] >= 1.7);
  CHECK(d.beta_hat[0] <= 2.3);
}

TEST_CASE("benchmark rows and cost accounting") {
  const OuModel ou = ou_model(0.5);
  const ObservationModel obs = scalar_observation(1.0, 0.04);
  const LevelGrid g(2, 2);
  BenchmarkConfig cfg;
  cfg.epochs = 5;
  cfg.budgets = {2000.0};
  cfg.master_seed = 3;
  const std::vector<BenchmarkRow> rows = benchmark(ou, obs, g, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "enkf");
  CHECK(rows[1].method == "mlenkf");
  const EnkfAllocation e = enkf_budget_allocation(2000.0);
  CHECK(rows[0].substeps == 5 * e.members * e.steps);
  CHECK(rows[1].substeps == 5 * allocation_cost(allocate_for_budget(2000.0, cfg.rates, g), g));
  for (const BenchmarkRow& r : rows) {
    CHECK(r.seed == 3);
    CHECK(r.rmse_mean > 0.0);
    CHECK(r.rmse_cov > 0.0);
  }

  cfg.budgets = {1000.0, 4000.0};
  cfg.replicates = 3;
  const std::vector<BenchmarkRow> more = benchmark(ou, obs, g, cfg);
  CHECK(more.size() == 12);
  CHECK(more[5].seed == 5);
  CHECK(more[5].budget == 4000.0);
}

TEST_CASE("geometric budgets") {
  CHECK(geometric_budgets(1e3, 8e3, 2.0) == std::vector<double>{1e3, 2e3, 4e3, 8e3});
  CHECK(geometric_budgets(5.0, 5.0, 3.0) == std::vector<double>{5.0});
  CHECK_THROWS_AS(geometric_budgets(1.0, 10.0, 1.0), InvalidInput);
}

TEST_CASE("CSV writers") {
  std::ostringstream b;
  const BenchmarkRow row{"mlenkf", 1000.0, 1234, 0.5, 0.1, 1.0 / 3.0, 7, {}};
  write_benchmark_csv(b, std::span<const BenchmarkRow>(&row, 1));
  CHECK(b.str() == "method,budget,substeps,wall_seconds,rmse_mean,rmse_cov,seed\n"
                   "mlenkf,1000,1234,0.5,0.10000000000000001,0.33333333333333331,7\n");

  FilterTrace t;
  t.push({1.0, 2.0}, SymMatrix{{1.0, 0.5}, {0.5, 2.0}});
  t.push({0.25, -1.0}, SymMatrix{{0.5, 0.0}, {0.0, 0.25}}, true);
  std::ostringstream c;
  write_trace_csv(c, t);
  CHECK(c.str() == "epoch,mean_0,mean_1,cov_0_0,cov_0_1,cov_1_1,truncated\n"
                   "0,1,2,1,0.5,2,0\n"
                   "1,0.25,-1,0.5,0,0.25,1\n");
  for (double v : {1e-20, 0.1, -2.5e300, 1.0 / 3.0}) CHECK(std::stod(format_real(v)) == v);
}
