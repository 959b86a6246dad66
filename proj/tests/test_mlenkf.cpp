#include <doctest.h>

#include <cmath>

#include "bound_checks.hpp"
#include "mlenkf/enkf.hpp"
#include "mlenkf/error.hpp"
#include "mlenkf/harness.hpp"
#include "mlenkf/kalman.hpp"
#include "mlenkf/mlenkf.hpp"

using namespace mlenkf;

namespace {

const Rates kOuRates{1.0, 2.0, 1.0};
const Rates kEqualRates{1.0, 1.0, 1.0};

Allocation fixed_allocation(std::vector<std::size_t> m) {
  Allocation a;
  a.max_level = static_cast<int>(m.size()) - 1;
  a.m_per_level = std::move(m);
  return a;
}

MultilevelEnsemble scalar_hierarchy(const std::vector<std::vector<std::pair<double, double>>>& levels) {
  MultilevelEnsemble e;
  for (const auto& pairs : levels) {
    Matrix f(pairs.size(), 1), c(pairs.size(), 1);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      f(i, 0) = pairs[i].first;
      c(i, 0) = pairs[i].second;
    }
    e.fine.push_back(f);
    e.coarse.push_back(c);
  }
  return e;
}

// Exact linear-Gaussian form of N Euler steps of du = −u dt + σ dW.
LinearSignal discretized_ou(double sigma, std::size_t n) {
  const double h = 1.0 / static_cast<double>(n);
  const double a = std::pow(1.0 - h, static_cast<double>(n));
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::pow(1.0 - h, 2.0 * static_cast<double>(k));
  return {Matrix{{a}}, SymMatrix{{sigma * sigma * h * s}}};
}

}  // namespace

TEST_CASE("allocation table for alpha=1, beta=2, gamma=1 with L=3") {
  const LevelGrid g(2, 2);
  const Allocation a = allocate_levels(3, kOuRates, g, 1.0);
  CHECK(a.max_level == 3);
  CHECK(a.m_per_level == std::vector<std::size_t>{102, 41, 16, 7});
  CHECK(allocate(0.125, kOuRates, g).m_per_level == std::vector<std::size_t>{102, 41, 16, 7});
}

TEST_CASE("allocation table for beta=gamma=1 with L=2") {
  const LevelGrid g(2, 2);
  CHECK(allocate_levels(2, kEqualRates, g, 1.0).m_per_level == std::vector<std::size_t>{128, 64, 32});
  CHECK(allocate(0.25, kEqualRates, g).m_per_level == std::vector<std::size_t>{128, 64, 32});
}

TEST_CASE("allocation with beta < gamma") {
  const LevelGrid g(2, 2);
  // F = N_L^{2α + 2(γ−β)/3}; exponent (β + 2γ)/3.
  const Rates r{1.0, 0.5, 1.0};
  const Allocation a = allocate_levels(2, r, g, 1.0);
  for (int l = 0; l <= 2; ++l) {
    const double n = static_cast<double>(g.steps(l));
    const double expected = std::ceil(std::pow(8.0, 2.0 + 1.0 / 3.0) * std::pow(n, -2.5 / 3.0));
    CHECK(a.m_per_level[static_cast<std::size_t>(l)] == static_cast<std::size_t>(expected));
  }
}

TEST_CASE("level count from epsilon") {
  const LevelGrid g(2, 2);
  CHECK(allocate(1.0, kOuRates, g).max_level == 0);
  CHECK(allocate(0.5, kOuRates, g).max_level == 1);
  CHECK(allocate(0.3, kOuRates, g).max_level == 2);
  CHECK(allocate(0.01, kOuRates, g).max_level == 7);
  CHECK(allocate(0.01, kOuRates, g).epsilon == 0.01);
}

TEST_CASE("allocations are non-increasing and at least one") {
  const LevelGrid g(2, 2);
  for (const Rates& r : {kOuRates, kEqualRates, Rates{1.0, 0.5, 1.0}, Rates{2.0, 3.0, 1.0}}) {
    for (int l = 0; l <= 12; ++l) {
      for (double c : {1e-3, 1.0, 7.5}) {
        const Allocation a = allocate_levels(l, r, g, c);
        REQUIRE(a.m_per_level.size() == static_cast<std::size_t>(l) + 1);
        for (std::size_t k = 0; k < a.m_per_level.size(); ++k) {
          CHECK(a.m_per_level[k] >= 1);
          if (k > 0) CHECK(a.m_per_level[k] <= a.m_per_level[k - 1]);
        }
      }
    }
  }
}

TEST_CASE("allocation rejects invalid rates") {
  const LevelGrid g(2, 2);
  CHECK_THROWS_AS(allocate(0.1, {0.0, 2.0, 1.0}, g), InvalidInput);
  CHECK_THROWS_AS(allocate(0.1, {1.0, -2.0, 1.0}, g), InvalidInput);
  CHECK_THROWS_AS(allocate(0.1, {0.4, 2.0, 1.0}, g), InvalidInput);
  CHECK_THROWS_AS(allocate(0.0, kOuRates, g), InvalidInput);
  CHECK_THROWS_AS(allocate(0.1, kOuRates, LevelGrid(2, 1)), InvalidInput);
}

TEST_CASE("allocation cost and budget inversion") {
  const LevelGrid g(2, 2);
  const Allocation a = allocate_levels(3, kOuRates, g);
  CHECK(allocation_cost(a, g) == 102u * 2 + 41u * 6 + 16u * 12 + 7u * 24);

  Allocation prev = allocate_for_budget(100.0, kOuRates, g);
  for (double j = 200.0; j <= 1e7; j *= 2.0) {
    const Allocation next = allocate_for_budget(j, kOuRates, g);
    CHECK(next.max_level >= prev.max_level);
    for (std::size_t k = 0; k < prev.m_per_level.size(); ++k) CHECK(next.m_per_level[k] >= prev.m_per_level[k]);
    if (next.max_level > 0) CHECK(static_cast<double>(allocation_cost(next, g)) <= j);
    CHECK(static_cast<double>(allocation_cost(allocate_levels(next.max_level + 1, kOuRates, g), g)) > j);
    prev = next;
  }
}

TEST_CASE("multilevel mean examples") {
  const MultilevelEnsemble one = scalar_hierarchy({{{1.0, 0.0}, {3.0, 0.0}}});
  CHECK(ml_mean(one) == Vector{2.0});
  CHECK(ml_mean(scalar_hierarchy({{{2.0, 0.0}}, {{3.0, 2.5}}})) == Vector{2.5});
  const MultilevelEnsemble same = scalar_hierarchy({{{1.0, 0.0}, {2.0, 0.0}}, {{5.0, 5.0}, {-1.0, -1.0}}});
  CHECK(ml_mean(same) == Vector{1.5});
}

TEST_CASE("multilevel covariance examples") {
  CHECK(ml_cov(scalar_hierarchy({{{-1.0, 0.0}, {1.0, 0.0}}}))(0, 0) == 1.0);
  CHECK(ml_cov(scalar_hierarchy({{{-1.0, 0.0}, {1.0, 0.0}}, {{0.0, 1.0}, {0.0, -1.0}}}))(0, 0) == 0.0);
  const MultilevelEnsemble same = scalar_hierarchy({{{-1.0, 0.0}, {1.0, 0.0}}, {{5.0, 5.0}, {-1.0, -1.0}}});
  CHECK(ml_cov(same)(0, 0) == 1.0);
}

TEST_CASE("multilevel estimates of observables") {
  mlenkf::testing::Rng rng(3);
  MultilevelEnsemble e = make_multilevel_ensemble(fixed_allocation({7, 5, 3}), 2);
  for (int l = 0; l <= 2; ++l) {
    const auto k = static_cast<std::size_t>(l);
    e.fine[k] = rng.matrix(e.fine[k].rows(), 2);
    if (l > 0) e.coarse[k] = rng.matrix(e.coarse[k].rows(), 2);
  }
  CHECK(ml_estimate(e, [](std::span<const double>) { return 1.0; }) == 1.0);
  CHECK(ml_estimate(e, [](std::span<const double> v) { return v[1]; }) == doctest::Approx(ml_mean(e)[1]).epsilon(1e-14));

  MultilevelEnsemble level0 = make_multilevel_ensemble(fixed_allocation({7}), 2);
  level0.fine[0] = e.fine[0];
  const Ensemble plain{e.fine[0], 0};
  const Observable phi = [](std::span<const double> v) { return v[0] * v[1]; };
  CHECK(ml_estimate(level0, phi) == enkf_estimate(plain, phi));

  // Coarse equal to fine above level 0: the correction terms vanish exactly.
  for (std::size_t k = 1; k <= 2; ++k) e.coarse[k] = e.fine[k];
  CHECK(ml_estimate(e, phi) == enkf_estimate(plain, phi));
  CHECK(ml_mean(e) == sample_mean(e.fine[0]));
}

TEST_CASE("multilevel gain examples") {
  const ObservationModel obs = scalar_observation(1.0, 1.0);
  const MultilevelGain g = ml_gain_flagged(SymMatrix{{-0.1}}, obs);
  CHECK(g.gain(0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(g.truncated);
  CHECK(ml_gain(SymMatrix{{0.0}}, obs)(0, 0) == 0.0);

  mlenkf::testing::Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    const std::size_t d = 1 + static_cast<std::size_t>(k) % 6;
    const ObservationModel o(rng.matrix(2, d), rng.spd(2));
    const SymMatrix c = rng.psd(d, d);
    const MultilevelGain mg = ml_gain_flagged(c, o);
    CHECK_FALSE(mg.truncated);
    CHECK(mg.gain == kalman_gain(c, o));
  }
}

TEST_CASE("gain and truncation perturbation bounds on random instances") {
  const auto t = mlenkf::testing::check_truncation_bound(1000, 7, 1e-9);
  CHECK(t.violations == 0);
  const auto g = mlenkf::testing::check_gain_bound(1000, 8, 1e-9);
  CHECK(g.violations == 0);
  CHECK(g.indefinite > 100);
}

TEST_CASE("a zero gain leaves the hierarchy unchanged") {
  mlenkf::testing::Rng rng(5);
  MultilevelEnsemble e = make_multilevel_ensemble(fixed_allocation({4, 3}), 1);
  e.fine[0] = rng.matrix(4, 1);
  e.fine[1] = rng.matrix(3, 1);
  e.coarse[1] = rng.matrix(3, 1);
  const MultilevelEnsemble out = ml_update(e, Matrix(1, 1), scalar_observation(1.0, 0.04), Vector{2.0}, 0, {1, 1});
  CHECK(out.fine == e.fine);
  CHECK(out.coarse == e.coarse);
}

TEST_CASE("full trust in the data replaces every member by its perturbed observation") {
  mlenkf::testing::Rng rng(6);
  MultilevelEnsemble e = make_multilevel_ensemble(fixed_allocation({3, 2}), 2);
  e.fine[0] = rng.matrix(3, 2);
  e.fine[1] = rng.matrix(2, 2);
  e.coarse[1] = rng.matrix(2, 2);
  const ObservationModel obs(Matrix::identity(2), SymMatrix::identity(2));
  const Vector y{1.0, -1.0};
  const MultilevelEnsemble out = ml_update(e, Matrix::identity(2), obs, y, 4, {9, 1});
  for (int l = 0; l <= 1; ++l) {
    const auto k = static_cast<std::size_t>(l);
    for (std::size_t i = 0; i < e.fine[k].rows(); ++i) {
      const Vector yt = perturbed_observation(obs, y, 4, l, static_cast<std::uint32_t>(i), 9);
      CHECK(Vector(out.fine[k].row(i).begin(), out.fine[k].row(i).end()) == yt);
      if (l > 0) CHECK(Vector(out.coarse[k].row(i).begin(), out.coarse[k].row(i).end()) == yt);
    }
  }
  CHECK(out.coarse[0] == e.coarse[0]);
}

TEST_CASE("scalar pair update shares the perturbed observation") {
  const ObservationModel obs = scalar_observation(1.0, 0.04);
  MultilevelEnsemble e = scalar_hierarchy({{{0.0, 0.0}}, {{2.0, 1.0}}});
  const MultilevelEnsemble out = ml_update(e, Matrix{{0.5}}, obs, Vector{3.0}, 1, {2, 1});
  const double yt = perturbed_observation(obs, Vector{3.0}, 1, 1, 0, 2)[0];
  CHECK(out.fine[1](0, 0) == 0.5 * 2.0 + 0.5 * yt);
  CHECK(out.coarse[1](0, 0) == 0.5 * 1.0 + 0.5 * yt);
  CHECK(out.fine[1](0, 0) - out.coarse[1](0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("a single-level hierarchy reproduces the EnKF bit for bit") {
  for (const auto& model : {make_model("ou", 0.5), make_model("gbm", 0.25)}) {
    const bool ou = model->name() == "ou";
    const LevelGrid g(ou ? 2 : 8, 2);
    const ObservationModel obs = scalar_observation(1.0, ou ? 0.04 : 0.0625);
    const SyntheticData data = synthesize(*model, obs, 25, 31);
    const Allocation a = allocate_levels(0, ou ? kOuRates : kEqualRates, g, 50.0);
    const FilterTrace ml = mlenkf_run(a, *model, g, obs, data.observations, initial_moments(*model), {77, 1});
    const FilterTrace en = enkf_run(*model, Propagator::level(*model, g, 0), obs, data.observations,
                                    initial_moments(*model), a.m_per_level[0], 0, {77, 1});
    CHECK(ml.mean == en.mean);
    CHECK(ml.cov == en.cov);
    CHECK(ml.cost.substeps == en.cost.substeps);
  }
}

TEST_CASE("MLEnKF replay is independent of the thread count") {
  const OuModel ou = ou_model(0.5);
  const LevelGrid g(2, 2);
  const ObservationModel obs = scalar_observation(1.0, 0.04);
  const SyntheticData data = synthesize(ou, obs, 15, 4);
  const Allocation a = allocate_levels(3, kOuRates, g);
  const FilterTrace one = mlenkf_run(a, ou, g, obs, data.observations, initial_moments(ou), {12, 1});
  const FilterTrace many = mlenkf_run(a, ou, g, obs, data.observations, initial_moments(ou), {12, 3});
  CHECK(one.mean == many.mean);
  CHECK(one.cov == many.cov);
  CHECK(one.truncated == many.truncated);
  CHECK(one.cost.substeps == 15 * allocation_cost(a, g));
  CHECK(one.cost.ensemble_sizes == a.m_per_level);
  CHECK(one.method == "mlenkf");
}

TEST_CASE("MLEnKF with no observations holds only the initial moments") {
  const OuModel ou = ou_model(0.5);
  const LevelGrid g(2, 2);
  const FilterTrace t = mlenkf_run(allocate_levels(2, kOuRates, g), ou, g, scalar_observation(1.0, 0.04), {},
                                   initial_moments(ou), {1, 1});
  CHECK(t.epochs() == 0);
  CHECK(t.mean[0] == Vector{1.0});
  CHECK(t.cov[0](0, 0) == 0.0);
}

TEST_CASE("one MLEnKF cycle is unbiased for the finest-level Kalman update") {
  const OuModel ou = ou_model(0.5);
  const LevelGrid g(2, 2);
  const ObservationModel obs = scalar_observation(1.0, 0.04);
  const Allocation a = allocate_levels(5, kOuRates, g);
  const Vector y{0.5};
  const GaussianMoments init = initial_moments(ou);
  const KalmanUpdate exact = kf_update(kf_predict(init, discretized_ou(0.5, g.steps(5))), obs, y);

  const int seeds = 40;
  double sum = 0.0, sq = 0.0;
  for (int s = 0; s < seeds; ++s) {
    MultilevelEnsemble e = initial_multilevel_ensemble(a, init, static_cast<std::uint64_t>(s));
    CostTally tally;
    const MlenkfStep step = mlenkf_step(std::move(e), ou, g, obs, y, 0, {static_cast<std::uint64_t>(s), 1}, tally);
    const double err = ml_mean(step.ensemble)[0] - exact.moments.mean[0];
    sum += err;
    sq += err * err;
  }
  const double mean_err = sum / seeds;
  const double se = std::sqrt((sq / seeds - mean_err * mean_err) / (seeds - 1));
  CHECK(std::abs(mean_err) <= 3.0 * se);
}

TEST_CASE("pair coupling persists through the update") {
  const OuModel ou = ou_model(0.5);
  const LevelGrid g(2, 2);
  const ObservationModel obs = scalar_observation(1.0, 0.04);
  const Allocation a = fixed_allocation({2000, 2000, 2000, 2000, 2000, 2000});
  const SyntheticData data = synthesize(ou, obs, 3, 8);
  MultilevelEnsemble e = initial_multilevel_ensemble(a, initial_moments(ou), 8);
  CostTally tally;
  for (int n = 0; n < 3; ++n) {
    e = mlenkf_step(std::move(e), ou, g, obs, data.observations[static_cast<std::size_t>(n)], n, {8, 1}, tally).ensemble;
  }
  std::vector<RatePoint> points;
  for (int l = 1; l <= 5; ++l) {
    const auto k = static_cast<std::size_t>(l);
    double sq = 0.0;
    for (std::size_t i = 0; i < e.fine[k].rows(); ++i) {
      const double d = e.fine[k](i, 0) - e.coarse[k](i, 0);
      sq += d * d;
    }
    points.push_back({std::pow(2.0, l), sq / static_cast<double>(e.fine[k].rows())});
  }
  // Slope in log2(E|fine − coarse|²) per level.
  CHECK(fit_rate(points) <= -2.0 / 2.0 + 0.3);
}
