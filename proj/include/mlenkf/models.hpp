#pragma once

// Signal and observation models.
//
// A signal model is an SDE du = a(u, n) dt + b(u, n) dW integrated over one
// unit observation interval per epoch n. Filters hold their ensembles in
// "filter coordinates", which equal the SDE state except for models (GBM) that
// are linear-Gaussian only after a change of variables; to_state/to_filter
// convert between the two around each numerical integration.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mlenkf/linalg.hpp"
#include "mlenkf/stochastic.hpp"

namespace mlenkf {

enum class Integrator { euler_maruyama, milstein };

/// x' = A·x + control(n) + ξ with ξ ~ N(0, Σ), in filter coordinates.
struct LinearSignal {
  Matrix a;
  SymMatrix sigma;
};

class SdeModel {
 public:
  virtual ~SdeModel() = default;

  virtual std::string_view name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t drive_dim() const = 0;

  /// a(u, epoch) into `out` (length dim).
  virtual void drift(std::span<const double> u, int epoch, std::span<double> out) const = 0;
  /// b(u, epoch) into `out`, dim × drive_dim row-major.
  virtual void diffusion(std::span<const double> u, int epoch, std::span<double> out) const = 0;
  /// b(u)·∂b/∂u(u) for scalar models; used by the Milstein correction.
  virtual double diffusion_derivative_product(double u, int epoch) const = 0;

  virtual Integrator preferred_integrator() const = 0;

  virtual void to_filter(std::span<double> /*x*/) const {}
  virtual void to_state(std::span<double> /*x*/) const {}

  /// Initial condition, in filter coordinates.
  virtual Vector initial_filter_state() const = 0;

  /// Number of standard normals consumed by exact_transition; 0 when the model
  /// has no exact sampler.
  virtual std::size_t exact_noise_dim() const { return 0; }
  bool has_exact_transition() const { return exact_noise_dim() > 0; }
  /// Exact one-epoch transition in filter coordinates driven by standard
  /// normal `noise`.
  virtual void exact_transition(std::span<double> x, int epoch,
                                std::span<const double> noise) const;

  /// Linear-Gaussian form of the exact transition, when one exists.
  virtual std::optional<LinearSignal> linear_signal() const { return std::nullopt; }
  /// Known additive offset of the exact transition from epoch n to n+1.
  virtual Vector control(int epoch) const;
};

/// du = −u dt + σ dW. Exact transition u' = e^{-1}u + ξ, ξ ~ N(0, σ²(1 − e^{-2})/2).
class OuModel final : public SdeModel {
 public:
  explicit OuModel(double sigma);

  double sigma() const { return sigma_; }
  /// Variance of the exact one-epoch transition noise.
  double transition_variance() const { return transition_variance_; }

  std::string_view name() const override { return "ou"; }
  std::size_t dim() const override { return 1; }
  std::size_t drive_dim() const override { return 1; }
  void drift(std::span<const double> u, int epoch, std::span<double> out) const override;
  void diffusion(std::span<const double> u, int epoch, std::span<double> out) const override;
  double diffusion_derivative_product(double, int) const override { return 0.0; }
  Integrator preferred_integrator() const override { return Integrator::milstein; }
  Vector initial_filter_state() const override { return {1.0}; }
  std::size_t exact_noise_dim() const override { return 1; }
  void exact_transition(std::span<double> x, int epoch, std::span<const double> noise) const override;
  std::optional<LinearSignal> linear_signal() const override;

 private:
  double sigma_;
  double transition_variance_;
};

/// Drift-alternating geometric Brownian motion: du = σ²u dt + σu dW on even
/// epochs, du = σu dW on odd ones. Filtering acts on z = log u, whose exact
/// transition is z' = z + (−1)ⁿσ²/2 + ξ, ξ ~ N(0, σ²).
class GbmModel final : public SdeModel {
 public:
  explicit GbmModel(double sigma);

  double sigma() const { return sigma_; }

  std::string_view name() const override { return "gbm"; }
  std::size_t dim() const override { return 1; }
  std::size_t drive_dim() const override { return 1; }
  void drift(std::span<const double> u, int epoch, std::span<double> out) const override;
  void diffusion(std::span<const double> u, int epoch, std::span<double> out) const override;
  double diffusion_derivative_product(double u, int epoch) const override;
  Integrator preferred_integrator() const override { return Integrator::euler_maruyama; }
  void to_filter(std::span<double> x) const override;
  void to_state(std::span<double> x) const override;
  Vector initial_filter_state() const override { return {0.0}; }
  std::size_t exact_noise_dim() const override { return 1; }
  void exact_transition(std::span<double> x, int epoch, std::span<const double> noise) const override;
  std::optional<LinearSignal> linear_signal() const override;
  Vector control(int epoch) const override;

 private:
  double sigma_;
};

OuModel ou_model(double sigma);
GbmModel gbm_model(double sigma);
/// Runtime selection by name ("ou" or "gbm").
std::unique_ptr<SdeModel> make_model(std::string_view type, double sigma);

/// y = H·u + η, η ~ N(0, Γ).
class ObservationModel {
 public:
  /// Throws InvalidInput when shapes disagree or Γ is not SPD.
  ObservationModel(Matrix h, SymMatrix gamma);

  std::size_t obs_dim() const { return h_.rows(); }
  std::size_t state_dim() const { return h_.cols(); }
  const Matrix& h() const { return h_; }
  const SymMatrix& gamma() const { return gamma_; }
  const Matrix& gamma_chol() const { return gamma_chol_; }
  double gamma_min() const { return gamma_min_; }

 private:
  Matrix h_;
  SymMatrix gamma_;
  Matrix gamma_chol_;
  double gamma_min_;
};

ObservationModel scalar_observation(double h, double gamma);

/// H·u + chol(Γ)·z for the given standard normal draws z (length obs_dim).
Vector observe(std::span<const double> u, const ObservationModel& obs, std::span<const double> z);
Vector observe(std::span<const double> u, const ObservationModel& obs, Stream& s);

}  // namespace mlenkf
