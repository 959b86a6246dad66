#include "mlenkf/models.hpp"

#include <cmath>
#include <string>

#include "mlenkf/error.hpp"

namespace mlenkf {

void SdeModel::exact_transition(std::span<double>, int, std::span<const double>) const {
  throw InvalidInput("model '" + std::string(name()) + "' has no exact transition");
}

Vector SdeModel::control(int) const { return Vector(dim(), 0.0); }

// --- Ornstein–Uhlenbeck ----------------------------------------------------

OuModel::OuModel(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("ou_model: sigma must be > 0");
  transition_variance_ = 0.5 * sigma * sigma * (1.0 - std::exp(-2.0));
}

void OuModel::drift(std::span<const double> u, int, std::span<double> out) const { out[0] = -u[0]; }

void OuModel::diffusion(std::span<const double>, int, std::span<double> out) const { out[0] = sigma_; }

void OuModel::exact_transition(std::span<double> x, int, std::span<const double> noise) const {
  x[0] = std::exp(-1.0) * x[0] + std::sqrt(transition_variance_) * noise[0];
}

std::optional<LinearSignal> OuModel::linear_signal() const {
  return LinearSignal{Matrix{{std::exp(-1.0)}}, SymMatrix{{transition_variance_}}};
}

// --- Drift-alternating GBM -------------------------------------------------

GbmModel::GbmModel(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("gbm_model: sigma must be > 0");
}

void GbmModel::drift(std::span<const double> u, int epoch, std::span<double> out) const {
  out[0] = (epoch % 2 == 0) ? sigma_ * sigma_ * u[0] : 0.0;
}

void GbmModel::diffusion(std::span<const double> u, int, std::span<double> out) const {
  out[0] = sigma_ * u[0];
}

double GbmModel::diffusion_derivative_product(double u, int) const { return sigma_ * sigma_ * u; }

void GbmModel::to_filter(std::span<double> x) const {
  for (double& v : x) v = std::log(v);
}

void GbmModel::to_state(std::span<double> x) const {
  for (double& v : x) v = std::exp(v);
}

void GbmModel::exact_transition(std::span<double> x, int epoch, std::span<const double> noise) const {
  x[0] += control(epoch)[0] + sigma_ * noise[0];
}

std::optional<LinearSignal> GbmModel::linear_signal() const {
  return LinearSignal{Matrix{{1.0}}, SymMatrix{{sigma_ * sigma_}}};
}

Vector GbmModel::control(int epoch) const {
  const double half_var = 0.5 * sigma_ * sigma_;
  return {epoch % 2 == 0 ? half_var : -half_var};
}

OuModel ou_model(double sigma) { return OuModel(sigma); }
GbmModel gbm_model(double sigma) { return GbmModel(sigma); }

std::unique_ptr<SdeModel> make_model(std::string_view type, double sigma) {
  if (type == "ou") return std::make_unique<OuModel>(sigma);
  if (type == "gbm") return std::make_unique<GbmModel>(sigma);
  throw InvalidInput("unknown model type '" + std::string(type) + "'");
}

// --- Observations ----------------------------------------------------------

ObservationModel::ObservationModel(Matrix h, SymMatrix gamma)
    : h_(std::move(h)), gamma_(std::move(gamma)) {
  if (h_.rows() != gamma_.dim() || h_.cols() == 0) {
    throw InvalidInput("ObservationModel: H rows must match the dimension of Gamma");
  }
  try {
    gamma_chol_ = cholesky(gamma_);
  } catch (const NotSpd&) {
    throw InvalidInput("ObservationModel: Gamma must be symmetric positive definite");
  }
  gamma_min_ = min_eigenvalue(gamma_);
  if (!(gamma_min_ > 0.0)) throw InvalidInput("ObservationModel: Gamma has a non-positive eigenvalue");
}

ObservationModel scalar_observation(double h, double gamma) {
  return ObservationModel(Matrix{{h}}, SymMatrix{{gamma}});
}

Vector observe(std::span<const double> u, const ObservationModel& obs, std::span<const double> z) {
  if (u.size() != obs.state_dim() || z.size() != obs.obs_dim()) {
    throw InvalidInput("observe: dimension mismatch");
  }
  Vector y = multiply(obs.h(), u);
  const Matrix& l = obs.gamma_chol();
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) y[i] += l(i, j) * z[j];
  return y;
}

Vector observe(std::span<const double> u, const ObservationModel& obs, Stream& s) {
  Vector z(obs.obs_dim());
  s.fill_normal(z);
  return observe(u, obs, z);
}

}  // namespace mlenkf
