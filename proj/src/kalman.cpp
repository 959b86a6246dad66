#include "mlenkf/kalman.hpp"

#include "mlenkf/error.hpp"

namespace mlenkf {

GaussianMoments kf_predict(const GaussianMoments& m, const LinearSignal& sig,
                           std::span<const double> control) {
  const std::size_t d = m.mean.size();
  if (sig.a.rows() != d || sig.a.cols() != d || sig.sigma.dim() != d || m.cov.dim() != d) {
    throw InvalidInput("kf_predict: dimension mismatch");
  }
  if (!control.empty() && control.size() != d) throw InvalidInput("kf_predict: control has wrong size");
  Vector mean = multiply(sig.a, m.mean);
  for (std::size_t i = 0; i < control.size(); ++i) mean[i] += control[i];
  return {std::move(mean), congruence(sig.a, m.cov) + sig.sigma};
}

Matrix kalman_gain(const SymMatrix& numerator_cov, const SymMatrix& denominator_cov,
                   const ObservationModel& obs) {
  const std::size_t d = obs.state_dim();
  if (numerator_cov.dim() != d || denominator_cov.dim() != d) {
    throw InvalidInput("kalman_gain: covariance dimension does not match H");
  }
  const SymMatrix s = congruence(obs.h(), denominator_cov) + obs.gamma();
  // K = C·Hᵀ·S⁻¹ = (S⁻¹·H·C)ᵀ for symmetric C and S.
  return spd_solve(s, obs.h() * numerator_cov.matrix()).transposed();
}

Matrix kalman_gain(const SymMatrix& cov, const ObservationModel& obs) {
  return kalman_gain(cov, cov, obs);
}

KalmanUpdate kf_update(const GaussianMoments& m, const ObservationModel& obs,
                       std::span<const double> y) {
  if (y.size() != obs.obs_dim() || m.mean.size() != obs.state_dim()) {
    throw InvalidInput("kf_update: dimension mismatch");
  }
  Matrix k = kalman_gain(m.cov, obs);
  Vector innovation(y.begin(), y.end());
  const Vector predicted_obs = multiply(obs.h(), m.mean);
  for (std::size_t i = 0; i < innovation.size(); ++i) innovation[i] -= predicted_obs[i];

  Vector mean = m.mean;
  const Vector correction = multiply(k, innovation);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += correction[i];

  const Matrix i_minus_kh = Matrix::identity(mean.size()) - k * obs.h();
  SymMatrix cov = SymMatrix::symmetrized(i_minus_kh * m.cov.matrix());
  return {{std::move(mean), std::move(cov)}, std::move(k)};
}

FilterTrace kf_run(const LinearSignal& sig, const ObservationModel& obs,
                   std::span<const Vector> ys, const GaussianMoments& init,
                   std::span<const Vector> controls) {
  if (!controls.empty() && controls.size() < ys.size()) {
    throw InvalidInput("kf_run: fewer controls than observations");
  }
  FilterTrace trace;
  trace.method = "kalman";
  trace.push(init.mean, init.cov);
  GaussianMoments current = init;
  for (std::size_t n = 0; n < ys.size(); ++n) {
    const std::span<const double> control =
        controls.empty() ? std::span<const double>{} : std::span<const double>(controls[n]);
    current = kf_update(kf_predict(current, sig, control), obs, ys[n]).moments;
    trace.push(current.mean, current.cov);
  }
  return trace;
}

}  // namespace mlenkf
