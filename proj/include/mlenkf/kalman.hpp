#pragma once

// Exact Kalman filter for linear-Gaussian signals; the reference every
// ensemble method is scored against.

#include <span>
#include <vector>

#include "mlenkf/linalg.hpp"
#include "mlenkf/models.hpp"
#include "mlenkf/trace.hpp"

namespace mlenkf {

/// mean ← A·mean + control, cov ← A·cov·Aᵀ + Σ. An empty control means zero.
GaussianMoments kf_predict(const GaussianMoments& m, const LinearSignal& sig,
                           std::span<const double> control = {});

/// K = C_num·Hᵀ·(H·C_den·Hᵀ + Γ)⁻¹. The ordinary gain passes the same matrix
/// twice; the multilevel gain passes a PSD-truncated denominator.
Matrix kalman_gain(const SymMatrix& numerator_cov, const SymMatrix& denominator_cov,
                   const ObservationModel& obs);
Matrix kalman_gain(const SymMatrix& cov, const ObservationModel& obs);

struct KalmanUpdate {
  GaussianMoments moments;
  Matrix gain;
};

/// Innovation form: mean ← mean + K(y − H·mean), cov ← sym((I − KH)·cov).
KalmanUpdate kf_update(const GaussianMoments& m, const ObservationModel& obs,
                       std::span<const double> y);

/// Predict/update over the observation sequence. ys[n] is observed at time
/// n+1; controls[n], when given, is added in the prediction from n to n+1.
FilterTrace kf_run(const LinearSignal& sig, const ObservationModel& obs,
                   std::span<const Vector> ys, const GaussianMoments& init,
                   std::span<const Vector> controls = {});

}  // namespace mlenkf
