#include "mlenkf/integrate.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mlenkf/error.hpp"

namespace mlenkf {

namespace {

constexpr std::size_t kMaxInlineDim = 64;

void check_finite(std::span<const double> u) {
  for (double v : u) {
    if (!std::isfinite(v)) throw Overflow("integrator produced a non-finite state");
  }
}

// One Euler–Maruyama step with caller-provided scratch for a(u) and b(u).
inline void em_step_into(const SdeModel& model, std::span<double> u, int epoch, double dt,
                         std::span<const double> dW, std::span<double> a, std::span<double> b) {
  const std::size_t d = u.size();
  const std::size_t r = dW.size();
  model.drift(u, epoch, a);
  model.diffusion(u, epoch, b);
  for (std::size_t i = 0; i < d; ++i) {
    double next = u[i] + a[i] * dt;
    for (std::size_t k = 0; k < r; ++k) next += b[i * r + k] * dW[k];
    u[i] = next;
  }
}

void check_shapes(const SdeModel& model, std::span<const double> u, std::span<const double> dW) {
  if (u.size() != model.dim() || dW.size() != model.drive_dim()) {
    throw InvalidInput("integrator step: state or increment dimension mismatch");
  }
  if (model.dim() * model.drive_dim() > kMaxInlineDim) {
    throw InvalidInput("integrator step: diffusion matrix too large");
  }
}

void check_scalar(const SdeModel& model) {
  if (model.dim() != 1 || model.drive_dim() != 1) {
    throw InvalidInput("milstein_step: scalar models only");
  }
}

}  // namespace

LevelGrid::LevelGrid(std::size_t n0, std::size_t nhat) : n0_(n0), nhat_(nhat) {
  if (n0 < 1) throw InvalidInput("LevelGrid: n0 must be at least 1");
  if (nhat < 1) throw InvalidInput("LevelGrid: nhat must be at least 1");
}

std::size_t LevelGrid::steps(int level) const {
  if (level < 0) throw InvalidInput("LevelGrid: negative level");
  std::size_t n = n0_;
  for (int l = 0; l < level; ++l) {
    if (n > (std::size_t{1} << 40) / nhat_) throw Overflow("LevelGrid: step count overflow");
    n *= nhat_;
  }
  return n;
}

void em_step(const SdeModel& model, std::span<double> u, int epoch, double dt,
             std::span<const double> dW) {
  if (!(dt > 0.0)) throw InvalidInput("em_step: dt must be positive");
  check_shapes(model, u, dW);
  std::array<double, kMaxInlineDim> a{}, b{};
  em_step_into(model, u, epoch, dt, dW, std::span(a).first(u.size()),
               std::span(b).first(u.size() * dW.size()));
  check_finite(u);
}

Vector em_step(const SdeModel& model, std::span<const double> u, int epoch, double dt,
               std::span<const double> dW) {
  Vector out(u.begin(), u.end());
  em_step(model, std::span<double>(out), epoch, dt, dW);
  return out;
}

void milstein_step(const SdeModel& model, std::span<double> u, int epoch, double dt,
                   std::span<const double> dW) {
  check_scalar(model);
  const double correction =
      0.5 * model.diffusion_derivative_product(u[0], epoch) * (dW[0] * dW[0] - dt);
  em_step(model, u, epoch, dt, dW);
  u[0] += correction;
  check_finite(u);
}

Vector milstein_step(const SdeModel& model, std::span<const double> u, int epoch, double dt,
                     std::span<const double> dW) {
  Vector out(u.begin(), u.end());
  milstein_step(model, std::span<double>(out), epoch, dt, dW);
  return out;
}

void integrate_path(const SdeModel& model, Integrator scheme, std::span<double> u, int epoch,
                    const BrownianPath& path, CostTally& tally) {
  const std::size_t d = model.dim();
  const std::size_t r = model.drive_dim();
  if (u.size() != d || path.drive_dim != r) {
    throw InvalidInput("integrate_path: state or path dimension mismatch");
  }
  if (d * r > kMaxInlineDim) throw InvalidInput("integrate_path: diffusion matrix too large");
  if (scheme == Integrator::milstein) check_scalar(model);

  std::array<double, kMaxInlineDim> a{}, b{};
  const std::span<double> drift = std::span(a).first(d);
  const std::span<double> diff = std::span(b).first(d * r);
  const double dt = path.dt;
  const std::size_t n = path.steps();
  const double* dw = path.increments.data();

  if (scheme == Integrator::milstein) {
    for (std::size_t m = 0; m < n; ++m) {
      const double w = dw[m];
      const double correction = 0.5 * model.diffusion_derivative_product(u[0], epoch) * (w * w - dt);
      em_step_into(model, u, epoch, dt, {dw + m, 1}, drift, diff);
      u[0] += correction;
    }
  } else {
    for (std::size_t m = 0; m < n; ++m) em_step_into(model, u, epoch, dt, {dw + m * r, r}, drift, diff);
  }
  check_finite(u);
  tally.substeps += n;
}

void advance_filter_state(const SdeModel& model, Integrator scheme, std::span<double> x,
                          int epoch, const BrownianPath& path, CostTally& tally) {
  model.to_state(x);
  integrate_path(model, scheme, x, epoch, path, tally);
  model.to_filter(x);
  check_finite(x);
}

Vector propagate_level(const SdeModel& model, const LevelGrid& grid, int level,
                       std::span<const double> u, int epoch, const BrownianPath& path,
                       CostTally& tally) {
  const std::size_t n = grid.steps(level);
  if (path.steps() != n) {
    throw InvalidInput("propagate_level: path has " + std::to_string(path.steps()) +
                       " increments, level " + std::to_string(level) + " needs " +
                       std::to_string(n));
  }
  Vector out(u.begin(), u.end());
  integrate_path(model, model.preferred_integrator(), out, epoch, path, tally);
  return out;
}

CoupledPair propagate_pair(const SdeModel& model, const LevelGrid& grid, const CoupledPair& pair,
                           int epoch, Stream& s, CostTally& tally) {
  if (pair.level < 1) throw InvalidInput("propagate_pair: level must be at least 1");
  const CoupledPaths paths =
      coupled_brownian(s, grid.steps(pair.level), grid.nhat(), model.drive_dim());
  CoupledPair out{pair.fine, pair.coarse, pair.level};
  const Integrator scheme = model.preferred_integrator();
  integrate_path(model, scheme, out.fine, epoch, paths.fine, tally);
  integrate_path(model, scheme, out.coarse, epoch, paths.coarse, tally);
  return out;
}

}  // namespace mlenkf
