#include "mlenkf/stochastic.hpp"

#include <cmath>
#include <string>

#include "mlenkf/error.hpp"

namespace mlenkf {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;
constexpr int kPhiloxRounds = 10;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < kPhiloxRounds; ++round) {
    if (round > 0) {
      k[0] += kPhiloxW0;
      k[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, c[0], hi0, lo0);
    mulhilo(kPhiloxM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

}  // namespace

namespace detail {
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) {
  return philox4x32(counter, key);
}
}  // namespace detail

Stream::Stream(StreamKey key, std::uint64_t seed)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      counter_{0u, key.particle, key.epoch,
               (key.level << 8) | static_cast<std::uint32_t>(key.role)} {
  if (key.level >= (1u << 24)) throw InvalidInput("StreamKey: level exceeds 24 bits");
}

void Stream::refill() {
  block_ = philox4x32(counter_, key_);
  ++counter_[0];
  next_word_ = 0;
}

std::uint64_t Stream::next_u64() {
  if (next_word_ > 2) refill();
  const std::uint64_t lo = block_[next_word_];
  const std::uint64_t hi = block_[next_word_ + 1];
  next_word_ += 2;
  return (hi << 32) | lo;
}

double Stream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Stream::normal() { return normal_quantile(uniform()); }

void Stream::fill_normal(std::span<double> out) {
  for (double& z : out) z = normal();
}

Stream stream(StreamKey key, std::uint64_t seed) { return Stream(key, seed); }

double normal_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("normal_quantile: p outside (0, 1)");

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

Vector gaussian(Stream& s, std::span<const double> mean, const Matrix& factor) {
  if (factor.rows() != mean.size()) throw InvalidInput("gaussian: factor rows must match mean");
  Vector z(factor.cols());
  s.fill_normal(z);
  Vector x(mean.begin(), mean.end());
  for (std::size_t i = 0; i < factor.rows(); ++i)
    for (std::size_t j = 0; j < factor.cols(); ++j) x[i] += factor(i, j) * z[j];
  return x;
}

void draw_brownian(Stream& s, std::size_t n_steps, std::size_t drive_dim, BrownianPath& out) {
  if (n_steps == 0 || drive_dim == 0) throw InvalidInput("draw_brownian: empty path");
  out.dt = 1.0 / static_cast<double>(n_steps);
  out.drive_dim = drive_dim;
  out.increments.resize(n_steps * drive_dim);
  const double scale = std::sqrt(out.dt);
  for (double& w : out.increments) w = scale * s.normal();
}

BrownianPath brownian_path(Stream& s, std::size_t n_steps, std::size_t drive_dim) {
  BrownianPath p;
  draw_brownian(s, n_steps, drive_dim, p);
  return p;
}

void coarsen(const BrownianPath& fine, std::size_t ratio, BrownianPath& coarse) {
  const std::size_t n_fine = fine.steps();
  if (ratio == 0 || n_fine % ratio != 0) {
    throw InvalidInput("coarsen: ratio " + std::to_string(ratio) + " does not divide " +
                       std::to_string(n_fine) + " fine steps");
  }
  const std::size_t r = fine.drive_dim;
  const std::size_t n_coarse = n_fine / ratio;
  coarse.drive_dim = r;
  coarse.dt = static_cast<double>(ratio) / static_cast<double>(n_fine);
  coarse.increments.assign(n_coarse * r, 0.0);
  for (std::size_t j = 0; j < n_coarse; ++j) {
    for (std::size_t k = 0; k < r; ++k) {
      double sum = 0.0;
      for (std::size_t m = j * ratio; m < (j + 1) * ratio; ++m) sum += fine.increments[m * r + k];
      coarse.increments[j * r + k] = sum;
    }
  }
}

CoupledPaths coupled_brownian(Stream& s, std::size_t n_fine, std::size_t ratio,
                              std::size_t drive_dim) {
  if (ratio == 0 || n_fine % ratio != 0) {
    throw InvalidInput("coupled_brownian: ratio must divide the fine step count");
  }
  CoupledPaths out;
  draw_brownian(s, n_fine, drive_dim, out.fine);
  coarsen(out.fine, ratio, out.coarse);
  return out;
}

}  // namespace mlenkf
