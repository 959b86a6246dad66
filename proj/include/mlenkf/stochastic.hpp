#pragma once

// Keyed random streams and Brownian increments.
//
// Every random number in a filter run comes from a Philox4x32-10 counter-based
// generator. The 64-bit master seed is the Philox key; the particle identity
// (epoch, level, particle, role) and a running block index form the 128-bit
// counter. Streams for distinct identities therefore never overlap, and a
// particle's draws do not depend on the order in which particles are visited.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "mlenkf/linalg.hpp"

namespace mlenkf {

enum class StreamRole : std::uint8_t {
  drive = 0,    // Brownian increments / exact-transition noise
  perturb = 1,  // perturbed-observation noise
  init = 2,     // initial ensemble
  truth = 3,    // synthetic truth and observation noise
};

struct StreamKey {
  std::uint32_t epoch = 0;
  std::uint32_t level = 0;  // must fit in 24 bits
  std::uint32_t particle = 0;
  StreamRole role = StreamRole::drive;

  bool operator==(const StreamKey&) const = default;
};

class Stream {
 public:
  Stream(StreamKey key, std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal by inverse-CDF transform of one uniform draw.
  double normal();
  void fill_normal(std::span<double> out);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int next_word_ = 4;
};

Stream stream(StreamKey key, std::uint64_t seed);

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error below 1.2e-9). p must lie in (0, 1).
double normal_quantile(double p);

/// mean + factor·z with z ~ N(0, I). `factor` is any F with F·Fᵀ equal to the
/// target covariance (typically its Cholesky factor).
Vector gaussian(Stream& s, std::span<const double> mean, const Matrix& factor);

/// Increments of one Brownian path over the unit observation interval.
/// Stored step-major: increments[m * drive_dim + k] is component k of step m.
struct BrownianPath {
  double dt = 0.0;
  std::size_t drive_dim = 1;
  Vector increments;

  std::size_t steps() const { return drive_dim == 0 ? 0 : increments.size() / drive_dim; }
};

struct CoupledPaths {
  BrownianPath fine;
  BrownianPath coarse;
};

/// n_steps increments, each N(0, 1/n_steps) per component. Reuses `out`'s
/// storage.
void draw_brownian(Stream& s, std::size_t n_steps, std::size_t drive_dim, BrownianPath& out);
BrownianPath brownian_path(Stream& s, std::size_t n_steps, std::size_t drive_dim = 1);

/// Coarse increment j is the left-to-right sum of fine increments
/// [j·ratio, (j+1)·ratio). Throws InvalidInput unless ratio divides the fine
/// step count.
void coarsen(const BrownianPath& fine, std::size_t ratio, BrownianPath& coarse);

/// Draws the fine path first and derives the coarse one by summation.
CoupledPaths coupled_brownian(Stream& s, std::size_t n_fine, std::size_t ratio,
                              std::size_t drive_dim = 1);

namespace detail {
/// Raw Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);
}  // namespace detail

}  // namespace mlenkf
