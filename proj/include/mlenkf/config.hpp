#pragma once

// Run configuration: a flat `section.key = value` text format with `#`
// comments.
//
//   model.type = ou          # ou | gbm (required)
//   model.sigma = 0.5
//   obs.gamma = 0.04
//   run.epochs = 100
//
// Keys that are not set take model-specific defaults (see parse_config).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlenkf/error.hpp"
#include "mlenkf/mlenkf.hpp"

namespace mlenkf {

/// Parse or validation failure. `line()` is 0 for errors not tied to a line.
class ConfigError : public InvalidInput {
 public:
  ConfigError(const std::string& what, std::size_t line = 0)
      : InvalidInput(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct RunConfig {
  std::string model_type;
  double sigma = 0.0;
  double obs_gamma = 0.0;
  double obs_h = 1.0;

  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::string output;
  std::size_t threads = 1;

  std::size_t n0 = 0;
  std::size_t nhat = 2;
  Rates rates;

  std::optional<double> epsilon;
  std::optional<double> budget;
  double c_m = 1.0;

  std::optional<std::size_t> enkf_members;
  int enkf_level = 0;
  double enkf_c = 1.0;
  bool enkf_exact = false;

  double budget_min = 1e3;
  double budget_max = 1e6;
  double budget_factor = 2.0;
  std::size_t replicates = 1;

  int decay_max_level = 6;
  std::size_t decay_samples = 100000;
  std::vector<double> decay_moments{2.0};
  std::string decay_observable = "identity";
  double decay_threshold = 0.1;
};

/// Every key parse_config accepts.
const std::vector<std::string_view>& config_keys();

/// Parses and validates. Unknown or duplicate keys, malformed lines and
/// constraint violations throw ConfigError naming the line or key.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError naming the offending key.
void validate(const RunConfig& config);

/// Key/value echo of a configuration, in config_keys() order.
std::vector<std::pair<std::string, std::string>> describe(const RunConfig& config);

}  // namespace mlenkf
