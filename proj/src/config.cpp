#include "mlenkf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mlenkf/harness.hpp"

namespace mlenkf {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_real(std::string_view key, std::string_view v, std::size_t line) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(std::string(key) + ": expected a real number, got '" + std::string(v) + "'", line);
  }
  return out;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view v, std::size_t line) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'",
                      line);
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v, std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'", line);
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value, std::size_t line)>;

const std::vector<std::pair<std::string_view, Setter>>& setters() {
  static const std::vector<std::pair<std::string_view, Setter>> table = {
      {"model.type", [](RunConfig& c, auto, auto v, auto) { c.model_type = std::string(v); }},
      {"model.sigma", [](RunConfig& c, auto k, auto v, auto l) { c.sigma = parse_real(k, v, l); }},
      {"obs.gamma", [](RunConfig& c, auto k, auto v, auto l) { c.obs_gamma = parse_real(k, v, l); }},
      {"obs.h", [](RunConfig& c, auto k, auto v, auto l) { c.obs_h = parse_real(k, v, l); }},
      {"run.epochs", [](RunConfig& c, auto k, auto v, auto l) { c.epochs = parse_unsigned(k, v, l); }},
      {"run.seed", [](RunConfig& c, auto k, auto v, auto l) { c.seed = parse_unsigned(k, v, l); }},
      {"run.output", [](RunConfig& c, auto, auto v, auto) { c.output = std::string(v); }},
      {"run.threads", [](RunConfig& c, auto k, auto v, auto l) { c.threads = parse_unsigned(k, v, l); }},
      {"hierarchy.n0", [](RunConfig& c, auto k, auto v, auto l) { c.n0 = parse_unsigned(k, v, l); }},
      {"hierarchy.nhat", [](RunConfig& c, auto k, auto v, auto l) { c.nhat = parse_unsigned(k, v, l); }},
      {"rates.alpha", [](RunConfig& c, auto k, auto v, auto l) { c.rates.alpha = parse_real(k, v, l); }},
      {"rates.beta", [](RunConfig& c, auto k, auto v, auto l) { c.rates.beta = parse_real(k, v, l); }},
      {"rates.gamma", [](RunConfig& c, auto k, auto v, auto l) { c.rates.gamma = parse_real(k, v, l); }},
      {"allocation.epsilon", [](RunConfig& c, auto k, auto v, auto l) { c.epsilon = parse_real(k, v, l); }},
      {"allocation.budget", [](RunConfig& c, auto k, auto v, auto l) { c.budget = parse_real(k, v, l); }},
      {"allocation.c_m", [](RunConfig& c, auto k, auto v, auto l) { c.c_m = parse_real(k, v, l); }},
      {"enkf.members", [](RunConfig& c, auto k, auto v, auto l) { c.enkf_members = parse_unsigned(k, v, l); }},
      {"enkf.level", [](RunConfig& c, auto k, auto v, auto l) {
         c.enkf_level = static_cast<int>(parse_unsigned(k, v, l));
       }},
      {"enkf.c", [](RunConfig& c, auto k, auto v, auto l) { c.enkf_c = parse_real(k, v, l); }},
      {"enkf.exact", [](RunConfig& c, auto k, auto v, auto l) { c.enkf_exact = parse_bool(k, v, l); }},
      {"benchmark.budget_min", [](RunConfig& c, auto k, auto v, auto l) { c.budget_min = parse_real(k, v, l); }},
      {"benchmark.budget_max", [](RunConfig& c, auto k, auto v, auto l) { c.budget_max = parse_real(k, v, l); }},
      {"benchmark.budget_factor",
       [](RunConfig& c, auto k, auto v, auto l) { c.budget_factor = parse_real(k, v, l); }},
      {"benchmark.replicates",
       [](RunConfig& c, auto k, auto v, auto l) { c.replicates = parse_unsigned(k, v, l); }},
      {"decay.max_level", [](RunConfig& c, auto k, auto v, auto l) {
         c.decay_max_level = static_cast<int>(parse_unsigned(k, v, l));
       }},
      {"decay.samples", [](RunConfig& c, auto k, auto v, auto l) { c.decay_samples = parse_unsigned(k, v, l); }},
      {"decay.moments", [](RunConfig& c, auto k, auto v, auto l) {
         c.decay_moments.clear();
         std::size_t start = 0;
         while (start <= v.size()) {
           const auto comma = v.find(',', start);
           const auto item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
           c.decay_moments.push_back(parse_real(k, item, l));
           if (comma == std::string_view::npos) break;
           start = comma + 1;
         }
       }},
      {"decay.observable", [](RunConfig& c, auto, auto v, auto) { c.decay_observable = std::string(v); }},
      {"decay.threshold", [](RunConfig& c, auto k, auto v, auto l) { c.decay_threshold = parse_real(k, v, l); }},
  };
  return table;
}

void apply_model_defaults(RunConfig& c, const std::map<std::string, std::size_t>& seen) {
  auto unset = [&](const char* key) { return seen.find(key) == seen.end(); };
  const bool ou = c.model_type == "ou";
  if (unset("model.sigma")) c.sigma = ou ? 0.5 : 0.25;
  if (unset("obs.gamma")) c.obs_gamma = ou ? 0.04 : 1.0 / 16.0;
  if (unset("run.epochs")) c.epochs = ou ? 100 : 200;
  if (unset("hierarchy.n0")) c.n0 = ou ? 2 : 8;
  if (unset("rates.beta")) c.rates.beta = ou ? 2.0 : 1.0;
}

}  // namespace

const std::vector<std::string_view>& config_keys() {
  static const std::vector<std::string_view> keys = [] {
    std::vector<std::string_view> k;
    for (const auto& [key, _] : setters()) k.push_back(key);
    return k;
  }();
  return keys;
}

void validate(const RunConfig& c) {
  auto fail = [](const char* key, const std::string& why) { throw ConfigError(std::string(key) + ": " + why); };
  if (c.model_type.empty()) fail("model.type", "required key is missing");
  if (c.model_type != "ou" && c.model_type != "gbm") fail("model.type", "must be 'ou' or 'gbm'");
  if (!(c.sigma > 0.0)) fail("model.sigma", "must be > 0");
  if (!(c.obs_gamma > 0.0)) fail("obs.gamma", "must be > 0 (observation noise covariance must be SPD)");
  if (c.n0 < 1) fail("hierarchy.n0", "must be >= 1");
  if (c.nhat < 2) fail("hierarchy.nhat", "must be >= 2");
  if (!(c.rates.alpha > 0.0)) fail("rates.alpha", "must be > 0");
  if (!(c.rates.beta > 0.0)) fail("rates.beta", "must be > 0");
  if (!(c.rates.gamma > 0.0)) fail("rates.gamma", "must be > 0");
  if (c.rates.alpha < 0.5 * std::min(c.rates.beta, c.rates.gamma)) {
    fail("rates.alpha", "must be >= min(beta, gamma)/2");
  }
  if (c.epsilon && c.budget) fail("allocation.epsilon", "set at most one of allocation.epsilon and allocation.budget");
  if (c.epsilon && !(*c.epsilon > 0.0)) fail("allocation.epsilon", "must be > 0");
  if (c.budget && !(*c.budget > 0.0)) fail("allocation.budget", "must be > 0");
  if (!(c.c_m > 0.0)) fail("allocation.c_m", "must be > 0");
  if (c.threads < 1) fail("run.threads", "must be >= 1");
  if (c.enkf_members && *c.enkf_members < 1) fail("enkf.members", "must be >= 1");
  if (!(c.enkf_c > 0.0)) fail("enkf.c", "must be > 0");
  if (!(c.budget_min > 0.0)) fail("benchmark.budget_min", "must be > 0");
  if (!(c.budget_max >= c.budget_min)) fail("benchmark.budget_max", "must be >= benchmark.budget_min");
  if (!(c.budget_factor > 1.0)) fail("benchmark.budget_factor", "must be > 1");
  if (c.replicates < 1) fail("benchmark.replicates", "must be >= 1");
  if (c.decay_max_level < 2) fail("decay.max_level", "must be >= 2");
  if (c.decay_samples < 2) fail("decay.samples", "must be >= 2");
  if (c.decay_moments.empty()) fail("decay.moments", "must list at least one order");
  for (double p : c.decay_moments)
    if (!(p >= 1.0)) fail("decay.moments", "orders must be >= 1");
  if (c.decay_observable != "identity" && c.decay_observable != "indicator") {
    fail("decay.observable", "must be 'identity' or 'indicator'");
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'section.key = value'", line_no);
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key before '='", line_no);
    if (value.empty()) throw ConfigError(std::string(key) + ": missing value", line_no);

    const auto& table = setters();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
    if (it == table.end()) throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
    if (!seen.emplace(std::string(key), line_no).second) {
      throw ConfigError("duplicate key '" + std::string(key) + "'", line_no);
    }
    it->second(config, key, value, line_no);
  }
  if (seen.find("model.type") == seen.end()) throw ConfigError("model.type: required key is missing");
  apply_model_defaults(config, seen);
  validate(config);
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::vector<std::pair<std::string, std::string>> describe(const RunConfig& c) {
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  std::string moments;
  for (std::size_t i = 0; i < c.decay_moments.size(); ++i) {
    if (i) moments += ',';
    moments += format_real(c.decay_moments[i]);
  }
  return {
      {"model.type", c.model_type},
      {"model.sigma", format_real(c.sigma)},
      {"obs.gamma", format_real(c.obs_gamma)},
      {"obs.h", format_real(c.obs_h)},
      {"run.epochs", std::to_string(c.epochs)},
      {"run.seed", std::to_string(c.seed)},
      {"run.output", c.output},
      {"run.threads", std::to_string(c.threads)},
      {"hierarchy.n0", std::to_string(c.n0)},
      {"hierarchy.nhat", std::to_string(c.nhat)},
      {"rates.alpha", format_real(c.rates.alpha)},
      {"rates.beta", format_real(c.rates.beta)},
      {"rates.gamma", format_real(c.rates.gamma)},
      {"allocation.epsilon", opt(c.epsilon)},
      {"allocation.budget", opt(c.budget)},
      {"allocation.c_m", format_real(c.c_m)},
      {"enkf.members", c.enkf_members ? std::to_string(*c.enkf_members) : std::string()},
      {"enkf.level", std::to_string(c.enkf_level)},
      {"enkf.c", format_real(c.enkf_c)},
      {"enkf.exact", c.enkf_exact ? "true" : "false"},
      {"benchmark.budget_min", format_real(c.budget_min)},
      {"benchmark.budget_max", format_real(c.budget_max)},
      {"benchmark.budget_factor", format_real(c.budget_factor)},
      {"benchmark.replicates", std::to_string(c.replicates)},
      {"decay.max_level", std::to_string(c.decay_max_level)},
      {"decay.samples", std::to_string(c.decay_samples)},
      {"decay.moments", moments},
      {"decay.observable", c.decay_observable},
      {"decay.threshold", format_real(c.decay_threshold)},
  };
}

}  // namespace mlenkf
