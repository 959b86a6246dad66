#include "mlenkf/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mlenkf/config.hpp"
#include "mlenkf/harness.hpp"

namespace mlenkf {

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> budget;
  std::optional<double> epsilon;
  std::optional<std::size_t> threads;
  std::optional<std::string> manifest;
  bool zero_wall_time = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig resolve(const Overrides& o) {
  RunConfig c = load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output = *o.out;
  if (o.threads) c.threads = *o.threads;
  if (o.budget) {
    c.budget = *o.budget;
    c.epsilon.reset();
  }
  if (o.epsilon) {
    c.epsilon = *o.epsilon;
    c.budget.reset();
  }
  validate(c);
  return c;
}

// Writes through a string buffer so that a failed run never leaves a partial file.
void emit(const RunConfig& c, const std::string& text, std::ostream& out) {
  if (c.output.empty()) {
    out << text;
    return;
  }
  std::ofstream f(c.output, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open output file '" + c.output + "'");
  f << text;
  if (!f.flush()) throw std::runtime_error("failed writing output file '" + c.output + "'");
}

void write_manifest(const std::string& path, const std::string& command, const RunConfig& c) {
  nlohmann::ordered_json j;
  j["software"] = "mlenkf";
  j["version"] = kVersion;
  j["command"] = command;
  nlohmann::ordered_json cfg;
  for (const auto& [key, value] : describe(c)) cfg[key] = value;
  j["config"] = cfg;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open manifest file '" + path + "'");
  f << j.dump(2) << '\n';
}

LevelGrid make_grid(const RunConfig& c) { return LevelGrid(c.n0, c.nhat); }

std::string run_kalman(const RunConfig& c, const SdeModel& model, const ObservationModel& obs) {
  const SyntheticData data = synthesize(model, obs, c.epochs, c.seed);
  std::ostringstream s;
  write_trace_csv(s, gold_standard(model, obs, data.observations));
  return s.str();
}

std::string run_enkf(const RunConfig& c, const SdeModel& model, const ObservationModel& obs) {
  const LevelGrid grid = make_grid(c);
  std::size_t members = 0;
  Propagator prop = c.enkf_exact ? Propagator::exact_transition() : Propagator::level(model, grid, c.enkf_level);
  if (c.enkf_members) {
    members = *c.enkf_members;
  } else if (c.budget) {
    const EnkfAllocation a = enkf_budget_allocation(*c.budget, c.enkf_c);
    members = a.members;
    if (!c.enkf_exact) prop = Propagator::numerical(a.steps, model.preferred_integrator());
  } else {
    throw UsageError("enkf: set enkf.members or a budget (--budget / allocation.budget)");
  }
  const SyntheticData data = synthesize(model, obs, c.epochs, c.seed);
  const FilterTrace t = enkf_run(model, prop, obs, data.observations, initial_moments(model), members,
                                 c.enkf_level, {c.seed, c.threads});
  std::ostringstream s;
  write_trace_csv(s, t);
  return s.str();
}

std::string run_mlenkf(const RunConfig& c, const SdeModel& model, const ObservationModel& obs) {
  const LevelGrid grid = make_grid(c);
  Allocation a;
  if (c.epsilon) {
    a = allocate(*c.epsilon, c.rates, grid, c.c_m);
  } else if (c.budget) {
    a = allocate_for_budget(*c.budget, c.rates, grid, c.c_m);
  } else {
    throw UsageError("mlenkf: set exactly one of --epsilon / --budget (or allocation.epsilon / allocation.budget)");
  }
  const SyntheticData data = synthesize(model, obs, c.epochs, c.seed);
  const FilterTrace t = mlenkf_run(a, model, grid, obs, data.observations, initial_moments(model), {c.seed, c.threads});
  std::ostringstream s;
  write_trace_csv(s, t);
  return s.str();
}

std::string run_benchmark(const RunConfig& c, const SdeModel& model, const ObservationModel& obs,
                          bool zero_wall_time) {
  BenchmarkConfig b;
  b.epochs = c.epochs;
  b.budgets = geometric_budgets(c.budget_min, c.budget_max, c.budget_factor);
  b.replicates = c.replicates;
  b.master_seed = c.seed;
  b.rates = c.rates;
  b.c_m = c.c_m;
  b.enkf_c = c.enkf_c;
  b.threads = c.threads;
  std::vector<BenchmarkRow> rows = benchmark(model, obs, make_grid(c), b);
  if (zero_wall_time)
    for (BenchmarkRow& r : rows) r.wall_seconds = 0.0;
  std::ostringstream s;
  write_benchmark_csv(s, rows);
  return s.str();
}

std::string run_rates(const RunConfig& c, const SdeModel& model) {
  Observable phi;
  if (c.decay_observable == "indicator") {
    const double t = c.decay_threshold;
    phi = [t](std::span<const double> u) { return u[0] > t ? 1.0 : 0.0; };
  } else {
    phi = [](std::span<const double> u) { return u[0]; };
  }
  LevelDecaySettings s;
  s.samples = c.decay_samples;
  s.seed = c.seed;
  s.threads = c.threads;
  const LevelDecay decay = level_decay(model, make_grid(c), phi, c.decay_max_level, c.decay_moments, s);
  std::ostringstream os;
  write_level_decay_csv(os, decay);
  return os.str();
}

void add_common(CLI::App* sub, Overrides& o, bool allocation) {
  sub->add_option("--config", o.config_path, "Run configuration file")->required();
  sub->add_option("--seed", o.seed, "Master seed (overrides run.seed)");
  sub->add_option("--out", o.out, "Output CSV path (overrides run.output; default stdout)");
  sub->add_option("--threads", o.threads, "Worker threads (overrides run.threads)")->check(CLI::PositiveNumber);
  sub->add_option("--manifest", o.manifest, "Write a JSON run manifest to this path");
  if (allocation) {
    auto* b = sub->add_option("--budget", o.budget, "Per-epoch substep budget")->check(CLI::PositiveNumber);
    auto* e = sub->add_option("--epsilon", o.epsilon, "Target accuracy")->check(CLI::PositiveNumber);
    b->excludes(e);
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilevel ensemble Kalman filtering experiments", "mlenkf"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  Overrides o;
  auto* kalman = app.add_subcommand("kalman", "Gold-standard Kalman filter trace");
  auto* enkf = app.add_subcommand("enkf", "Single EnKF run, trace CSV");
  auto* mlenkf = app.add_subcommand("mlenkf", "Single MLEnKF run, trace CSV");
  auto* bench = app.add_subcommand("benchmark", "Cost-vs-error sweep, rows CSV");
  auto* rates = app.add_subcommand("rates", "Level-decay estimates, CSV");
  add_common(kalman, o, false);
  add_common(enkf, o, true);
  add_common(mlenkf, o, true);
  add_common(bench, o, false);
  add_common(rates, o, false);
  bench->add_flag("--zero-wall-time", o.zero_wall_time, "Write 0 for wall_seconds (byte-reproducible output)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  RunConfig c;
  try {
    c = resolve(o);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const auto model = make_model(c.model_type, c.sigma);
    const ObservationModel obs = scalar_observation(c.obs_h, c.obs_gamma);
    std::string text;
    if (command == "kalman") {
      text = run_kalman(c, *model, obs);
    } else if (command == "enkf") {
      text = run_enkf(c, *model, obs);
    } else if (command == "mlenkf") {
      text = run_mlenkf(c, *model, obs);
    } else if (command == "benchmark") {
      text = run_benchmark(c, *model, obs, o.zero_wall_time);
    } else {
      text = run_rates(c, *model);
    }
    emit(c, text, out);
    if (o.manifest) write_manifest(*o.manifest, command, c);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace mlenkf
