// game_recover: command-line front end for generating games, sampling noisy
// equilibria, fitting, diagnostics, evaluation and grid sweeps.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI/CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gamerecover/harness.hpp"

namespace fs = std::filesystem;
using namespace gamerecover;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string lambda;
  std::string game;
  std::string batch;
  std::string fits;
  std::optional<long> samples;
  std::optional<double> sigma;
  std::string noise;
  bool timing = false;
  bool dry_run = false;
};

ExperimentConfig load_config(const Options& o) {
  if (o.config.empty()) return ExperimentConfig{};
  return experiment_from_json(read_json(o.config));
}

fs::path exact_path(const fs::path& dir) { return dir / "exact.csv"; }
fs::path perturbed_path(const fs::path& dir) { return dir / "perturbed.csv"; }

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
  }
}

void require_flag(const std::string& value, const char* name) {
  if (value.empty()) throw ConfigError(std::string("missing required flag ") + name);
}

double sigma_of(const Options& o, const ExperimentConfig& c) { return o.sigma.value_or(c.sigma.front()); }

LambdaPolicy lambda_of(const Options& o, const ExperimentConfig& c) {
  return o.lambda.empty() ? c.lambda.front() : parse_lambda_policy(o.lambda);
}

/// The sweep task a set of manual commands corresponds to: first grid values
/// of the config, the given seed.
TaskSpec manual_task(const Options& o, const ExperimentConfig& c, const GraphicalGame& game, long samples) {
  TaskSpec t;
  t.n = game.n();
  t.k = game.k();
  t.d = c.d.front();
  t.samples = samples;
  t.sigma = sigma_of(o, c);
  t.lambda = lambda_of(o, c);
  t.seed = o.seed;
  return t;
}

int cmd_generate(const Options& o) {
  const auto c = load_config(o);
  const auto g = generate_game({c.n.front(), c.k.front(), c.d.front(), c.generator}, o.seed);
  spdlog::info("generated game n={} k={} edges={} attempts={}", g.game.n(), g.game.k(), g.game.edges().size(),
               g.attempts);
  emit(o, to_json(g.game).dump(2) + "\n");
  return kOk;
}

int cmd_sample(const Options& o) {
  require_flag(o.game, "--game");
  require_flag(o.out, "--out");
  const auto c = load_config(o);
  const auto game = game_from_json(read_json(o.game));
  const NoiseSpec noise{o.noise.empty() ? c.noise : parse_noise_family(o.noise), sigma_of(o, c)};
  const long samples = o.samples.value_or(c.samples.front());
  const auto b = sample_batches(game, samples, noise, c.generator.target_equilibrium_scale, o.seed);
  write_batch(exact_path(o.out), b.exact);
  write_batch(perturbed_path(o.out), b.perturbed);
  spdlog::info("wrote {} samples to {}", samples, o.out);
  return kOk;
}

int cmd_fit(const Options& o) {
  require_flag(o.batch, "--batch");
  const auto c = load_config(o);
  const auto batch = read_batch(perturbed_path(o.batch));
  const auto policy = lambda_of(o, c);
  std::vector<double> lambdas;
  if (policy.kind == LambdaPolicy::Kind::theoretical) {
    require_flag(o.game, "--game");
    const auto game = game_from_json(read_json(o.game));
    const auto exact = read_batch(exact_path(o.batch));
    const double sigma = batch.noise ? batch.noise->sigma : sigma_of(o, c);
    const auto pop = check_assumptions(game, exact, sigma);
    lambdas = resolve_lambdas(policy, batch.n, batch.k, batch.samples(), &game, &pop, sigma);
  } else {
    lambdas = resolve_lambdas(policy, batch.n, batch.k, batch.samples());
  }
  const auto fits = fit_all(batch, lambdas, c.solver, o.jobs);
  for (const auto& [i, pf] : fits) {
    if (!pf.fit)
      spdlog::warn("player {}: fit failed: {}", i, pf.error);
    else if (!pf.fit->converged)
      spdlog::warn("player {}: not converged (kkt {:.3g})", i, pf.fit->kkt_residual);
  }
  emit(o, fits_to_json(batch.n, batch.k, fits).dump(2) + "\n");
  return kOk;
}

int cmd_check(const Options& o) {
  require_flag(o.game, "--game");
  require_flag(o.batch, "--batch");
  const auto c = load_config(o);
  const auto game = game_from_json(read_json(o.game));
  const auto exact = read_batch(exact_path(o.batch));
  const auto perturbed = read_batch(perturbed_path(o.batch));
  const double sigma = perturbed.noise ? perturbed.noise->sigma : sigma_of(o, c);
  Json j;
  j["population"] = to_json(check_assumptions(game, exact, sigma));
  j["empirical"] = to_json(diagnose(game, perturbed, sigma, &exact));
  emit(o, j.dump(2) + "\n");
  return kOk;
}

int cmd_evaluate(const Options& o) {
  require_flag(o.game, "--game");
  require_flag(o.fits, "--fits");
  require_flag(o.batch, "--batch");
  const auto c = load_config(o);
  TaskArtifacts a;
  a.generated.game = game_from_json(read_json(o.game));
  const GraphicalGame& game = a.generated.game;
  a.batches.exact = read_batch(exact_path(o.batch));
  a.batches.perturbed = read_batch(perturbed_path(o.batch));
  const double sigma = a.batches.perturbed.noise ? a.batches.perturbed.noise->sigma : sigma_of(o, c);
  a.fits = fits_from_json(read_json(o.fits));
  for (const auto& [i, pf] : a.fits) a.lambdas.push_back(pf.fit ? pf.fit->lambda : 0.0);
  a.population = check_assumptions(game, a.batches.exact, sigma);
  a.diagnostics = diagnose(game, a.batches.perturbed, sigma, &a.batches.exact);
  EvaluateOptions eo;
  eo.containment_points = c.containment_points;
  eo.seed = derive_seed(o.seed, {stream::containment});
  eo.assumptions = a.population;
  eo.sigma = sigma;
  a.report = evaluate(game, a.fits, eo);

  TaskSpec t = manual_task(o, c, game, a.batches.perturbed.samples());
  t.sigma = sigma;
  Json j = to_json(a.report);
  j["result_row"] = to_csv(row_from(t, a));
  emit(o, j.dump(2) + "\n");
  return kOk;
}

int cmd_sweep(const Options& o) {
  require_flag(o.config, "--config");
  const auto c = load_config(o);
  if (o.dry_run) {
    std::string text = "task,n,k,d,T,sigma,lambda,repetition,seed\n";
    for (const auto& t : expand_grid(c))
      text += std::to_string(t.index) + "," + std::to_string(t.n) + "," + std::to_string(t.k) + "," +
              std::to_string(t.d) + "," + std::to_string(t.samples) + "," + format_double(t.sigma) + "," +
              t.lambda.label() + "," + std::to_string(t.repetition) + "," + std::to_string(t.seed) + "\n";
    emit(o, text);
    return kOk;
  }
  const auto rows = run_sweep(c, o.jobs, o.timing, [](const ResultRow& r) {
    if (!r.error.empty()) spdlog::warn("task {} failed: {}", r.task, r.error);
    else spdlog::debug("task {} done: f1={:.3f}", r.task, r.f1);
  });
  Options out = o;
  if (out.out.empty()) out.out = c.results_csv;
  emit(out, results_to_csv(rows));
  return kOk;
}

void print_error(const char* kind, int code, const std::string& message) {
  Json j;
  j["error"] = {{"kind", kind}, {"exit_code", code}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("game_recover");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("GAME_RECOVER_LOG")) {
    const std::string level = env;
    if (level == "error" || level == "warn" || level == "info" || level == "debug")
      spdlog::set_level(spdlog::level::from_str(level));
    else
      spdlog::warn("ignoring GAME_RECOVER_LOG='{}'", level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  Options o;
  CLI::App app{"Learn graphical games with quadratic payoffs from noisy equilibria"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)");
    sub->add_option("--out", o.out, "output path (stdout when omitted)");
    sub->add_option("--seed", o.seed, "task seed");
  };
  auto* gen = app.add_subcommand("generate", "generate a random game");
  common(gen);
  auto* smp = app.add_subcommand("sample", "sample exact and perturbed equilibria into a directory");
  common(smp);
  smp->add_option("--game", o.game, "game file");
  smp->add_option("--T", o.samples, "number of samples");
  smp->add_option("--sigma", o.sigma, "noise level");
  smp->add_option("--noise", o.noise, "gaussian | uniform | rademacher");
  auto* fit = app.add_subcommand("fit", "fit every player");
  common(fit);
  fit->add_option("--batch", o.batch, "sample directory");
  fit->add_option("--game", o.game, "game file (needed for --lambda theoretical)");
  fit->add_option("--lambda", o.lambda, "float | theoretical | scaled:c");
  fit->add_option("--jobs", o.jobs, "worker threads (0 = auto)");
  auto* chk = app.add_subcommand("check", "population and empirical diagnostics");
  common(chk);
  chk->add_option("--game", o.game, "game file");
  chk->add_option("--batch", o.batch, "sample directory");
  chk->add_option("--sigma", o.sigma, "noise level (defaults to the batch metadata)");
  auto* ev = app.add_subcommand("evaluate", "score fits against the true game");
  common(ev);
  ev->add_option("--game", o.game, "game file");
  ev->add_option("--fits", o.fits, "fits file");
  ev->add_option("--batch", o.batch, "sample directory");
  ev->add_option("--lambda", o.lambda, "lambda label for the result row");
  auto* sw = app.add_subcommand("sweep", "run a grid of experiments");
  common(sw);
  sw->add_option("--jobs", o.jobs, "worker threads (0 = auto)");
  sw->add_flag("--timing", o.timing, "record wall_time_ms (otherwise written as 0)");
  sw->add_flag("--dry-run", o.dry_run, "list tasks and their seeds without running them");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config", kConfig, e.what());
    return kConfig;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*smp) return cmd_sample(o);
    if (*fit) return cmd_fit(o);
    if (*chk) return cmd_check(o);
    if (*ev) return cmd_evaluate(o);
    if (*sw) return cmd_sweep(o);
  } catch (const ConfigError& e) {
    print_error("config", kConfig, e.what());
    return kConfig;
  } catch (const InvalidInput& e) {
    print_error("config", kConfig, e.what());
    return kConfig;
  } catch (const IoError& e) {
    print_error("io", kIo, e.what());
    return kIo;
  } catch (const Error& e) {
    print_error("numerical", kNumerical, e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    print_error("numerical", kNumerical, e.what());
    return kNumerical;
  }
  return kOk;
}
