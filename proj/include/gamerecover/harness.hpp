#pragma once

// Experiment plumbing: lambda policies, the per-task pipeline
// generate -> sample -> fit -> diagnose -> evaluate, grid sweeps, and the
// file-level commands behind the CLI. Every command is a pure function of its
// inputs and seeds; a sweep task with seed S does exactly what the individual
// commands do when each is given --seed S.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "gamerecover/diagnostics.hpp"
#include "gamerecover/equilibrium_sampler.hpp"
#include "gamerecover/error.hpp"
#include "gamerecover/game_generator.hpp"
#include "gamerecover/group_lasso.hpp"
#include "gamerecover/recovery.hpp"
#include "gamerecover/seeding.hpp"
#include "gamerecover/serialization.hpp"

namespace gamerecover {

// ------------------------------------------------------------ lambda policy

/// A fixed value, the theoretical schedule, or c * sqrt(log(max(n,2) k) / T).
struct LambdaPolicy {
  enum class Kind { fixed, theoretical, scaled } kind = Kind::fixed;
  double value = 0.0;  ///< lambda for fixed, c for scaled

  std::string label() const {
    switch (kind) {
      case Kind::fixed: return format_double(value);
      case Kind::theoretical: return "theoretical";
      case Kind::scaled: return "scaled:" + format_double(value);
    }
    return "?";
  }
};

inline LambdaPolicy parse_lambda_policy(const std::string& s) {
  if (s == "theoretical") return {LambdaPolicy::Kind::theoretical, 0.0};
  if (s.rfind("scaled:", 0) == 0) {
    const double c = parse_double(s.substr(7));
    if (!(c > 0.0)) throw ConfigError("scaled lambda constant must be positive");
    return {LambdaPolicy::Kind::scaled, c};
  }
  double v = 0.0;
  try {
    v = parse_double(s);
  } catch (const IoError&) {
    throw ConfigError("lambda must be a number, 'theoretical' or 'scaled:c'; got '" + s + "'");
  }
  if (!(v >= 0.0)) throw ConfigError("lambda must be nonnegative");
  return {LambdaPolicy::Kind::fixed, v};
}

inline LambdaPolicy lambda_policy_from_json(const Json& j) {
  if (j.is_number()) {
    const double v = j.get<double>();
    if (!(v >= 0.0)) throw ConfigError("lambda must be nonnegative");
    return {LambdaPolicy::Kind::fixed, v};
  }
  if (j.is_string()) return parse_lambda_policy(j.get<std::string>());
  throw ConfigError("lambda entries must be numbers or strings");
}

inline double scaled_lambda(double c, int n, int k, long samples) {
  return c * std::sqrt(std::log(static_cast<double>(std::max(n, 2)) * k) / static_cast<double>(samples));
}

/// Per-player lambda. The theoretical schedule needs the true game and the
/// population report (alpha, W_max, W_min); alpha outside (0, 1] is an error.
inline std::vector<double> resolve_lambdas(const LambdaPolicy& policy, int n, int k, long samples,
                                           const GraphicalGame* truth = nullptr, const AssumptionReport* pop = nullptr,
                                           double sigma = 0.0) {
  switch (policy.kind) {
    case LambdaPolicy::Kind::fixed: return std::vector<double>(static_cast<std::size_t>(n), policy.value);
    case LambdaPolicy::Kind::scaled:
      return std::vector<double>(static_cast<std::size_t>(n), scaled_lambda(policy.value, n, k, samples));
    case LambdaPolicy::Kind::theoretical: break;
  }
  if (truth == nullptr || pop == nullptr)
    throw ConfigError("lambda 'theoretical' needs the true game and its exact equilibria");
  if (!(pop->alpha > 0.0 && pop->alpha <= 1.0))
    throw NumericalError("lambda 'theoretical' undefined: population incoherence alpha = " + format_double(pop->alpha) +
                         " is outside (0, 1]");
  std::vector<double> out;
  for (int i = 0; i < n; ++i) {
    TheoryInputs in;
    in.k = k;
    in.support = static_cast<int>(truth->in_neighbors(i).size());
    in.complement = static_cast<int>(truth->non_neighbors(i).size());
    in.samples = static_cast<double>(samples);
    in.sigma = sigma;
    in.budget = truth->budget();
    in.alpha = pop->alpha;
    in.w_max = pop->w_max;
    in.w_min = pop->w_min;
    out.push_back(in.support == 0 ? 0.0 : lambda_theoretical(in).value);
  }
  return out;
}

// ----------------------------------------------------------------- configs

struct GeneratorKnobs {
  double weight_low = 0.3;
  double weight_high = 0.7;
  double target_equilibrium_scale = 0.8;
  double budget = 1.0;
  std::optional<double> alpha_target;  ///< enables rejection resampling
  int max_resample = 100;
  double sigma_for_alpha = 0.1;
  int samples_for_alpha = 200;
};

struct ExperimentConfig {
  std::vector<int> n{10};
  std::vector<int> k{2};
  std::vector<int> d{3};
  std::vector<long> samples{1000};
  std::vector<double> sigma{0.1};
  std::vector<LambdaPolicy> lambda{{LambdaPolicy::Kind::scaled, 0.5}};
  int repetitions = 1;
  std::uint64_t master_seed = 0;
  NoiseFamily noise = NoiseFamily::gaussian;
  GeneratorKnobs generator;
  SolverConfig solver;
  int containment_points = 20;
  std::string results_csv = "results.csv";
};

namespace detail {

template <class T>
std::vector<T> grid_from_json(const Json& j, const char* key, std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  std::vector<T> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.get<T>());
  } else {
    out.push_back(v.get<T>());
  }
  if (out.empty()) throw ConfigError(std::string("grid '") + key + "' must not be empty");
  return out;
}

inline SolverConfig solver_from_json(const Json& j, SolverConfig base = {}) {
  if (j.contains("tol_kkt")) base.tol_kkt = j.at("tol_kkt").get<double>();
  if (j.contains("tol_rel_obj")) base.tol_rel_obj = j.at("tol_rel_obj").get<double>();
  if (j.contains("max_iter")) base.max_iter = j.at("max_iter").get<int>();
  if (j.contains("stall_window")) base.stall_window = j.at("stall_window").get<int>();
  if (j.contains("acceleration")) base.acceleration = j.at("acceleration").get<bool>();
  if (j.contains("step_rule")) {
    const auto s = j.at("step_rule").get<std::string>();
    if (s != "fixed" && s != "backtracking") throw ConfigError("step_rule must be 'fixed' or 'backtracking'");
    base.step_rule = s == "fixed" ? StepRule::fixed : StepRule::backtracking;
  }
  return base;
}

inline GeneratorKnobs knobs_from_json(const Json& j, GeneratorKnobs g = {}) {
  g.weight_low = j.value("weight_low", g.weight_low);
  g.weight_high = j.value("weight_high", g.weight_high);
  g.target_equilibrium_scale = j.value("target_equilibrium_scale", g.target_equilibrium_scale);
  g.budget = j.value("budget", g.budget);
  if (j.contains("alpha_target") && !j.at("alpha_target").is_null()) g.alpha_target = j.at("alpha_target").get<double>();
  g.max_resample = j.value("max_resample", g.max_resample);
  g.sigma_for_alpha = j.value("sigma_for_alpha", g.sigma_for_alpha);
  g.samples_for_alpha = j.value("samples_for_alpha", g.samples_for_alpha);
  return g;
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const Json& j) {
  ExperimentConfig c;
  try {
    c.n = detail::grid_from_json<int>(j, "n", c.n);
    c.k = detail::grid_from_json<int>(j, "k", c.k);
    c.d = detail::grid_from_json<int>(j, "d", c.d);
    c.samples = detail::grid_from_json<long>(j, "T", c.samples);
    c.sigma = detail::grid_from_json<double>(j, "sigma", c.sigma);
    if (j.contains("lambda")) {
      c.lambda.clear();
      const Json& l = j.at("lambda");
      if (l.is_array()) {
        for (const auto& e : l) c.lambda.push_back(lambda_policy_from_json(e));
      } else {
        c.lambda.push_back(lambda_policy_from_json(l));
      }
      if (c.lambda.empty()) throw ConfigError("grid 'lambda' must not be empty");
    }
    c.repetitions = j.value("repetitions", c.repetitions);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("noise")) c.noise = parse_noise_family(j.at("noise").get<std::string>());
    if (j.contains("generator")) c.generator = detail::knobs_from_json(j.at("generator"));
    if (j.contains("solver")) c.solver = detail::solver_from_json(j.at("solver"));
    c.containment_points = j.value("containment_points", c.containment_points);
    if (j.contains("output")) c.results_csv = j.at("output").value("results_csv", c.results_csv);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (c.repetitions < 1) throw ConfigError("repetitions must be at least 1");
  for (long t : c.samples)
    if (t < 1) throw ConfigError("T must be positive");
  for (double s : c.sigma)
    if (!(s > 0.0)) throw ConfigError("sigma must be positive");
  return c;
}

// ------------------------------------------------------------ pipeline steps

struct GenerateOptions {
  int n = 10;
  int k = 2;
  int d = 3;
  GeneratorKnobs knobs;
};

struct GenerateOutcome {
  GraphicalGame game{1, 1, 1.0};
  int attempts = 1;
  std::optional<double> alpha_population;
};

/// With alpha_target set, regenerates (up to max_resample attempts) until the
/// population incoherence margin reaches the target; the last attempt is
/// returned either way.
inline GenerateOutcome generate_game(const GenerateOptions& o, std::uint64_t seed) {
  GenerateOutcome out;
  const int attempts = o.knobs.alpha_target ? std::max(1, o.knobs.max_resample) : 1;
  for (int a = 0; a < attempts; ++a) {
    GeneratorConfig g;
    g.n = o.n;
    g.k = o.k;
    g.d = o.d;
    g.weight_low = o.knobs.weight_low;
    g.weight_high = o.knobs.weight_high;
    g.target_equilibrium_scale = o.knobs.target_equilibrium_scale;
    g.budget = o.knobs.budget;
    g.seed = a == 0 ? derive_seed(seed, {stream::generate}) : derive_seed(seed, {stream::resample, static_cast<std::uint64_t>(a)});
    out.game = generate(g);
    out.attempts = a + 1;
    if (!o.knobs.alpha_target) break;
    const Matrix basis = equilibrium_basis(out.game);
    if (basis.cols() == 0) continue;
    const auto exact = sample_equilibria(out.game, basis, o.knobs.samples_for_alpha,
                                         derive_seed(g.seed, {stream::equilibria}), o.knobs.target_equilibrium_scale);
    out.alpha_population = check_assumptions(out.game, exact, o.knobs.sigma_for_alpha).alpha;
    if (*out.alpha_population >= *o.knobs.alpha_target) break;
  }
  return out;
}

struct SampledBatches {
  SampleBatch exact;
  SampleBatch perturbed;
};

inline SampledBatches sample_batches(const GraphicalGame& game, long samples, const NoiseSpec& noise, double scale,
                                     std::uint64_t seed) {
  const Matrix basis = equilibrium_basis(game);
  SampledBatches out;
  out.exact = sample_equilibria(game, basis, static_cast<int>(samples), derive_seed(seed, {stream::equilibria}), scale);
  out.perturbed = perturb(out.exact, noise, derive_seed(seed, {stream::noise}));
  return out;
}

// ------------------------------------------------------------------- sweeps

struct ResultRow {
  long task = 0;
  int n = 0;
  int k = 0;
  int d = 0;
  long samples = 0;
  double sigma = 0.0;
  std::string lambda_label;
  int repetition = 0;
  std::uint64_t seed = 0;
  double lambda_value = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool exact_structure = false;
  double param_error = 0.0;
  double alpha_population = 0.0;
  double alpha_empirical = 0.0;
  double c_min_empirical = 0.0;
  double kkt_residual_max = 0.0;
  int unconverged = 0;
  double chain_epsilon = 0.0;
  double containment_rate = 0.0;
  std::string error;
  double wall_time_ms = 0.0;
};

inline std::string results_header() {
  return "task,n,k,d,T,sigma,lambda,repetition,seed,lambda_value,precision,recall,f1,exact_structure,param_error,"
         "alpha_population,alpha_empirical,c_min_empirical,kkt_residual_max,unconverged,chain_epsilon,"
         "containment_rate,error,wall_time_ms";
}

inline std::string to_csv(const ResultRow& r) {
  std::string err = r.error;
  std::replace(err.begin(), err.end(), ',', ';');
  std::replace(err.begin(), err.end(), '\n', ' ');
  std::string s;
  auto add = [&s](const std::string& v) {
    if (!s.empty()) s += ',';
    s += v;
  };
  add(std::to_string(r.task));
  add(std::to_string(r.n));
  add(std::to_string(r.k));
  add(std::to_string(r.d));
  add(std::to_string(r.samples));
  add(format_double(r.sigma));
  add(r.lambda_label);
  add(std::to_string(r.repetition));
  add(std::to_string(r.seed));
  add(format_double(r.lambda_value));
  add(format_double(r.precision));
  add(format_double(r.recall));
  add(format_double(r.f1));
  add(r.exact_structure ? "1" : "0");
  add(format_double(r.param_error));
  add(format_double(r.alpha_population));
  add(format_double(r.alpha_empirical));
  add(format_double(r.c_min_empirical));
  add(format_double(r.kkt_residual_max));
  add(std::to_string(r.unconverged));
  add(format_double(r.chain_epsilon));
  add(format_double(r.containment_rate));
  add(err);
  add(format_double(r.wall_time_ms));
  return s;
}

struct TaskSpec {
  long index = 0;
  int n = 0;
  int k = 0;
  int d = 0;
  long samples = 0;
  double sigma = 0.0;
  LambdaPolicy lambda;
  int repetition = 0;
  std::uint64_t seed = 0;
};

inline std::uint64_t task_seed(std::uint64_t master, long grid_point, int repetition) {
  return derive_seed(master, {static_cast<std::uint64_t>(grid_point), static_cast<std::uint64_t>(repetition)});
}

/// Grid points in n, k, d, T, sigma, lambda order; repetitions innermost.
inline std::vector<TaskSpec> expand_grid(const ExperimentConfig& c) {
  std::vector<TaskSpec> out;
  long point = 0;
  for (int n : c.n)
    for (int k : c.k)
      for (int d : c.d)
        for (long t : c.samples)
          for (double s : c.sigma)
            for (const auto& l : c.lambda) {
              for (int r = 0; r < c.repetitions; ++r)
                out.push_back({static_cast<long>(out.size()), n, k, d, t, s, l, r, task_seed(c.master_seed, point, r)});
              ++point;
            }
  return out;
}

/// Everything the pipeline produced for one task, kept for callers that need
/// more than the CSV row (acceptance checks, tests).
struct TaskArtifacts {
  GenerateOutcome generated;
  SampledBatches batches;
  AssumptionReport population;
  std::vector<double> lambdas;
  std::map<int, PlayerFit> fits;
  DiagnosticsReport diagnostics;
  RecoveryReport report;
};

inline TaskArtifacts run_pipeline(const ExperimentConfig& c, const TaskSpec& t) {
  TaskArtifacts a;
  a.generated = generate_game({t.n, t.k, t.d, c.generator}, t.seed);
  const GraphicalGame& game = a.generated.game;
  a.batches = sample_batches(game, t.samples, {c.noise, t.sigma}, c.generator.target_equilibrium_scale, t.seed);
  a.population = check_assumptions(game, a.batches.exact, t.sigma);
  a.lambdas = resolve_lambdas(t.lambda, t.n, t.k, t.samples, &game, &a.population, t.sigma);
  a.fits = fit_all(a.batches.perturbed, a.lambdas, c.solver, 1);
  a.diagnostics = diagnose(game, a.batches.perturbed, t.sigma, &a.batches.exact);
  EvaluateOptions eo;
  eo.containment_points = c.containment_points;
  eo.seed = derive_seed(t.seed, {stream::containment});
  eo.assumptions = a.population;
  eo.sigma = t.sigma;
  a.report = evaluate(game, a.fits, eo);
  return a;
}

inline ResultRow row_from(const TaskSpec& t, const TaskArtifacts& a) {
  ResultRow r;
  r.task = t.index;
  r.n = t.n;
  r.k = t.k;
  r.d = t.d;
  r.samples = t.samples;
  r.sigma = t.sigma;
  r.lambda_label = t.lambda.label();
  r.repetition = t.repetition;
  r.seed = t.seed;
  r.lambda_value = a.lambdas.empty() ? 0.0 : *std::max_element(a.lambdas.begin(), a.lambdas.end());
  r.precision = a.report.precision;
  r.recall = a.report.recall;
  r.f1 = a.report.f1;
  r.exact_structure = a.report.exact_structure;
  r.param_error = a.report.param_error_binf;
  r.alpha_population = a.population.alpha;
  r.alpha_empirical = a.diagnostics.min_alpha();
  r.c_min_empirical = a.diagnostics.min_c_min();
  r.kkt_residual_max = a.report.kkt_residual_max;
  r.unconverged = static_cast<int>(a.report.unconverged.size());
  r.chain_epsilon = a.report.chain_epsilon;
  r.containment_rate = a.report.containment.rate;
  return r;
}

inline ResultRow run_task(const ExperimentConfig& c, const TaskSpec& t, bool timing = false) {
  const auto start = std::chrono::steady_clock::now();
  ResultRow r;
  try {
    r = row_from(t, run_pipeline(c, t));
  } catch (const Error& e) {
    r = ResultRow{};
    r.task = t.index;
    r.n = t.n;
    r.k = t.k;
    r.d = t.d;
    r.samples = t.samples;
    r.sigma = t.sigma;
    r.lambda_label = t.lambda.label();
    r.repetition = t.repetition;
    r.seed = t.seed;
    r.error = e.what();
  }
  if (timing)
    r.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Runs every task; rows come back in task order regardless of `jobs`.
inline std::vector<ResultRow> run_sweep(const ExperimentConfig& c, int jobs = 1, bool timing = false,
                                        const std::function<void(const ResultRow&)>& on_row = {}) {
  const auto tasks = expand_grid(c);
  std::vector<ResultRow> rows(tasks.size());
  int workers = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  std::atomic<std::size_t> next{0};
  std::mutex report_lock;
  auto work = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      rows[i] = run_task(c, tasks[i], timing);
      if (on_row) {
        std::lock_guard<std::mutex> lock(report_lock);
        on_row(rows[i]);
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return rows;
}

inline std::string results_to_csv(const std::vector<ResultRow>& rows) {
  std::string out = results_header() + "\n";
  for (const auto& r : rows) out += to_csv(r) + "\n";
  return out;
}

}  // namespace gamerecover
