#include <gtest/gtest.h>

#include <filesystem>

#include "gamerecover/harness.hpp"
#include "test_util.hpp"

using namespace gamerecover;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny() {
  return experiment_from_json(Json::parse(R"({
    "n": [6], "k": [2], "d": [2], "T": [300], "sigma": [0.1],
    "lambda": ["scaled:0.5"], "repetitions": 1, "master_seed": 11,
    "containment_points": 5
  })"));
}

}  // namespace

TEST(LambdaPolicy, Parsing) {
  EXPECT_EQ(parse_lambda_policy("0.25").kind, LambdaPolicy::Kind::fixed);
  EXPECT_EQ(parse_lambda_policy("0.25").value, 0.25);
  EXPECT_EQ(parse_lambda_policy("theoretical").kind, LambdaPolicy::Kind::theoretical);
  const auto s = parse_lambda_policy("scaled:0.3");
  EXPECT_EQ(s.kind, LambdaPolicy::Kind::scaled);
  EXPECT_EQ(s.label(), "scaled:0.3");
  EXPECT_THROW(parse_lambda_policy("scaled:-1"), ConfigError);
  EXPECT_THROW(parse_lambda_policy("big"), ConfigError);
  EXPECT_THROW(parse_lambda_policy("-0.1"), ConfigError);
  EXPECT_DOUBLE_EQ(scaled_lambda(2.0, 10, 2, 400), 2.0 * std::sqrt(std::log(20.0) / 400));
  EXPECT_DOUBLE_EQ(scaled_lambda(1.0, 1, 3, 100), std::sqrt(std::log(6.0) / 100));
}

TEST(ExperimentConfig, ParsesAndValidates) {
  const auto c = experiment_from_json(Json::parse(R"({
    "n": [10, 20], "k": 2, "T": [100, 200, 400], "sigma": 0.2, "lambda": [0.1, "scaled:1", "theoretical"],
    "repetitions": 3, "master_seed": 5, "noise": "rademacher",
    "generator": {"weight_low": 0.2, "alpha_target": 0.1},
    "solver": {"tol_kkt": 1e-9, "step_rule": "backtracking"},
    "output": {"results_csv": "out.csv"}
  })"));
  EXPECT_EQ(c.n, (std::vector<int>{10, 20}));
  EXPECT_EQ(c.k, (std::vector<int>{2}));
  EXPECT_EQ(c.lambda.size(), 3u);
  EXPECT_EQ(c.noise, NoiseFamily::rademacher);
  EXPECT_EQ(c.generator.weight_low, 0.2);
  EXPECT_EQ(*c.generator.alpha_target, 0.1);
  EXPECT_EQ(c.solver.step_rule, StepRule::backtracking);
  EXPECT_EQ(c.results_csv, "out.csv");
  EXPECT_EQ(expand_grid(c).size(), 2u * 3u * 3u * 3u);

  EXPECT_THROW(experiment_from_json(Json::parse(R"({"n": []})")), ConfigError);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"repetitions": 0})")), ConfigError);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"n": ["x"]})")), ConfigError);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"noise": "cauchy"})")), ConfigError);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"sigma": [0]})")), ConfigError);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"solver": {"step_rule": "newton"}})")), ConfigError);
}

TEST(ExpandGrid, SeedsAreHashesOfPointAndRepetition) {
  auto c = tiny();
  c.samples = {100, 200};
  c.repetitions = 3;
  const auto tasks = expand_grid(c);
  ASSERT_EQ(tasks.size(), 6u);
  EXPECT_EQ(tasks[4].samples, 200);
  EXPECT_EQ(tasks[4].repetition, 1);
  EXPECT_EQ(tasks[4].seed, derive_seed(11, {1, 1}));
  std::set<std::uint64_t> seeds;
  for (const auto& t : tasks) seeds.insert(t.seed);
  EXPECT_EQ(seeds.size(), tasks.size());
}

TEST(Sweep, DeterministicAndIndependentOfJobs) {
  auto c = tiny();
  c.repetitions = 3;
  c.samples = {200, 400};
  const auto a = results_to_csv(run_sweep(c, 1));
  const auto b = results_to_csv(run_sweep(c, 3));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, results_to_csv(run_sweep(c, 1)));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 7);
}

TEST(Sweep, OnePointEqualsFileLevelPipeline) {
  const auto c = tiny();
  const auto task = expand_grid(c).front();
  const auto row = to_csv(run_sweep(c).front());

  const auto dir = fs::temp_directory_path() / "gamerecover_compose";
  fs::remove_all(dir);
  // generate -> file
  write_json(dir / "game.json", to_json(generate_game({6, 2, 2, c.generator}, task.seed).game));
  const auto game = game_from_json(read_json(dir / "game.json"));
  // sample -> files
  const auto b = sample_batches(game, 300, {c.noise, 0.1}, c.generator.target_equilibrium_scale, task.seed);
  write_batch(dir / "exact.csv", b.exact);
  write_batch(dir / "perturbed.csv", b.perturbed);
  // fit -> file
  const auto noisy = read_batch(dir / "perturbed.csv");
  write_json(dir / "fits.json",
             fits_to_json(6, 2, fit_all(noisy, resolve_lambdas(task.lambda, 6, 2, 300), c.solver)));
  // evaluate
  TaskArtifacts a;
  a.generated.game = game;
  a.batches.exact = read_batch(dir / "exact.csv");
  a.batches.perturbed = noisy;
  a.fits = fits_from_json(read_json(dir / "fits.json"));
  for (const auto& [i, pf] : a.fits) a.lambdas.push_back(pf.fit->lambda);
  a.population = check_assumptions(game, a.batches.exact, 0.1);
  a.diagnostics = diagnose(game, noisy, 0.1, &a.batches.exact);
  EvaluateOptions eo;
  eo.containment_points = c.containment_points;
  eo.seed = derive_seed(task.seed, {stream::containment});
  eo.assumptions = a.population;
  eo.sigma = 0.1;
  a.report = evaluate(game, a.fits, eo);
  EXPECT_EQ(to_csv(row_from(task, a)), row);
}

TEST(Sweep, FailedTasksBecomeErrorRows) {
  auto c = tiny();
  c.lambda = {parse_lambda_policy("theoretical")};
  const auto rows = run_sweep(c);
  ASSERT_EQ(rows.size(), 1u);
  // generated games typically violate incoherence; either way the row exists
  if (!rows[0].error.empty()) {
    EXPECT_NE(rows[0].error.find("alpha"), std::string::npos);
  }
  EXPECT_EQ(rows[0].wall_time_ms, 0.0);
  EXPECT_GT(run_task(tiny(), expand_grid(tiny()).front(), true).wall_time_ms, 0.0);
}

TEST(Generate, RejectionResamplingIsDeterministic) {
  GeneratorKnobs k;
  k.alpha_target = 0.99;
  k.max_resample = 4;
  k.samples_for_alpha = 50;
  const auto a = generate_game({5, 2, 2, k}, 9);
  const auto b = generate_game({5, 2, 2, k}, 9);
  EXPECT_EQ(a.game, b.game);
  EXPECT_EQ(a.attempts, b.attempts);
  EXPECT_LE(a.attempts, 4);
  ASSERT_TRUE(a.alpha_population.has_value());
  if (a.attempts < 4) {
    EXPECT_GE(*a.alpha_population, 0.99);
  }
}
