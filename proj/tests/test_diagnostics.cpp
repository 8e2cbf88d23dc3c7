#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gamerecover/diagnostics.hpp"
#include "gamerecover/game_generator.hpp"
#include "test_util.hpp"

using namespace gamerecover;
using testutil::scalar;

namespace {

SampleBatch batch_of(const Matrix& data, int n, int k, BatchKind kind = BatchKind::perturbed) {
  SampleBatch b;
  b.data = data;
  b.n = n;
  b.k = k;
  b.kind = kind;
  return b;
}

/// Two disconnected swap pairs {0,1} and {2,3}: a two-dimensional kernel in
/// which the pairs move independently.
GraphicalGame two_pairs() {
  GraphicalGame g(4, 1, 1.0);
  g.set_block(0, 1, scalar(1));
  g.set_block(1, 0, scalar(1));
  g.set_block(2, 3, scalar(1));
  g.set_block(3, 2, scalar(1));
  return g;
}

GraphicalGame small_generated(std::uint64_t seed) {
  GeneratorConfig c;
  c.n = 4;
  c.k = 2;
  c.d = 2;
  c.seed = seed;
  return generate(c);
}

}  // namespace

TEST(EmpiricalH, Examples) {
  EXPECT_EQ(empirical_h(batch_of(Matrix::Ones(1, 2), 2, 1), 0), Matrix::Ones(1, 1));
  EXPECT_EQ(empirical_h(batch_of(Matrix::Zero(7, 6), 3, 2), 1), Matrix::Zero(4, 4));
}

TEST(EmpiricalH, MatchesLoopSums) {
  const auto b = testutil::gaussian_batch(4, 2, 37, 3);
  for (int i = 0; i < 4; ++i) {
    const auto s = oracle::stats(testutil::to_dense(b.data), 4, 2, i);
    EXPECT_LE((empirical_h(b, i) - testutil::to_eigen(s.h)).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(PopulationH, Examples) {
  EXPECT_TRUE(population_h(batch_of(Matrix::Zero(5, 6), 3, 2, BatchKind::exact), 0, 0.5)
                  .isApprox(0.25 * Matrix::Identity(4, 4)));
  GraphicalGame g(2, 1, 1.0);
  g.set_block(0, 1, scalar(1));
  g.set_block(1, 0, scalar(1));
  const auto exact = sample_equilibria(g, equilibrium_basis(g), 40, 2, 0.6);
  const double mean_sq = exact.data.col(1).array().square().mean();
  EXPECT_NEAR(population_h(exact, 0, 0.3)(0, 0), 0.09 + mean_sq, 1e-15);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto game = small_generated(seed);
    const auto ex = sample_equilibria(game, equilibrium_basis(game), 30, seed);
    for (int i = 0; i < 4; ++i) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(population_h(ex, i, 0.2));
      EXPECT_GE(eig.eigenvalues()(0), 0.04 - 1e-12);
    }
  }
}

TEST(EmpiricalH, ConvergesToPopulation) {
  const auto game = small_generated(1);
  const auto exact = sample_equilibria(game, equilibrium_basis(game), 100000, 4, 0.8);
  const auto noisy = perturb(exact, {NoiseFamily::gaussian, 0.1}, 5);
  for (int i = 0; i < 4; ++i) {
    const Matrix d = empirical_h(noisy, i) - population_h(exact, i, 0.1);
    EXPECT_LE(d.jacobiSvd().singularValues()(0), 0.05);
  }
}

TEST(EmpiricalH, DeviationShrinksLikeInverseRootT) {
  const auto game = small_generated(2);
  const Matrix basis = equilibrium_basis(game);
  std::vector<double> logt, logd;
  for (int t : {100, 1000, 10000, 100000}) {
    double avg = 0.0;
    const int reps = 6;
    for (int r = 0; r < reps; ++r) {
      const auto exact = sample_equilibria(game, basis, t, derive_seed(9, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(r), 1}));
      const auto noisy = perturb(exact, {NoiseFamily::gaussian, 0.3}, derive_seed(9, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(r), 2}));
      avg += oracle::inf_inf(testutil::to_dense(empirical_h(noisy, 0) - population_h(exact, 0, 0.3))) / reps;
    }
    logt.push_back(std::log(static_cast<double>(t)));
    logd.push_back(std::log(avg));
  }
  const double mt = std::accumulate(logt.begin(), logt.end(), 0.0) / 4, md = std::accumulate(logd.begin(), logd.end(), 0.0) / 4;
  double num = 0.0, den = 0.0;
  for (std::size_t q = 0; q < 4; ++q) {
    num += (logt[q] - mt) * (logd[q] - md);
    den += (logt[q] - mt) * (logt[q] - mt);
  }
  const double slope = num / den;
  EXPECT_GE(slope, -0.65);
  EXPECT_LE(slope, -0.35);
}

TEST(SampleIncoherence, Conventions) {
  // S^c empty
  auto r = sample_incoherence(Matrix::Identity(2, 2), 3, 1, 0, {1, 2});
  EXPECT_EQ(r.norm, 0.0);
  EXPECT_EQ(r.alpha, 1.0);
  // identity H: off-diagonal restriction is zero
  r = sample_incoherence(Matrix::Identity(8, 8), 5, 2, 2, {0, 4});
  EXPECT_EQ(r.norm, 0.0);
  EXPECT_EQ(r.alpha, 1.0);
  ASSERT_TRUE(r.c_min.has_value());
  EXPECT_NEAR(*r.c_min, 1.0, 1e-15);
  // empty support
  r = sample_incoherence(Matrix::Identity(4, 4), 5, 1, 0, {});
  EXPECT_EQ(r.alpha, 1.0);
  EXPECT_FALSE(r.c_min.has_value());
  EXPECT_THROW(sample_incoherence(Matrix::Identity(3, 3), 5, 1, 0, {1}), InvalidInput);
}

TEST(SampleIncoherence, SingularFlagged) {
  Matrix h = Matrix::Zero(3, 3);
  h(2, 2) = 1.0;
  const auto r = sample_incoherence(h, 4, 1, 0, {1, 2});
  EXPECT_TRUE(r.singular);
  EXPECT_TRUE(std::isinf(r.norm));
  EXPECT_LT(r.alpha, 0.0);
}

TEST(SampleIncoherence, MatchesBruteForceOnThreePlayers) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const int k = 1 + static_cast<int>(seed % 2);
    const int n = 3 + static_cast<int>(seed % 2);
    const auto b = testutil::gaussian_batch(n, k, 25, seed + 50);
    const int i = static_cast<int>(seed % static_cast<unsigned>(n));
    const auto others = other_players(n, i);
    const std::vector<int> support{others[0]};
    const auto s = oracle::stats(testutil::to_dense(b.data), n, k, i);
    // rows/cols of H: position 0 is the support player, the rest are S^c
    oracle::Dense hss = oracle::zeros(k, k), hcs = oracle::zeros(static_cast<std::size_t>((n - 2) * k), k);
    for (int a = 0; a < k; ++a) {
      for (int c = 0; c < k; ++c) hss[a][c] = s.h[a][c];
      for (int r = 0; r < (n - 2) * k; ++r) hcs[r][a] = s.h[k + r][a];
    }
    const auto m = oracle::multiply(hcs, oracle::inverse(hss));
    const double expected = oracle::b_inf_1(m, std::vector<int>(n - 2, k));
    const auto r = sample_incoherence(empirical_h(b, i), n, k, i, support);
    EXPECT_NEAR(r.norm, expected, 1e-10 * (1 + expected));
    EXPECT_NEAR(r.alpha, 1 - expected, 1e-10 * (1 + expected));
    EXPECT_NEAR(*r.c_min, oracle::min_eigenvalue(hss), 1e-12);
  }
}

TEST(SampleIncoherence, LargeSampleKeepsHalfTheMargin) {
  // Independent swap pairs: the population margin is 1.
  const auto g = two_pairs();
  const Matrix basis = equilibrium_basis(g);
  ASSERT_EQ(basis.cols(), 2);
  const auto pop = check_assumptions(g, sample_equilibria(g, basis, 20000, 1, 0.8), 0.1);
  ASSERT_GT(pop.alpha, 0.9);
  int good = 0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    const auto exact = sample_equilibria(g, basis, 5000, derive_seed(77, {static_cast<std::uint64_t>(s), 1}), 0.8);
    const auto noisy = perturb(exact, {NoiseFamily::gaussian, 0.1}, derive_seed(77, {static_cast<std::uint64_t>(s), 2}));
    if (diagnose(g, noisy, 0.1).min_alpha() >= pop.alpha / 2) ++good;
  }
  EXPECT_GE(good, static_cast<int>(std::ceil(0.95 * seeds)));
}

TEST(Diagnose, ReportShapeAndNoiseMoments) {
  const auto game = small_generated(3);
  const auto exact = sample_equilibria(game, equilibrium_basis(game), 200, 1, 0.8);
  const auto noisy = perturb(exact, {NoiseFamily::gaussian, 0.2}, 2);
  const auto r = diagnose(game, noisy, 0.2, &exact);
  ASSERT_EQ(r.players.size(), 4u);
  EXPECT_EQ(r.samples, 200);
  double lo = 1e300, amin = 1.0;
  for (const auto& p : r.players) {
    ASSERT_TRUE(p.noise.has_value());
    lo = std::min(lo, *p.c_min_empirical);
    amin = std::min(amin, p.alpha_empirical);
  }
  EXPECT_EQ(r.min_c_min(), lo);
  EXPECT_EQ(r.min_alpha(), amin);

  // ||E[(x_{-i})_S e_i^T]||_{inf,2} by explicit sums for player 0
  const auto support = game.in_neighbors(0);
  double worst = 0.0;
  for (int j : support)
    for (int a = 0; a < 2; ++a) {
      double row = 0.0;
      for (int c = 0; c < 2; ++c) {
        double m = 0.0;
        for (Eigen::Index t = 0; t < 200; ++t)
          m += noisy.data(t, j * 2 + a) * (noisy.data(t, c) - exact.data(t, c));
        row += (m / 200) * (m / 200);
      }
      worst = std::max(worst, std::sqrt(row));
    }
  EXPECT_NEAR(r.players[0].noise->xe_own_support, worst, 1e-12);
  EXPECT_THROW(diagnose(game, testutil::gaussian_batch(3, 2, 10, 1), 0.2), InvalidInput);
}

TEST(CheckLemma1, RateBoundsAndTrend) {
  const auto game = small_generated(4);
  const double r1 = check_lemma1(game, 0.5, 1, 20, 3);
  EXPECT_GE(r1, 0.0);
  EXPECT_LE(r1, 1.0);
  const double a = check_lemma1(game, 0.3, 100, 40, 5, 0.8);
  const double b = check_lemma1(game, 0.3, 1000, 40, 5, 0.8);
  const double c = check_lemma1(game, 0.3, 10000, 40, 5, 0.8);
  EXPECT_GE(b, a - 0.05);
  EXPECT_GE(c, b - 0.05);
  EXPECT_EQ(c, 1.0);
  EXPECT_THROW(check_lemma1(game, 0.0, 10, 1, 1), InvalidInput);
}

TEST(CheckSubexponential, EdgesAndRange) {
  const auto rows = check_subexponential(SubexpFamily::square, {0.0, 0.2, -0.25}, 100000, 2, 1);
  EXPECT_DOUBLE_EQ(rows[0].empirical, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].bound, 1.0);
  EXPECT_LE(rows[1].empirical, std::exp(0.64));
  EXPECT_NEAR(rows[1].empirical, std::exp(-0.2) / std::sqrt(1 - 0.4), 0.02);
  EXPECT_TRUE(std::isfinite(rows[2].empirical));
  const auto prod = check_subexponential(SubexpFamily::product, {0.1}, 100000, 1, 2);
  EXPECT_NEAR(prod[0].empirical, 1.0 / std::sqrt(1 - 0.01), 0.01);
  EXPECT_THROW(check_subexponential(SubexpFamily::square, {0.3}, 10, 1, 1), InvalidInput);
}
