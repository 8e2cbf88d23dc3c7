#include <gtest/gtest.h>

#include <random>

#include "gamerecover/game_model.hpp"
#include "test_util.hpp"

using namespace gamerecover;
using testutil::action;
using testutil::scalar;

TEST(Payoff, ZeroGameAtOriginIsZero) {
  GraphicalGame g(3, 2, 1.0);
  EXPECT_EQ(payoff(g, 0, JointAction::Zero(6)), 0.0);
}

TEST(Payoff, ExactBestResponse) {
  const auto g = testutil::two_player(0.5);
  EXPECT_EQ(payoff(g, 0, action({1, 2})), 0.0);
}

TEST(Payoff, HandEvaluation) {
  const auto g = testutil::two_player(0.5);
  EXPECT_DOUBLE_EQ(payoff(g, 0, action({1, 1})), -0.5);
}

TEST(Payoff, RejectsWrongLength) {
  const auto g = testutil::two_player(0.5);
  EXPECT_THROW(payoff(g, 0, action({1, 1, 1})), InvalidInput);
  EXPECT_THROW(payoff(g, 2, action({1, 1})), InvalidInput);
}

TEST(Payoff, NonPositiveAndIgnoresNonNeighbours) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  GraphicalGame g(4, 2, 1.0);
  Matrix w(2, 2);
  w << 0.3, -0.2, 0.1, 0.4;
  g.set_block(0, 1, w);
  g.set_block(0, 3, -w);
  for (int rep = 0; rep < 200; ++rep) {
    JointAction x(8);
    for (int c = 0; c < 8; ++c) x(c) = normal(rng);
    const double u = payoff(g, 0, x);
    EXPECT_LE(u, 0.0);
    JointAction y = x;
    y.segment(4, 2) << normal(rng), normal(rng);  // player 2 is not an in-neighbour of 0
    EXPECT_EQ(payoff(g, 0, y), u);
  }
}

TEST(EpsilonPsne, OriginIsAlwaysEquilibrium) {
  const auto g = testutil::two_player(0.5);
  EXPECT_TRUE(is_epsilon_psne(g, action({0, 0}), 0.0));
}

TEST(EpsilonPsne, HandCases) {
  const auto g = testutil::two_player(0.5);
  EXPECT_FALSE(is_epsilon_psne(g, action({1, 1}), 0.4));
  EXPECT_TRUE(is_epsilon_psne(g, action({0.3, 0}), 0.31));
}

TEST(EpsilonPsne, BudgetIsEnforced) {
  GraphicalGame g(2, 1, 1.0);
  g.set_block(0, 1, scalar(1.0));
  g.set_block(1, 0, scalar(1.0));
  EXPECT_TRUE(is_epsilon_psne(g, action({1, 1}), 0.0));
  EXPECT_FALSE(is_epsilon_psne(g, action({2, 2}), 0.0));
}

TEST(EpsilonPsne, NegativeEpsRejected) {
  const auto g = testutil::two_player(0.5);
  EXPECT_THROW(is_epsilon_psne(g, action({0, 0}), -1e-3), InvalidInput);
}

TEST(EpsilonPsne, MonotoneInEpsilonAndZeroPayoffAtExactEquilibria) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  GraphicalGame g(3, 1, 1.0);
  g.set_block(0, 1, scalar(0.4));
  g.set_block(1, 2, scalar(-0.7));
  g.set_block(2, 0, scalar(0.2));
  for (int rep = 0; rep < 500; ++rep) {
    const JointAction x = action({u(rng), u(rng), u(rng)});
    bool prev = false;
    for (double eps : {0.0, 0.01, 0.1, 0.3, 1.0}) {
      const bool now = is_epsilon_psne(g, x, eps);
      EXPECT_GE(now, prev);
      prev = now;
    }
    if (is_epsilon_psne(g, x, 0.0)) {
      for (int i = 0; i < 3; ++i) EXPECT_EQ(payoff(g, i, x), 0.0);
    }
  }
}

TEST(InNeighbors, Definition) {
  GraphicalGame empty(3, 1, 1.0);
  EXPECT_TRUE(in_neighbors(empty, 0).empty());
  GraphicalGame g(3, 1, 1.0);
  g.set_block(0, 1, scalar(1));
  g.set_block(0, 2, scalar(1));
  EXPECT_EQ(in_neighbors(g, 0), (std::vector<int>{1, 2}));
  EXPECT_TRUE(in_neighbors(g, 1).empty());
  EXPECT_EQ(g.non_neighbors(1), (std::vector<int>{0, 2}));
}

TEST(Game, InvariantsOnBlocks) {
  GraphicalGame g(3, 2, 1.0);
  EXPECT_THROW(g.set_block(1, 1, Matrix::Ones(2, 2)), InvalidInput);
  EXPECT_THROW(g.set_block(0, 1, Matrix::Ones(3, 2)), InvalidInput);
  EXPECT_THROW(g.set_block(0, 5, Matrix::Ones(2, 2)), InvalidInput);
  Matrix bad = Matrix::Ones(2, 2);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(g.set_block(0, 1, bad), InvalidInput);
  g.set_block(0, 1, Matrix::Ones(2, 2));
  EXPECT_TRUE(g.has_block(0, 1));
  g.set_block(0, 1, Matrix::Zero(2, 2));
  EXPECT_FALSE(g.has_block(0, 1));
  EXPECT_THROW(GraphicalGame(0, 1, 1.0), InvalidInput);
  EXPECT_THROW(GraphicalGame(2, 1, 0.0), InvalidInput);
}

TEST(Assemble, PlacementAndRoundTrip) {
  GraphicalGame empty(2, 2, 1.0);
  EXPECT_EQ(assemble(empty), Matrix::Zero(4, 4));
  const auto g = testutil::two_player(0.5);
  Matrix expected(2, 2);
  expected << 0, 0.5, 0, 0;
  EXPECT_EQ(assemble(g), expected);

  GraphicalGame h(3, 2, 1.0);
  Matrix w(2, 2);
  w << 1, 2, 3, 4;
  h.set_block(2, 0, w);
  h.set_block(1, 2, -w);
  const Matrix a = assemble(h);
  for (const auto& [e, b] : h.blocks()) EXPECT_EQ(Matrix(a.block(2 * e.first, 2 * e.second, 2, 2)), b);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(Matrix(a.block(2 * i, 2 * i, 2, 2)), Matrix::Zero(2, 2));
}
