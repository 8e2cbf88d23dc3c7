#pragma once

// Random sparse games with a planted equilibrium direction.
//
// Every player gets exactly min(d, n-1) in-neighbours, block entries are
// i.i.d. uniform on [weight_low, weight_high], and the whole game is divided
// by the spectral radius of the assembled matrix. Because the matrix is
// entrywise nonnegative, its spectral radius is a real eigenvalue with a
// nonnegative eigenvector; after rescaling that eigenvalue is 1 and
// null(I - W) is nontrivial.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gamerecover/diagnostics.hpp"
#include "gamerecover/equilibrium_sampler.hpp"
#include "gamerecover/error.hpp"
#include "gamerecover/game_model.hpp"
#include "gamerecover/seeding.hpp"

namespace gamerecover {

struct GeneratorConfig {
  int n = 10;
  int k = 2;
  int d = 3;
  double weight_low = 0.3;
  double weight_high = 0.7;
  std::uint64_t seed = 0;
  double target_equilibrium_scale = 0.8;
  double budget = 1.0;

  void validate() const {
    detail::require(n >= 2, "generator: n must be at least 2");
    detail::require(k >= 1, "generator: k must be positive");
    detail::require(d >= 1 && d <= n - 1, "generator: d must lie in [1, n-1]");
    detail::require(weight_low > 0.0 && weight_low <= weight_high, "generator: need 0 < weight_low <= weight_high");
    detail::require(target_equilibrium_scale > 0.0 && target_equilibrium_scale <= 1.0,
                    "generator: target_equilibrium_scale must lie in (0, 1]");
    detail::require(budget > 0.0, "generator: budget must be positive");
  }
};

struct SpectralRadius {
  double value = 0.0;
  int iterations = 0;
  bool power_converged = false;
};

/// Spectral radius of an entrywise nonnegative square matrix.
///
/// Power iteration runs on W + I from the all-ones vector: for nonnegative W
/// the shifted matrix has rho(W) + 1 as its unique eigenvalue of largest
/// modulus, so the iteration converges even when W itself is periodic. If it
/// fails to settle within max_iter the dense eigenvalue solver decides.
inline SpectralRadius spectral_radius_nonnegative(const Matrix& w, double tol = 1e-12, int max_iter = 10000) {
  detail::require(w.rows() == w.cols(), "spectral_radius: matrix must be square");
  SpectralRadius out;
  if (w.rows() == 0) return out;
  Vector v = Vector::Ones(w.rows()) / std::sqrt(static_cast<double>(w.rows()));
  double estimate = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vector next = w * v + v;
    const double norm = next.norm();
    next /= norm;
    const double change = std::abs(norm - estimate);
    estimate = norm;
    v = next;
    out.iterations = it;
    if (it > 1 && change <= tol * norm && (w * v + v - norm * v).norm() <= 10.0 * tol * norm) {
      out.value = v.dot(w * v + v) - 1.0;
      out.power_converged = true;
      return out;
    }
  }
  Eigen::EigenSolver<Matrix> eig(w, false);
  out.value = eig.eigenvalues().cwiseAbs().maxCoeff();
  return out;
}

inline GraphicalGame generate(const GeneratorConfig& config) {
  config.validate();
  Engine rng = make_engine(config.seed);
  std::uniform_real_distribution<double> weight(config.weight_low, config.weight_high);
  const int degree = std::min(config.d, config.n - 1);

  GraphicalGame game(config.n, config.k, config.budget);
  for (int i = 0; i < config.n; ++i) {
    const std::vector<int> candidates = other_players(config.n, i);
    std::vector<int> chosen;
    std::sample(candidates.begin(), candidates.end(), std::back_inserter(chosen), degree, rng);
    for (int j : chosen) {
      Matrix b(config.k, config.k);
      for (Eigen::Index r = 0; r < b.rows(); ++r)
        for (Eigen::Index c = 0; c < b.cols(); ++c) b(r, c) = weight(rng);
      game.set_block(i, j, b);
    }
  }
  const SpectralRadius rho = spectral_radius_nonnegative(assemble(game));
  if (!(rho.value > 0.0) || !std::isfinite(rho.value))
    throw GenerationError("assembled game has zero spectral radius; cannot plant an equilibrium");
  game.scale_blocks(1.0 / rho.value);
  return game;
}

struct AssumptionReport {
  double alpha = 1.0;  ///< minimum incoherence margin over players
  double c_min = 0.0;  ///< minimum lambda_min(H_{S S}) over players, clipped at 0
  double w_max = 0.0;
  double w_min = 0.0;
  bool budget_ok = true;
  bool zero_utility_ok = true;
  bool c_min_clipped = false;
  bool singular = false;
  std::vector<double> alpha_per_player;
  std::vector<std::optional<double>> c_min_per_player;
};

/// Largest / smallest nonzero absolute block entry over the whole game.
inline std::pair<double, double> weight_extremes(const GraphicalGame& game) {
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& [e, b] : game.blocks())
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      for (Eigen::Index c = 0; c < b.cols(); ++c) {
        const double a = std::abs(b(r, c));
        hi = std::max(hi, a);
        if (a > 0.0) lo = std::min(lo, a);
      }
  return {hi, std::isfinite(lo) ? lo : 0.0};
}

/// Population-level checks of the budget, zero-utility and incoherence
/// conditions from a batch of exact equilibria.
inline AssumptionReport check_assumptions(const GraphicalGame& game, const SampleBatch& exact_equilibria,
                                          double sigma) {
  exact_equilibria.validate();
  detail::require(sigma > 0.0, "check_assumptions: sigma must be positive");
  detail::require(exact_equilibria.n == game.n() && exact_equilibria.k == game.k(),
                  "check_assumptions: batch does not match game");
  AssumptionReport report;
  std::tie(report.w_max, report.w_min) = weight_extremes(game);

  for (Eigen::Index t = 0; t < exact_equilibria.samples(); ++t) {
    const JointAction x = exact_equilibria.data.row(t).transpose();
    for (int i = 0; i < game.n(); ++i) {
      if (player_action(x, game.k(), i).norm() > game.budget()) report.budget_ok = false;
      if (-payoff(game, i, x) > kEquilibriumResidualTolerance) report.zero_utility_ok = false;
    }
  }

  double c_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < game.n(); ++i) {
    const auto inc =
        sample_incoherence(population_h(exact_equilibria, i, sigma), game.n(), game.k(), i, game.in_neighbors(i));
    report.alpha = std::min(report.alpha, inc.alpha);
    report.singular = report.singular || inc.singular;
    report.alpha_per_player.push_back(inc.alpha);
    std::optional<double> c = inc.c_min;
    if (c && *c < 0.0) {
      report.c_min_clipped = true;
      c = 0.0;
    }
    if (inc.singular) c = 0.0;
    report.c_min_per_player.push_back(c);
    if (c) c_min = std::min(c_min, *c);
  }
  report.c_min = std::isfinite(c_min) ? c_min : 0.0;
  return report;
}

}  // namespace gamerecover
