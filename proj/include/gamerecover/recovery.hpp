#pragma once

// From fitted blocks back to a game: recovered edge set, structure scores,
// parameter error on the true support, the delta / epsilon radii of the
// recovery guarantee, and an empirical check that equilibria of the
// estimated game are epsilon-equilibria of the true one.
//
// The check rests on the pointwise chain, for x an exact equilibrium of the
// estimated game (x_i = sum_j What_ij x_j):
//   |u_i(x)| = || sum_j (What_ij - W*_ij) x_j || <= sum_j ||What_ij - W*_ij||_F ||x_j||.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "gamerecover/equilibrium_sampler.hpp"
#include "gamerecover/error.hpp"
#include "gamerecover/game_generator.hpp"
#include "gamerecover/game_model.hpp"
#include "gamerecover/group_lasso.hpp"

namespace gamerecover {

struct RecoveredStructure {
  EdgeSet edges;
  std::vector<int> unconverged;  ///< players whose fit did not converge or failed
};

/// Edge (i, j) is present iff ||What_ij||_F > 0. The proximal step yields
/// exact zeros, so no threshold is applied.
inline RecoveredStructure recover_structure(const std::map<int, PlayerFit>& fits) {
  RecoveredStructure out;
  for (const auto& [i, pf] : fits) {
    if (!pf.fit) {
      out.unconverged.push_back(i);
      continue;
    }
    if (!pf.fit->converged) out.unconverged.push_back(i);
    for (int j : pf.fit->active_blocks) out.edges.insert({i, j});
  }
  return out;
}

struct StructureScore {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  bool exact = true;
};

/// Empty estimated set has precision 1; empty true set has recall 1.
inline StructureScore score_structure(const EdgeSet& truth, const EdgeSet& estimate) {
  std::size_t hits = 0;
  for (const auto& e : estimate) hits += truth.count(e);
  StructureScore s;
  s.precision = estimate.empty() ? 1.0 : static_cast<double>(hits) / estimate.size();
  s.recall = truth.empty() ? 1.0 : static_cast<double>(hits) / truth.size();
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  s.exact = truth == estimate;
  return s;
}

struct DeltaBound {
  std::array<double, 5> terms{};
  double value = 0.0;
};

/// Parameter-error radius of the recovery guarantee. The five terms are, with
/// f = k sqrt(k s) 2 / C_min and g = alpha lambda / (24 (1 - alpha)):
///   f g,   f sigma^2 sqrt(k) W_max,   2 f g,   2 f g,   f lambda / 2.
/// (The second and third terms come from distributing sigma^2 sqrt(k) W_max
/// over the bracket that carries it.)
inline DeltaBound delta_bound(int k, int support, double c_min, double alpha, double lambda, double sigma,
                              double w_max) {
  detail::require(k >= 1 && support >= 0, "delta_bound: bad sizes");
  detail::require(c_min > 0.0, "delta_bound: c_min must be positive");
  detail::require(alpha > 0.0 && alpha < 1.0, "delta_bound: alpha must lie in (0, 1)");
  detail::require(lambda >= 0.0 && sigma >= 0.0 && w_max >= 0.0, "delta_bound: lambda, sigma, w_max must be >= 0");
  const double kd = k;
  const double f = kd * std::sqrt(kd * support) * 2.0 / c_min;
  const double g = alpha * lambda / (24.0 * (1.0 - alpha));
  DeltaBound out;
  out.terms = {f * g, f * sigma * sigma * std::sqrt(kd) * w_max, 2.0 * f * g, 2.0 * f * g, f * lambda / 2.0};
  for (double t : out.terms) out.value += t;
  return out;
}

inline double epsilon_bound(int support, double delta, double budget) {
  detail::require(support >= 0 && delta >= 0.0 && budget >= 0.0, "epsilon_bound: inputs must be nonnegative");
  return support * delta * budget;
}

/// max_{j in S_i} ||What_ij - W*_ij||_F per player (0 for an empty support,
/// NaN for a failed fit).
inline std::vector<double> param_error(const std::map<int, PlayerFit>& fits, const GraphicalGame& game) {
  std::vector<double> out(static_cast<std::size_t>(game.n()), 0.0);
  for (int i = 0; i < game.n(); ++i) {
    auto it = fits.find(i);
    if (it == fits.end() || !it->second.fit) {
      out[static_cast<std::size_t>(i)] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double worst = 0.0;
    for (int j : game.in_neighbors(i)) worst = std::max(worst, (it->second.fit->block(j) - game.block(i, j)).norm());
    out[static_cast<std::size_t>(i)] = worst;
  }
  return out;
}

/// Game whose blocks are the active fitted blocks. Players listed in `skip`
/// contribute no blocks. The budget is taken from `like`.
inline GraphicalGame estimated_game(const GraphicalGame& like, const std::map<int, PlayerFit>& fits,
                                    const std::vector<int>& skip = {}) {
  GraphicalGame est(like.n(), like.k(), like.budget());
  for (const auto& [i, pf] : fits) {
    if (!pf.fit || std::find(skip.begin(), skip.end(), i) != skip.end()) continue;
    for (int j : pf.fit->active_blocks) est.set_block(i, j, pf.fit->block(j));
  }
  return est;
}

/// sum_j ||What_ij - W*_ij||_F * budget, maximised over players.
inline double chain_epsilon(const GraphicalGame& truth, const GraphicalGame& est, const std::vector<int>& skip = {}) {
  double worst = 0.0;
  for (int i = 0; i < truth.n(); ++i) {
    if (std::find(skip.begin(), skip.end(), i) != skip.end()) continue;
    double s = 0.0;
    for (int j = 0; j < truth.n(); ++j)
      if (j != i) s += (est.block(i, j) - truth.block(i, j)).norm();
    worst = std::max(worst, s * truth.budget());
  }
  return worst;
}

struct ContainmentResult {
  double rate = 1.0;
  int points = 0;
  bool zero_equilibrium_only = false;
  double max_violation = 0.0;  ///< max over points/players of ||residual under truth||
  /// min over points/players of (sum_j ||dW_ij|| ||x_j||) - |u_i(x)|; >= 0 when the chain holds
  double chain_slack = std::numeric_limits<double>::infinity();
};

/// Samples exact equilibria of `est` and measures how many are
/// eps-equilibria of `truth`. Players in `skip` are left out of the check.
/// Sampled points are equilibria only up to kEquilibriumResidualTolerance, so
/// the same slack is added to eps.
inline ContainmentResult verify_containment(const GraphicalGame& truth, const GraphicalGame& est, double eps,
                                            int n_points, std::uint64_t seed, const std::vector<int>& skip = {}) {
  detail::require(n_points >= 1, "verify_containment: n_points must be positive");
  detail::require(eps >= 0.0, "verify_containment: eps must be nonnegative");
  detail::require(truth.n() == est.n() && truth.k() == est.k(), "verify_containment: games differ in shape");
  const int k = truth.k();
  ContainmentResult out;
  out.points = n_points;
  const Matrix basis = equilibrium_basis(est);
  Matrix points;
  if (basis.cols() == 0) {
    out.zero_equilibrium_only = true;
    points = Matrix::Zero(n_points, static_cast<Eigen::Index>(truth.dim()));
  } else {
    points = sample_equilibria(est, basis, n_points, seed, 1.0).data;
  }
  int inside = 0;
  for (Eigen::Index t = 0; t < points.rows(); ++t) {
    const JointAction x = points.row(t).transpose();
    bool ok = true;
    for (int i = 0; i < truth.n(); ++i) {
      if (std::find(skip.begin(), skip.end(), i) != skip.end()) continue;
      if (player_action(x, k, i).norm() > truth.budget()) ok = false;
      const double violation = -payoff(truth, i, x);
      out.max_violation = std::max(out.max_violation, violation);
      if (violation > eps + kEquilibriumResidualTolerance) ok = false;
      double chain = 0.0;
      for (int j = 0; j < truth.n(); ++j)
        if (j != i) chain += (est.block(i, j) - truth.block(i, j)).norm() * player_action(x, k, j).norm();
      out.chain_slack = std::min(out.chain_slack, chain - violation);
    }
    if (ok) ++inside;
  }
  out.rate = static_cast<double>(inside) / n_points;
  return out;
}

struct RecoveryReport {
  EdgeSet edges_true;
  EdgeSet edges_est;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  bool exact_structure = true;
  double param_error_binf = 0.0;
  std::vector<double> param_error_per_player;
  std::optional<double> delta;
  std::optional<double> epsilon;
  std::vector<std::optional<double>> epsilon_per_player;
  double chain_epsilon = 0.0;
  ContainmentResult containment;
  std::vector<int> unconverged;
  double kkt_residual_max = 0.0;
};

struct EvaluateOptions {
  int containment_points = 20;
  std::uint64_t seed = 0;
  /// Population quantities; when present (with alpha in (0,1), sigma > 0)
  /// delta and epsilon are reported.
  std::optional<AssumptionReport> assumptions;
  double sigma = 0.0;
};

inline RecoveryReport evaluate(const GraphicalGame& truth, const std::map<int, PlayerFit>& fits,
                               const EvaluateOptions& options) {
  RecoveryReport r;
  const auto structure = recover_structure(fits);
  r.edges_true = truth.edges();
  r.edges_est = structure.edges;
  r.unconverged = structure.unconverged;
  const auto score = score_structure(r.edges_true, r.edges_est);
  r.precision = score.precision;
  r.recall = score.recall;
  r.f1 = score.f1;
  r.exact_structure = score.exact;

  r.param_error_per_player = param_error(fits, truth);
  r.param_error_binf = 0.0;
  for (double e : r.param_error_per_player)
    r.param_error_binf = std::isnan(e) ? e : std::max(r.param_error_binf, e);
  for (const auto& [i, pf] : fits)
    if (pf.fit) r.kkt_residual_max = std::max(r.kkt_residual_max, pf.fit->kkt_residual);

  if (options.assumptions && options.sigma > 0.0) {
    const auto& a = *options.assumptions;
    r.epsilon_per_player.assign(static_cast<std::size_t>(truth.n()), std::nullopt);
    if (a.alpha > 0.0 && a.alpha < 1.0) {
      double delta = 0.0;
      double eps = 0.0;
      for (int i = 0; i < truth.n(); ++i) {
        const auto& c = a.c_min_per_player.at(static_cast<std::size_t>(i));
        auto it = fits.find(i);
        if (!c || *c <= 0.0 || it == fits.end() || !it->second.fit) continue;
        const int s = static_cast<int>(truth.in_neighbors(i).size());
        const double d = delta_bound(truth.k(), s, *c, a.alpha, it->second.fit->lambda, options.sigma, a.w_max).value;
        const double e = epsilon_bound(s, d, truth.budget());
        r.epsilon_per_player[static_cast<std::size_t>(i)] = e;
        delta = std::max(delta, d);
        eps = std::max(eps, e);
      }
      r.delta = delta;
      r.epsilon = eps;
    }
  }

  const GraphicalGame est = estimated_game(truth, fits, structure.unconverged);
  r.chain_epsilon = chain_epsilon(truth, est, structure.unconverged);
  r.containment = verify_containment(truth, est, r.chain_epsilon, options.containment_points, options.seed,
                                     structure.unconverged);
  return r;
}

}  // namespace gamerecover
