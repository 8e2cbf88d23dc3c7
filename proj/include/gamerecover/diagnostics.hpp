#pragma once

// Second-moment matrices of the regression for player i and the quantities
// the support-recovery argument depends on:
//
//   H_hat = (1/T) sum_t x_{-i} x_{-i}^T                     (empirical)
//   H     = (1/T) sum_t (x*_{-i} x*_{-i}^T + sigma^2 I)      (population)
//   C_min = lambda_min(H_{S S})
//   alpha = 1 - || H_{S^c S} H_{S S}^{-1} ||_{B,inf,1}        (k rows per block)
//
// x_{-i} stacks the actions of all players except i in ascending order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gamerecover/block_norms.hpp"
#include "gamerecover/equilibrium_sampler.hpp"
#include "gamerecover/error.hpp"
#include "gamerecover/game_model.hpp"
#include "gamerecover/seeding.hpp"

namespace gamerecover {

/// Players other than i, ascending.
inline std::vector<int> other_players(int n, int i) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  for (int j = 0; j < n; ++j)
    if (j != i) out.push_back(j);
  return out;
}

/// Block position of player j inside x_{-i}.
inline int position_without(int i, int j) { return j < i ? j : j - 1; }

/// T x (n-1)k: the batch with player i's k columns removed.
inline Matrix drop_player(const Matrix& data, int n, int k, int i) {
  const Eigen::Index left = static_cast<Eigen::Index>(i) * k;
  const Eigen::Index right = static_cast<Eigen::Index>(n - 1 - i) * k;
  Matrix out(data.rows(), left + right);
  out.leftCols(left) = data.leftCols(left);
  out.rightCols(right) = data.rightCols(right);
  return out;
}

/// Row/column indices inside x_{-i} covered by the given players.
inline std::vector<Eigen::Index> coordinates_of(const std::vector<int>& players, int i, int k) {
  std::vector<Eigen::Index> idx;
  idx.reserve(players.size() * static_cast<std::size_t>(k));
  for (int j : players)
    for (int c = 0; c < k; ++c) idx.push_back(static_cast<Eigen::Index>(position_without(i, j)) * k + c);
  return idx;
}

inline Matrix restrict(const Matrix& h, const std::vector<Eigen::Index>& rows, const std::vector<Eigen::Index>& cols) {
  return h(rows, cols);
}

inline Matrix empirical_h(const SampleBatch& batch, int i) {
  batch.validate();
  detail::require(i >= 0 && i < batch.n, "empirical_h: player out of range");
  const Matrix z = drop_player(batch.data, batch.n, batch.k, i);
  Matrix h = Matrix::Zero(z.cols(), z.cols());
  h.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose());
  h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
  return h / static_cast<double>(batch.samples());
}

inline Matrix population_h(const SampleBatch& exact, int i, double sigma) {
  detail::require(sigma > 0.0, "population_h: sigma must be positive");
  Matrix h = empirical_h(exact, i);
  h.diagonal().array() += sigma * sigma;
  return h;
}

struct IncoherenceResult {
  double norm = 0.0;  ///< ||H_{S^c S} H_{S S}^{-1}||_{B,inf,1}; +inf when singular
  double alpha = 1.0;
  bool singular = false;
  std::optional<double> c_min;  ///< lambda_min(H_{S S}); empty when S is empty
  std::optional<double> condition;
};

/// Incoherence of the (n-1)k square matrix h for player i with in-neighbours
/// `support`. An empty S^c gives norm 0 and alpha 1.
inline IncoherenceResult sample_incoherence(const Matrix& h, int n, int k, int i, const std::vector<int>& support) {
  detail::require(h.rows() == static_cast<Eigen::Index>(n - 1) * k && h.cols() == h.rows(),
                  "sample_incoherence: matrix must be (n-1)k square");
  IncoherenceResult out;
  if (support.empty()) return out;

  std::vector<int> complement;
  for (int j : other_players(n, i))
    if (std::find(support.begin(), support.end(), j) == support.end()) complement.push_back(j);

  const auto s_idx = coordinates_of(support, i, k);
  const Matrix hss = restrict(h, s_idx, s_idx);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(hss, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(eig.eigenvalues().size() - 1);
  out.c_min = lo;
  out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();

  Eigen::LLT<Matrix> llt(hss);
  if (llt.info() != Eigen::Success || !(lo > 1e-14 * std::max(hi, 1.0))) {
    out.singular = true;
    out.norm = std::numeric_limits<double>::infinity();
    out.alpha = -std::numeric_limits<double>::infinity();
    return out;
  }
  if (complement.empty()) return out;

  const auto c_idx = coordinates_of(complement, i, k);
  const Matrix hcs = restrict(h, c_idx, s_idx);
  // H_{S^c S} H_{S S}^{-1} = (H_{S S}^{-1} H_{S S^c})^T
  const Matrix m = llt.solve(hcs.transpose()).transpose();
  out.norm = norm_b_inf_1(RowBlockMatrix(m, std::vector<int>(complement.size(), k)));
  out.alpha = 1.0 - out.norm;
  return out;
}

/// Empirical noise cross-moments bounded in the recovery argument, for
/// player i with true weights from `game`.
struct NoiseMoments {
  double xe_support_w = 0.0;       ///< ||E[x_{-i} e_{-i}^T]_{S S} W*_{S.}||_{inf,2}
  double xe_own_support = 0.0;     ///< ||E[(x_{-i})_S e_i^T]||_{inf,2}
  double xe_nonsupport_w = 0.0;    ///< ||E[x_{-i} e_{-i}^T]_{S^c S} W*_{S.}||_{B,inf,F}
  double xe_own_nonsupport = 0.0;  ///< ||E[(x_{-i})_{S^c} e_i^T]||_{B,inf,F}
};

/// Stacked W_{i.} restricted to rows S: block j is W_ij^T.
inline Matrix stacked_weights(const GraphicalGame& game, int i, const std::vector<int>& players) {
  const int k = game.k();
  Matrix w(static_cast<Eigen::Index>(players.size()) * k, k);
  for (std::size_t b = 0; b < players.size(); ++b)
    w.middleRows(static_cast<Eigen::Index>(b) * k, k) = game.block(i, players[b]).transpose();
  return w;
}

inline NoiseMoments noise_moments(const GraphicalGame& game, const SampleBatch& exact, const SampleBatch& perturbed,
                                  int i) {
  detail::require(exact.data.rows() == perturbed.data.rows() && exact.data.cols() == perturbed.data.cols(),
                  "noise_moments: batches differ in shape");
  const int n = game.n();
  const int k = game.k();
  const double t = static_cast<double>(perturbed.samples());
  const Matrix e = perturbed.data - exact.data;
  const Matrix xm = drop_player(perturbed.data, n, k, i);
  const Matrix em = drop_player(e, n, k, i);
  const Matrix ei = e.middleCols(static_cast<Eigen::Index>(i) * k, k);
  const Matrix xe = xm.transpose() * em / t;
  const Matrix xei = xm.transpose() * ei / t;

  const auto support = game.in_neighbors(i);
  const auto complement = game.non_neighbors(i);
  NoiseMoments out;
  if (support.empty()) {
    const auto c_idx = coordinates_of(complement, i, k);
    if (!complement.empty())
      out.xe_own_nonsupport = norm_b_inf_f(RowBlockMatrix(xei(c_idx, Eigen::all), std::vector<int>(complement.size(), k)));
    return out;
  }
  const auto s_idx = coordinates_of(support, i, k);
  const Matrix ws = stacked_weights(game, i, support);
  out.xe_support_w = norm_inf_2(restrict(xe, s_idx, s_idx) * ws);
  out.xe_own_support = norm_inf_2(xei(s_idx, Eigen::all));
  if (!complement.empty()) {
    const auto c_idx = coordinates_of(complement, i, k);
    const std::vector<int> part(complement.size(), k);
    out.xe_nonsupport_w = norm_b_inf_f(RowBlockMatrix(restrict(xe, c_idx, s_idx) * ws, part));
    out.xe_own_nonsupport = norm_b_inf_f(RowBlockMatrix(xei(c_idx, Eigen::all), part));
  }
  return out;
}

struct PlayerDiagnostics {
  int player = 0;
  std::optional<double> c_min_empirical;
  double alpha_empirical = 1.0;
  double m_norm = 0.0;
  bool singular = false;
  std::optional<double> condition;
  std::optional<NoiseMoments> noise;
};

struct DiagnosticsReport {
  double sigma = 0.0;
  long samples = 0;
  std::vector<PlayerDiagnostics> players;

  /// Minimum over players with a nonempty support; +inf when there are none.
  double min_c_min() const {
    double out = std::numeric_limits<double>::infinity();
    for (const auto& p : players)
      if (p.c_min_empirical) out = std::min(out, *p.c_min_empirical);
    return out;
  }
  double min_alpha() const {
    double out = 1.0;
    for (const auto& p : players) out = std::min(out, p.alpha_empirical);
    return out;
  }
};

/// Empirical diagnostics of a perturbed batch against the structure of `game`.
/// When the matching exact batch is supplied the noise moments are included.
inline DiagnosticsReport diagnose(const GraphicalGame& game, const SampleBatch& batch, double sigma,
                                  const SampleBatch* exact = nullptr) {
  batch.validate();
  detail::require(batch.n == game.n() && batch.k == game.k(), "diagnose: batch does not match game");
  DiagnosticsReport report;
  report.sigma = sigma;
  report.samples = static_cast<long>(batch.samples());
  for (int i = 0; i < game.n(); ++i) {
    const auto inc = sample_incoherence(empirical_h(batch, i), game.n(), game.k(), i, game.in_neighbors(i));
    PlayerDiagnostics p;
    p.player = i;
    p.c_min_empirical = inc.c_min;
    p.alpha_empirical = inc.alpha;
    p.m_norm = inc.norm;
    p.singular = inc.singular;
    p.condition = inc.condition;
    if (exact != nullptr) p.noise = noise_moments(game, *exact, batch, i);
    report.players.push_back(p);
  }
  return report;
}

/// Fraction of `trials` fresh batches in which every player with a nonempty
/// support has lambda_min(H_hat_{S S}) >= sigma^2 / 2.
inline double check_lemma1(const GraphicalGame& game, double sigma, int samples, int trials, std::uint64_t seed,
                           double scale = 1.0, NoiseFamily family = NoiseFamily::gaussian) {
  detail::require(trials >= 1, "check_lemma1: trials must be positive");
  detail::require(sigma > 0.0, "check_lemma1: sigma must be positive");
  const Matrix basis = equilibrium_basis(game);
  int successes = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(trial)});
    SampleBatch exact;
    if (basis.cols() == 0) {
      exact.n = game.n();
      exact.k = game.k();
      exact.data = Matrix::Zero(samples, static_cast<Eigen::Index>(game.dim()));
    } else {
      exact = sample_equilibria(game, basis, samples, derive_seed(s, {stream::equilibria}), scale);
    }
    const SampleBatch batch = perturb(exact, {family, sigma}, derive_seed(s, {stream::noise}));
    bool ok = true;
    for (int i = 0; i < game.n() && ok; ++i) {
      const auto support = game.in_neighbors(i);
      if (support.empty()) continue;
      const auto idx = coordinates_of(support, i, game.k());
      const Matrix hss = restrict(empirical_h(batch, i), idx, idx);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(hss, Eigen::EigenvaluesOnly);
      ok = eig.eigenvalues()(0) >= sigma * sigma / 2.0;
    }
    if (ok) ++successes;
  }
  return static_cast<double>(successes) / trials;
}

enum class SubexpFamily { square, product };

struct MgfRow {
  double lambda = 0.0;
  double empirical = 0.0;  ///< largest trial estimate of the MGF
  double bound = 0.0;      ///< exp(16 lambda^2)
  double margin = 0.0;     ///< bound - empirical
};

/// Empirical moment generating function of y^2 - 1 (square) or p*q (product)
/// for standard normal draws, compared with exp(16 lambda^2). Each trial uses
/// `draws` samples; the reported value is the largest trial estimate.
inline std::vector<MgfRow> check_subexponential(SubexpFamily family, const std::vector<double>& lambda_grid,
                                                long draws, int trials, std::uint64_t seed) {
  detail::require(draws >= 1 && trials >= 1, "check_subexponential: draws and trials must be positive");
  for (double l : lambda_grid)
    detail::require(std::abs(l) <= 0.25, "check_subexponential: |lambda| must be at most 1/4");
  std::vector<MgfRow> rows;
  rows.reserve(lambda_grid.size());
  for (double l : lambda_grid) rows.push_back({l, -std::numeric_limits<double>::infinity(), std::exp(16.0 * l * l), 0.0});

  std::vector<double> sums(lambda_grid.size());
  for (int trial = 0; trial < trials; ++trial) {
    Engine rng = make_engine(derive_seed(seed, {static_cast<std::uint64_t>(trial)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::fill(sums.begin(), sums.end(), 0.0);
    for (long d = 0; d < draws; ++d) {
      double v = 0.0;
      if (family == SubexpFamily::square) {
        const double y = normal(rng);
        v = y * y - 1.0;
      } else {
        const double p = normal(rng);
        const double q = normal(rng);
        v = p * q;
      }
      for (std::size_t g = 0; g < lambda_grid.size(); ++g) sums[g] += std::exp(lambda_grid[g] * v);
    }
    for (std::size_t g = 0; g < lambda_grid.size(); ++g)
      rows[g].empirical = std::max(rows[g].empirical, sums[g] / static_cast<double>(draws));
  }
  for (auto& r : rows) r.margin = r.bound - r.empirical;
  return rows;
}

}  // namespace gamerecover
