#pragma once

// Per-player block-regularised regression
//
//   min_W  (1/T) sum_t || x_i^t - sum_{j != i} W_ij x_j^t ||_2^2 + lambda sum_{j != i} ||W_ij||_F
//
// solved by (accelerated) proximal gradient with the closed-form block
// soft-threshold as proximal map. Unknowns are stacked as a (n-1)k x k
// row-block matrix whose block for player j is W_ij^T, so that with
// Z = [x_{-i}^t]_t the residual is Y - Z B. Writing H = Z^T Z / T and
// C = Z^T Y / T the smooth part is tr(B^T H B) - 2 tr(B^T C) + const and
// its gradient is 2 (H B - C).

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "gamerecover/block_norms.hpp"
#include "gamerecover/diagnostics.hpp"
#include "gamerecover/equilibrium_sampler.hpp"
#include "gamerecover/error.hpp"
#include "gamerecover/game_model.hpp"

namespace gamerecover {

enum class StepRule { fixed, backtracking };

struct SolverConfig {
  double lambda = 0.0;
  StepRule step_rule = StepRule::fixed;
  double tol_kkt = 1e-8;
  double tol_rel_obj = 1e-10;
  int max_iter = 50000;
  bool acceleration = true;
  /// Consecutive iterations with relative objective change <= tol_rel_obj
  /// after which the solver gives up as stalled.
  int stall_window = 1000;

  void validate() const {
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "solver: lambda must be nonnegative");
    detail::require(tol_kkt > 0.0 && tol_rel_obj >= 0.0, "solver: tolerances must be positive");
    detail::require(max_iter >= 1 && stall_window >= 1, "solver: max_iter and stall_window must be positive");
  }
};

enum class StopReason { kkt, stalled, max_iter };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kkt: return "kkt";
    case StopReason::stalled: return "stalled";
    case StopReason::max_iter: return "max_iter";
  }
  return "?";
}

struct FitResult {
  int player = 0;
  int n = 0;
  int k = 0;
  double lambda = 0.0;
  RowBlockMatrix w_hat;  ///< block b holds W_ij^T for j = other_players(n, player)[b]
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::max_iter;
  std::vector<int> active_blocks;  ///< players j with W_ij != 0, ascending

  /// Estimated W_ij in game orientation (k x k).
  Matrix block(int j) const {
    detail::require(j != player && j >= 0 && j < n, "FitResult::block: bad player index");
    return w_hat.block(position_without(player, j)).transpose();
  }
};

/// Sufficient statistics of the regression for one player.
struct RegressionProblem {
  int n = 0;
  int k = 0;
  int player = 0;
  long samples = 0;
  Matrix gram;        ///< H = Z^T Z / T, (n-1)k square
  Matrix cross;       ///< C = Z^T Y / T, (n-1)k x k
  double target_sq = 0.0;  ///< (1/T) sum_t ||x_i^t||^2

  static RegressionProblem from_batch(const SampleBatch& batch, int i) {
    batch.validate();
    detail::require(i >= 0 && i < batch.n, "regression: player out of range");
    detail::require(batch.n >= 2, "regression: need at least two players");
    detail::require(batch.data.allFinite(), "regression: batch contains non-finite values");
    RegressionProblem p;
    p.n = batch.n;
    p.k = batch.k;
    p.player = i;
    p.samples = static_cast<long>(batch.samples());
    const double t = static_cast<double>(p.samples);
    const Matrix z = drop_player(batch.data, batch.n, batch.k, i);
    const auto y = batch.data.middleCols(static_cast<Eigen::Index>(i) * batch.k, batch.k);
    p.gram = empirical_h(batch, i);
    p.cross = z.transpose() * y / t;
    p.target_sq = y.squaredNorm() / t;
    return p;
  }

  int blocks() const noexcept { return n - 1; }

  double loss(const Matrix& b) const {
    return target_sq - 2.0 * (b.array() * cross.array()).sum() + (b.array() * (gram * b).array()).sum();
  }

  Matrix gradient(const Matrix& b) const { return 2.0 * (gram * b - cross); }

  double penalty(const Matrix& b, double lambda) const {
    double s = 0.0;
    for (int j = 0; j < blocks(); ++j) s += b.middleRows(static_cast<Eigen::Index>(j) * k, k).norm();
    return lambda * s;
  }

  double objective(const Matrix& b, double lambda) const { return loss(b) + penalty(b, lambda); }

  /// Smallest lambda for which W = 0 is optimal: max_j ||(2/T) sum_t x_i x_j^T||_F.
  double lambda_max() const {
    double out = 0.0;
    for (int j = 0; j < blocks(); ++j)
      out = std::max(out, 2.0 * cross.middleRows(static_cast<Eigen::Index>(j) * k, k).norm());
    return out;
  }
};

/// Proximal map of tau ||.||_F: zero when ||V||_F <= tau, else (1 - tau/||V||_F) V.
inline Matrix block_soft_threshold(const Matrix& v, double tau) {
  detail::require(tau >= 0.0, "block_soft_threshold: tau must be nonnegative");
  const double norm = v.norm();
  if (norm <= tau) return Matrix::Zero(v.rows(), v.cols());
  return (1.0 - tau / norm) * v;
}

/// Worst blockwise violation of the stationarity condition 0 in grad + lambda * dR.
inline double kkt_residual(const RegressionProblem& problem, const Matrix& b, double lambda) {
  const Matrix g = problem.gradient(b);
  const int k = problem.k;
  double worst = 0.0;
  for (int j = 0; j < problem.blocks(); ++j) {
    const auto bj = b.middleRows(static_cast<Eigen::Index>(j) * k, k);
    const auto gj = g.middleRows(static_cast<Eigen::Index>(j) * k, k);
    const double norm = bj.norm();
    const double r = norm > 0.0 ? (gj + (lambda / norm) * bj).norm() : std::max(0.0, gj.norm() - lambda);
    worst = std::max(worst, r);
  }
  return worst;
}

inline double kkt_residual(const SampleBatch& batch, int i, const RowBlockMatrix& w, double lambda) {
  const auto problem = RegressionProblem::from_batch(batch, i);
  detail::require(w.rows() == static_cast<Eigen::Index>(problem.blocks()) * problem.k && w.cols() == problem.k,
                  "kkt_residual: W has the wrong shape");
  for (int p : w.partition()) detail::require(p == problem.k, "kkt_residual: W must be partitioned into k-row blocks");
  return kkt_residual(problem, w.data(), lambda);
}

namespace detail {

inline Matrix prox_blocks(const Matrix& v, double tau, int k) {
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); r += k) out.middleRows(r, k) = block_soft_threshold(v.middleRows(r, k), tau);
  return out;
}

inline double largest_eigenvalue(const Matrix& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(sym.rows() - 1);
}

}  // namespace detail

/// Solves the regression for player problem.player. `warm_start`, when
/// given, must be (n-1)k x k.
inline FitResult fit(const RegressionProblem& problem, const SolverConfig& config,
                     const Matrix* warm_start = nullptr) {
  config.validate();
  const int k = problem.k;
  const double lambda = config.lambda;
  const Eigen::Index rows = static_cast<Eigen::Index>(problem.blocks()) * k;

  Matrix b = Matrix::Zero(rows, k);
  if (warm_start != nullptr) {
    detail::require(warm_start->rows() == rows && warm_start->cols() == k, "fit: warm start has the wrong shape");
    b = *warm_start;
  }

  FitResult out;
  out.player = problem.player;
  out.n = problem.n;
  out.k = k;
  out.lambda = lambda;

  double lipschitz = 2.0 * detail::largest_eigenvalue(problem.gram);
  if (config.step_rule == StepRule::backtracking)
    lipschitz = std::max(2.0 * problem.gram.trace() / std::max<Eigen::Index>(rows, 1), 1e-12);

  double f = problem.objective(b, lambda);
  double kkt = kkt_residual(problem, b, lambda);
  int it = 0;
  if (kkt <= config.tol_kkt) {
    out.converged = true;
    out.stop_reason = StopReason::kkt;
  } else if (!(lipschitz > 0.0)) {
    // All covariates are zero: the loss is constant and W = 0 is optimal.
    b.setZero();
    f = problem.objective(b, lambda);
    kkt = kkt_residual(problem, b, lambda);
    out.converged = kkt <= config.tol_kkt;
    out.stop_reason = out.converged ? StopReason::kkt : StopReason::max_iter;
  } else {
    Matrix y = b;
    double momentum = 1.0;

    // One proximal step from `from`, with backtracking when requested.
    auto step = [&](const Matrix& from) {
      const Matrix g = problem.gradient(from);
      if (config.step_rule == StepRule::fixed) return detail::prox_blocks(from - g / lipschitz, lambda / lipschitz, k);
      const double base = problem.loss(from);
      for (;;) {
        Matrix cand = detail::prox_blocks(from - g / lipschitz, lambda / lipschitz, k);
        const Matrix diff = cand - from;
        const double model = base + (g.array() * diff.array()).sum() + 0.5 * lipschitz * diff.squaredNorm();
        if (problem.loss(cand) <= model + 1e-15 * std::abs(model)) return cand;
        lipschitz *= 2.0;
      }
    };

    out.stop_reason = StopReason::max_iter;
    int flat = 0;
    for (it = 1; it <= config.max_iter; ++it) {
      Matrix next = step(y);
      double f_next = problem.objective(next, lambda);
      if (config.acceleration) {
        if (f_next > f) {
          // Function-value restart: drop momentum and take a plain step.
          momentum = 1.0;
          next = step(b);
          f_next = problem.objective(next, lambda);
          y = next;
        } else {
          if (((y - next).array() * (next - b).array()).sum() > 0.0) momentum = 1.0;
          const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
          y = next + ((momentum - 1.0) / momentum_next) * (next - b);
          momentum = momentum_next;
        }
      } else {
        y = next;
      }
      const double change = std::abs(f - f_next) / std::max(1.0, std::abs(f));
      b = std::move(next);
      f = f_next;
      kkt = kkt_residual(problem, b, lambda);
      if (kkt <= config.tol_kkt) {
        out.stop_reason = StopReason::kkt;
        break;
      }
      flat = change <= config.tol_rel_obj ? flat + 1 : 0;
      if (flat >= config.stall_window) {
        out.stop_reason = StopReason::stalled;
        break;
      }
    }
    out.converged = kkt <= config.tol_kkt;
    it = std::min(it, config.max_iter);
  }

  out.w_hat = RowBlockMatrix(b, std::vector<int>(static_cast<std::size_t>(problem.blocks()), k));
  out.objective = f;
  out.kkt_residual = kkt;
  out.iterations = it;
  const auto others = other_players(problem.n, problem.player);
  for (int j = 0; j < problem.blocks(); ++j)
    if (out.w_hat.block(j).norm() > 0.0) out.active_blocks.push_back(others[static_cast<std::size_t>(j)]);
  return out;
}

inline FitResult fit(const SampleBatch& batch, int i, const SolverConfig& config) {
  return fit(RegressionProblem::from_batch(batch, i), config);
}

/// Inputs of the regularisation schedule for one player.
struct TheoryInputs {
  int k = 1;
  int support = 1;     ///< |S_i|
  int complement = 0;  ///< |S_i^c|
  double samples = 1;  ///< T
  double sigma = 0.0;
  double budget = 1.0;
  double alpha = 1.0;
  double w_max = 0.0;
  double w_min = 0.0;
};

struct LambdaSchedule {
  std::array<double, 11> terms{};
  double value = 0.0;
};

/// Lower bound on lambda, evaluated term by term
/// (keeping the irregular placement of |.| and k^{1/4}). Terms that
/// involve log(.|S_i^c|) are 0 when S_i^c is empty.
inline LambdaSchedule lambda_theoretical(const TheoryInputs& in) {
  detail::require(in.alpha > 0.0 && in.alpha <= 1.0, "lambda_theoretical: alpha must lie in (0, 1]");
  detail::require(in.k >= 1 && in.support >= 1 && in.complement >= 0, "lambda_theoretical: bad set sizes");
  detail::require(in.samples > 0 && in.sigma > 0 && in.budget > 0 && in.w_max > 0 && in.w_min > 0,
                  "lambda_theoretical: T, sigma, b, w_max and w_min must be positive");
  const double k = in.k;
  const double s = in.support;
  const double sc = in.complement;
  const double t = in.samples;
  const double sig = in.sigma;
  const double sig2 = sig * sig;
  const double b = in.budget;
  const double a = in.alpha;
  const double wmax = in.w_max;
  const double wmin = in.w_min;
  const double ratio = (1.0 - a) / a;
  const double r2 = std::sqrt(2.0);

  LambdaSchedule out;
  auto& x = out.terms;
  x[0] = 24.0 * r2 * ratio * sig * b * wmax * std::sqrt(k * s * std::log(2.0 * k * k * s) / t);
  x[1] = 192.0 * ratio * sig2 * wmax * std::sqrt(k * std::log(k * k * s) / t);
  x[2] = 192.0 * ratio * sig2 * std::sqrt(k) * wmax * std::sqrt(wmax * s * std::log(s * k) / (t * wmin));
  x[3] = 192.0 * ratio * std::pow(k, 0.25) * sig * std::sqrt(std::log(2.0 * k * k * s) / t);
  if (sc > 0) {
    x[4] = 24.0 * r2 / a * k * sig * b * wmax * std::sqrt(std::abs(sc * std::log(2.0 * k * k * sc)) / t);
    x[5] = 192.0 / a * sig2 * k * wmax * std::sqrt(std::log(k * k * sc) / t);
    x[6] = 192.0 / a * sig2 * k * wmax * std::sqrt(wmax * std::sqrt(sc) * std::log(sc * k) / t);
    x[7] = 24.0 * r2 / a * k * sig * b * std::sqrt(std::log(2.0 * k * k * sc) / t);
    x[8] = 192.0 / a * sig * std::sqrt(k * std::log(2.0 * k * k * sc) / t);
  }
  x[9] = 24.0 * (1.0 - a) * sig2 * std::sqrt(k) * wmax / a;
  x[10] = 24.0 * sig2 * k * wmax / a;
  out.value = *std::max_element(x.begin(), x.end());
  return out;
}

struct PlayerFit {
  std::optional<FitResult> fit;
  std::string error;
};

/// Fits every player. Results do not depend on `jobs` (0 = hardware threads):
/// each worker owns whole players and writes only its own slot.
inline std::map<int, PlayerFit> fit_all(const SampleBatch& batch, const std::vector<double>& lambdas,
                                        const SolverConfig& base, int jobs = 1) {
  batch.validate();
  detail::require(lambdas.size() == 1 || lambdas.size() == static_cast<std::size_t>(batch.n),
                  "fit_all: need one lambda or one per player");
  std::vector<PlayerFit> slots(static_cast<std::size_t>(batch.n));
  auto run = [&](int i) {
    SolverConfig cfg = base;
    cfg.lambda = lambdas.size() == 1 ? lambdas[0] : lambdas[static_cast<std::size_t>(i)];
    try {
      slots[static_cast<std::size_t>(i)].fit = fit(batch, i, cfg);
    } catch (const std::exception& e) {
      slots[static_cast<std::size_t>(i)].error = e.what();
    }
  };
  int workers = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, batch.n);
  if (workers <= 1) {
    for (int i = 0; i < batch.n; ++i) run(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next++; i < batch.n; i = next++) run(i);
      });
    for (auto& th : pool) th.join();
  }
  std::map<int, PlayerFit> out;
  for (int i = 0; i < batch.n; ++i) out.emplace(i, std::move(slots[static_cast<std::size_t>(i)]));
  return out;
}

}  // namespace gamerecover
