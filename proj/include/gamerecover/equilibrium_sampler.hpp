#pragma once

// Exact equilibria live in null(I - W). We compute an orthonormal basis of
// that subspace, draw isotropic Gaussian coordinates in it, rescale every
// draw to a fixed fraction of the budget and then add independent
// sub-Gaussian noise per coordinate: x = x* + e.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "gamerecover/error.hpp"
#include "gamerecover/game_model.hpp"
#include "gamerecover/seeding.hpp"

namespace gamerecover {

enum class NoiseFamily { gaussian, uniform, rademacher };

inline std::string to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::uniform: return "uniform";
    case NoiseFamily::rademacher: return "rademacher";
  }
  return "?";
}

inline NoiseFamily parse_noise_family(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::gaussian;
  if (s == "uniform") return NoiseFamily::uniform;
  if (s == "rademacher") return NoiseFamily::rademacher;
  throw InvalidInput("unknown noise family '" + s + "'");
}

/// sigma is the per-coordinate standard deviation: N(0, sigma^2),
/// U[-sigma*sqrt(3), sigma*sqrt(3)] or +-sigma.
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::gaussian;
  double sigma = 0.1;

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

enum class BatchKind { exact, perturbed };

inline std::string to_string(BatchKind k) { return k == BatchKind::exact ? "exact" : "perturbed"; }

/// T joint actions, one per row.
struct SampleBatch {
  Matrix data;
  BatchKind kind = BatchKind::exact;
  std::optional<NoiseSpec> noise;
  std::uint64_t seed = 0;
  int n = 0;
  int k = 0;

  Eigen::Index samples() const noexcept { return data.rows(); }

  void validate() const {
    detail::require(n >= 1 && k >= 1, "batch: n and k must be positive");
    detail::require(data.rows() >= 1, "batch: T must be at least 1");
    detail::require(data.cols() == static_cast<Eigen::Index>(n) * k, "batch: row length must be n*k");
  }
};

inline constexpr double kDefaultBasisTolerance = 1e-10;
inline constexpr double kEquilibriumResidualTolerance = 1e-8;

/// Orthonormal basis (columns) of the numerical nullspace of I - W.
/// Singular values below tol * sigma_max count as zero. Each column is signed
/// so that its entries sum to a nonnegative number.
inline Matrix equilibrium_basis(const GraphicalGame& game, double tol = kDefaultBasisTolerance) {
  detail::require(tol > 0.0, "equilibrium_basis: tol must be positive");
  const auto d = static_cast<Eigen::Index>(game.dim());
  const Matrix m = Matrix::Identity(d, d) - assemble(game);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double cutoff = tol * s(0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > cutoff) ++rank;
  Matrix basis = svd.matrixV().rightCols(d - rank);
  for (Eigen::Index c = 0; c < basis.cols(); ++c)
    if (basis.col(c).sum() < 0.0) basis.col(c) *= -1.0;
  return basis;
}

/// Largest per-player action norm.
inline double max_player_norm(const JointAction& x, int n, int k) {
  double out = 0.0;
  for (int i = 0; i < n; ++i) out = std::max(out, player_action(x, k, i).norm());
  return out;
}

/// T exact equilibria x* = basis * c with c ~ N(0, I), each rescaled so that
/// max_i ||x*_i|| = scale * budget.
inline SampleBatch sample_equilibria(const GraphicalGame& game, const Matrix& basis, int samples,
                                     std::uint64_t seed, double scale = 1.0) {
  detail::require(samples >= 1, "sample_equilibria: T must be positive");
  detail::require(scale > 0.0 && scale <= 1.0, "sample_equilibria: scale must lie in (0, 1]");
  detail::require(basis.rows() == static_cast<Eigen::Index>(game.dim()),
                  "sample_equilibria: basis has wrong row count");
  if (basis.cols() == 0)
    throw NoEquilibriumError("equilibrium subspace is trivial; only x* = 0 is an equilibrium");

  Engine rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double target = scale * game.budget();

  SampleBatch batch;
  batch.n = game.n();
  batch.k = game.k();
  batch.kind = BatchKind::exact;
  batch.seed = seed;
  batch.data.resize(samples, static_cast<Eigen::Index>(game.dim()));

  Vector c(basis.cols());
  for (int t = 0; t < samples; ++t) {
    Vector x;
    double peak = 0.0;
    do {
      for (Eigen::Index m = 0; m < c.size(); ++m) c(m) = normal(rng);
      x = basis * c;
      peak = max_player_norm(x, game.n(), game.k());
    } while (peak == 0.0);
    x *= target / peak;
    // Rounding in the rescale can push the peak a hair above target.
    for (double after = max_player_norm(x, game.n(), game.k()); after > game.budget();
         after = max_player_norm(x, game.n(), game.k()))
      x *= std::nextafter(game.budget() / after, 0.0);
    if (!is_epsilon_psne(game, x, kEquilibriumResidualTolerance))
      throw NumericalError("sampled point is not an equilibrium within 1e-8; basis tolerance too loose");
    batch.data.row(t) = x.transpose();
  }
  return batch;
}

/// T x dim matrix of i.i.d. noise, drawn sample-major then coordinate-minor.
inline Matrix noise_matrix(Eigen::Index samples, Eigen::Index dim, const NoiseSpec& noise, std::uint64_t seed) {
  detail::require(noise.sigma > 0.0 && std::isfinite(noise.sigma), "noise: sigma must be positive");
  Engine rng = make_engine(seed);
  Matrix e(samples, dim);
  switch (noise.family) {
    case NoiseFamily::gaussian: {
      std::normal_distribution<double> dist(0.0, noise.sigma);
      for (Eigen::Index t = 0; t < samples; ++t)
        for (Eigen::Index c = 0; c < dim; ++c) e(t, c) = dist(rng);
      break;
    }
    case NoiseFamily::uniform: {
      const double a = noise.sigma * std::sqrt(3.0);
      std::uniform_real_distribution<double> dist(-a, a);
      for (Eigen::Index t = 0; t < samples; ++t)
        for (Eigen::Index c = 0; c < dim; ++c) e(t, c) = dist(rng);
      break;
    }
    case NoiseFamily::rademacher: {
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index t = 0; t < samples; ++t)
        for (Eigen::Index c = 0; c < dim; ++c) e(t, c) = coin(rng) ? noise.sigma : -noise.sigma;
      break;
    }
  }
  return e;
}

inline SampleBatch perturb(const SampleBatch& exact, const NoiseSpec& noise, std::uint64_t seed) {
  exact.validate();
  detail::require(exact.kind == BatchKind::exact, "perturb: input batch must be exact");
  SampleBatch out = exact;
  out.kind = BatchKind::perturbed;
  out.noise = noise;
  out.seed = seed;
  out.data += noise_matrix(exact.data.rows(), exact.data.cols(), noise, seed);
  return out;
}

}  // namespace gamerecover
