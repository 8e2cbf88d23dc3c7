#pragma once

// Continuous-action graphical games with linear best responses.
//
// Player i's payoff is u_i(x) = -|| x_i - sum_{j in S_i} W_ij x_j ||_2, where
// x_i in R^k and S_i is the set of in-neighbours of i (players whose weight
// block W_ij is nonzero). Players are indexed 0..n-1. A joint action is a
// single vector of length n*k with player i occupying [i*k, (i+1)*k).

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gamerecover/error.hpp"

namespace gamerecover {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using JointAction = Eigen::VectorXd;

/// Ordered pair (i, j): block W_ij, i.e. j is an in-neighbour of i.
using Edge = std::pair<int, int>;
using EdgeSet = std::set<Edge>;

class GraphicalGame {
 public:
  GraphicalGame(int n, int k, double budget) : n_(n), k_(k), budget_(budget) {
    detail::require(n >= 1, "game: n must be positive");
    detail::require(k >= 1, "game: k must be positive");
    detail::require(budget > 0.0 && std::isfinite(budget), "game: budget must be positive");
  }

  int n() const noexcept { return n_; }
  int k() const noexcept { return k_; }
  double budget() const noexcept { return budget_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(n_) * k_; }

  /// Stores W_ij. A block that is exactly zero removes the key.
  void set_block(int i, int j, const Matrix& w) {
    check_player(i);
    check_player(j);
    detail::require(i != j, "game: self-edge (" + std::to_string(i) + "," + std::to_string(i) + ")");
    detail::require(w.rows() == k_ && w.cols() == k_, "game: block must be k x k");
    detail::require(w.allFinite(), "game: block has non-finite entries");
    if ((w.array() == 0.0).all()) {
      blocks_.erase({i, j});
    } else {
      blocks_[{i, j}] = w;
    }
  }

  void erase_block(int i, int j) { blocks_.erase({i, j}); }

  bool has_block(int i, int j) const { return blocks_.count({i, j}) != 0; }

  /// W_ij, or a zero matrix when absent.
  Matrix block(int i, int j) const {
    auto it = blocks_.find({i, j});
    return it == blocks_.end() ? Matrix::Zero(k_, k_) : it->second;
  }

  const std::map<Edge, Matrix>& blocks() const noexcept { return blocks_; }

  std::vector<int> in_neighbors(int i) const {
    check_player(i);
    std::vector<int> out;
    for (auto it = blocks_.lower_bound({i, 0}); it != blocks_.end() && it->first.first == i; ++it)
      out.push_back(it->first.second);
    return out;
  }

  /// [n] \ (S_i u {i}), ascending.
  std::vector<int> non_neighbors(int i) const {
    std::vector<int> out;
    for (int j = 0; j < n_; ++j)
      if (j != i && !has_block(i, j)) out.push_back(j);
    return out;
  }

  EdgeSet edges() const {
    EdgeSet out;
    for (const auto& [e, w] : blocks_) out.insert(e);
    return out;
  }

  /// Multiplies every stored block by s > 0; the support is unchanged.
  void scale_blocks(double s) {
    detail::require(s > 0.0 && std::isfinite(s), "game: scale must be positive");
    for (auto& [e, w] : blocks_) w *= s;
  }

  void check_player(int i) const {
    if (i < 0 || i >= n_)
      throw InvalidInput("player index " + std::to_string(i) + " out of range [0," +
                         std::to_string(n_) + ")");
  }

  void check_action(const JointAction& x) const {
    if (static_cast<std::size_t>(x.size()) != dim())
      throw InvalidInput("joint action has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(dim()));
  }

  friend bool operator==(const GraphicalGame& a, const GraphicalGame& b) {
    return a.n_ == b.n_ && a.k_ == b.k_ && a.budget_ == b.budget_ && a.blocks_ == b.blocks_;
  }

 private:
  int n_;
  int k_;
  double budget_;
  std::map<Edge, Matrix> blocks_;
};

inline auto player_action(const JointAction& x, int k, int i) { return x.segment(static_cast<Eigen::Index>(i) * k, k); }

/// x_i - sum_{j in S_i} W_ij x_j
inline Vector best_response_residual(const GraphicalGame& game, int i, const JointAction& x) {
  game.check_player(i);
  game.check_action(x);
  const int k = game.k();
  Vector r = player_action(x, k, i);
  for (int j : game.in_neighbors(i)) r.noalias() -= game.blocks().at({i, j}) * player_action(x, k, j);
  return r;
}

inline double payoff(const GraphicalGame& game, int i, const JointAction& x) {
  return -best_response_residual(game, i, x).norm();
}

/// Membership in NE_eps: every player's residual is at most eps and every
/// action lies in the budget ball A_i.
inline bool is_epsilon_psne(const GraphicalGame& game, const JointAction& x, double eps) {
  detail::require(eps >= 0.0, "is_epsilon_psne: eps must be nonnegative");
  game.check_action(x);
  for (int i = 0; i < game.n(); ++i) {
    if (player_action(x, game.k(), i).norm() > game.budget()) return false;
    if (best_response_residual(game, i, x).norm() > eps) return false;
  }
  return true;
}

inline std::vector<int> in_neighbors(const GraphicalGame& game, int i) { return game.in_neighbors(i); }

/// The nk x nk matrix whose (i, j) block is W_ij (zero when absent), so that
/// the equilibrium conditions read x = W x.
inline Matrix assemble(const GraphicalGame& game) {
  const int k = game.k();
  Matrix w = Matrix::Zero(static_cast<Eigen::Index>(game.dim()), static_cast<Eigen::Index>(game.dim()));
  for (const auto& [e, b] : game.blocks())
    w.block(static_cast<Eigen::Index>(e.first) * k, static_cast<Eigen::Index>(e.second) * k, k, k) = b;
  return w;
}

}  // namespace gamerecover
