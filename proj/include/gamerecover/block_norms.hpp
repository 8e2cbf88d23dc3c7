#pragma once

// Row-partitioned block matrices and the mixed norms used by the estimator
// analysis.
//
//   ||A||_{B,inf,F} = max_b ||A_b||_F
//   ||A||_{B,inf,1} = max_b sum_{l,m} |[A_b]_{lm}|
//   ||A||_{inf,2}   = max_r ||A_{r.}||_2
//   ||A||_{inf,inf} = max_r sum_c |A_rc|
//
// Useful facts (all exercised by the tests):
//   ||AB||_{B,inf,F} <= ||A||_{B,inf,1} ||B||_{inf,2}
//   ||AB||_{B,inf,1} <= ||A||_{B,inf,1} ||B||_{inf,inf}
//   ||A||_{B,inf,1}  <= m ||A||_{inf,inf}   (m = largest block row count)

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gamerecover/error.hpp"

namespace gamerecover {

class RowBlockMatrix {
 public:
  RowBlockMatrix() = default;

  RowBlockMatrix(Eigen::MatrixXd data, std::vector<int> partition)
      : data_(std::move(data)), partition_(std::move(partition)) {
    validate();
    offsets_.resize(partition_.size() + 1, 0);
    std::partial_sum(partition_.begin(), partition_.end(), offsets_.begin() + 1);
  }

  /// num_blocks blocks, each block_rows x cols, all zero.
  static RowBlockMatrix uniform_zero(int num_blocks, int block_rows, int cols) {
    return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_blocks) * block_rows, cols),
            std::vector<int>(static_cast<std::size_t>(num_blocks), block_rows)};
  }

  const Eigen::MatrixXd& data() const noexcept { return data_; }
  Eigen::MatrixXd& data() noexcept { return data_; }
  const std::vector<int>& partition() const noexcept { return partition_; }
  int num_blocks() const noexcept { return static_cast<int>(partition_.size()); }
  Eigen::Index rows() const noexcept { return data_.rows(); }
  Eigen::Index cols() const noexcept { return data_.cols(); }
  int max_block_rows() const {
    return partition_.empty() ? 0 : *std::max_element(partition_.begin(), partition_.end());
  }

  auto block(int b) const { return data_.middleRows(offsets_.at(b), partition_.at(b)); }
  auto block(int b) { return data_.middleRows(offsets_.at(b), partition_.at(b)); }

 private:
  void validate() const {
    for (int p : partition_) detail::require(p >= 1, "RowBlockMatrix: block row-counts must be >= 1");
    const long total = std::accumulate(partition_.begin(), partition_.end(), 0L);
    detail::require(total == data_.rows(), "RowBlockMatrix: partition does not sum to row count");
  }

  Eigen::MatrixXd data_;
  std::vector<int> partition_;
  std::vector<Eigen::Index> offsets_{0};
};

inline double norm_b_inf_f(const RowBlockMatrix& a) {
  double out = 0.0;
  for (int b = 0; b < a.num_blocks(); ++b) out = std::max(out, a.block(b).norm());
  return out;
}

inline double norm_b_inf_1(const RowBlockMatrix& a) {
  double out = 0.0;
  for (int b = 0; b < a.num_blocks(); ++b) out = std::max(out, a.block(b).cwiseAbs().sum());
  return out;
}

inline double norm_inf_2(const Eigen::MatrixXd& a) {
  return a.rows() == 0 ? 0.0 : a.rowwise().norm().maxCoeff();
}

inline double norm_inf_inf(const Eigen::MatrixXd& a) {
  return a.rows() == 0 ? 0.0 : a.cwiseAbs().rowwise().sum().maxCoeff();
}

inline double norm_frobenius(const Eigen::MatrixXd& a) { return a.norm(); }

inline double norm_spectral(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(0);
}

}  // namespace gamerecover
