#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace wrl::detail {

/// Mean cross-entropy of row-wise softmax(logits). When `dlogits` is given it
/// receives d(loss)/d(logits), already divided by the row count.
inline double softmax_xent(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                           Eigen::MatrixXd* dlogits = nullptr, std::size_t* correct = nullptr) {
  const Eigen::Index n = logits.rows();
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  Eigen::MatrixXd e = (logits.colwise() - row_max).array().exp().matrix();
  const Eigen::VectorXd sum = e.rowwise().sum();
  double loss = 0.0;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    loss += std::log(sum[i]) - (logits(i, y) - row_max[i]);
    if (correct) {
      Eigen::Index arg;
      logits.row(i).maxCoeff(&arg);
      if (arg == y) ++hits;
    }
  }
  if (dlogits) {
    e.array().colwise() /= sum.array();
    for (Eigen::Index i = 0; i < n; ++i) e(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    *dlogits = e / static_cast<double>(n);
  }
  if (correct) *correct = hits;
  return loss / static_cast<double>(n);
}

}  // namespace wrl::detail
