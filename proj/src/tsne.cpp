#include <algorithm>
#include <cmath>

#include "wrl/geometry.hpp"
#include "wrl/rng.hpp"

namespace wrl {

namespace {

constexpr int kExaggerationIters = 100;
constexpr double kExaggeration = 12.0;
constexpr int kMomentumSwitch = 250;

// Row-conditional affinities matched to the target perplexity by bisection on
// the Gaussian precision.
Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& sqdist, double perplexity) {
  const Eigen::Index n = sqdist.rows();
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    Eigen::VectorXd row(n);
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * sqdist(i, j));
        sum += row[j];
      }
      if (sum <= 0.0) sum = std::numeric_limits<double>::min();
      double h = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) h += beta * sqdist(i, j) * row[j];
      h = h / sum + std::log(sum);
      row /= sum;
      const double diff = h - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2.0 : (beta + lo) / 2.0;
      }
    }
    p.row(i) = row.transpose();
  }
  return p;
}

}  // namespace

Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& rows, std::uint64_t seed, const TsneOptions& options) {
  const Eigen::Index n = rows.rows();
  if (n < 3) throw DataError("projection needs at least 3 points");
  const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  if (centered.squaredNorm() <= 0.0) throw DataError("degenerate covariance: all points identical");

  // Normalize scale so the bisection starts in a sensible range.
  const Eigen::MatrixXd x = centered / centered.cwiseAbs().maxCoeff();
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd sqdist = (-2.0 * x * x.transpose()).colwise() + sq;
  sqdist.rowwise() += sq.transpose();
  sqdist = sqdist.cwiseMax(0.0);

  const double perplexity = std::min(options.perplexity, (static_cast<double>(n) - 1.0) / 3.0);
  Eigen::MatrixXd p = conditional_affinities(sqdist, std::max(perplexity, 1.0));
  p = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1e-4);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = normal(rng);
    y(i, 1) = normal(rng);
  }
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);

  for (int iter = 0; iter < options.iterations; ++iter) {
    const double exaggeration = iter < kExaggerationIters ? kExaggeration : 1.0;
    const double momentum = iter < kMomentumSwitch ? 0.5 : 0.8;
    const Eigen::VectorXd ysq = y.rowwise().squaredNorm();
    Eigen::MatrixXd num = (-2.0 * y * y.transpose()).colwise() + ysq;
    num.rowwise() += ysq.transpose();
    num = (1.0 + num.array()).inverse().matrix();
    num.diagonal().setZero();
    const double zsum = num.sum();
    const Eigen::MatrixXd q = (num / zsum).cwiseMax(1e-12);
    const Eigen::MatrixXd w = ((exaggeration * p - q).array() * num.array()).matrix();
    Eigen::MatrixXd grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);

    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        const bool same_sign = (grad(i, d) > 0) == (velocity(i, d) > 0);
        gains(i, d) = same_sign ? std::max(gains(i, d) * 0.8, 0.01) : gains(i, d) + 0.2;
      }
    }
    velocity = momentum * velocity - options.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y = y.rowwise() - y.colwise().mean();
  }
  return y;
}

}  // namespace wrl
