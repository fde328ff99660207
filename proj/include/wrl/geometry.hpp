#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wrl/error.hpp"
#include "wrl/weights.hpp"

namespace wrl {

/// Encoder-segment difference ft - pre. Heads are ignored.
Eigen::VectorXd task_vector(const WeightVector& finetuned, const WeightVector& pretrained);

/// Stacks task vectors as rows.
Eigen::MatrixXd task_vector_matrix(std::span<const WeightVector> finetuned, const WeightVector& pretrained);

/// Pairwise cosine similarity of rows, unit diagonal, exactly symmetric.
/// Throws DataError naming the first zero row.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> cosine_matrix(
    const Eigen::MatrixBase<Derived>& rows, const std::vector<std::string>& row_ids = {}) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = rows.rows();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = rows.rowwise().norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms[i] == Scalar(0)) {
      const auto id = static_cast<std::size_t>(i) < row_ids.size() ? row_ids[static_cast<std::size_t>(i)]
                                                                    : "row " + std::to_string(i);
      throw DataError("zero-norm task vector for " + id);
    }
  }
  Matrix gram = rows * rows.transpose();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = Scalar(1);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out(i, j) = out(j, i) = gram(i, j) / (norms[i] * norms[j]);
    }
  }
  return out;
}

template <typename Scalar>
struct SymmetricEigen {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;               // ascending
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;  // columns match values
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Throws DataError if the
/// off-diagonal Frobenius norm is not below `tol` within `max_sweeps`.
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> jacobi_eigen(const Eigen::MatrixBase<Derived>& input,
                                                      double tol = 1e-10, int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw DataError("jacobi_eigen needs a square matrix");
  Matrix a = input;
  Matrix v = Matrix::Identity(n, n);
  auto off_norm = [&] {
    Scalar s(0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  int sweep = 0;
  for (; off_norm() >= Scalar(tol); ++sweep) {
    if (sweep >= max_sweeps) throw DataError("Jacobi eigensolver did not converge");
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
  SymmetricEigen<Scalar> out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  out.sweeps = sweep;
  return out;
}

/// Minimum-cost assignment of rows to distinct columns (rows <= cols).
/// Returns the column of each row.
template <typename Derived>
std::vector<int> hungarian(const Eigen::MatrixBase<Derived>& cost) {
  using Scalar = typename Derived::Scalar;
  const auto rows = static_cast<int>(cost.rows());
  const auto cols = static_cast<int>(cost.cols());
  if (rows > cols) throw DataError("hungarian needs rows <= cols");
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  // Potentials over 1-based rows/columns; column 0 is a sentinel.
  std::vector<Scalar> u(static_cast<std::size_t>(rows) + 1, Scalar(0)), v(static_cast<std::size_t>(cols) + 1, Scalar(0));
  std::vector<int> match(static_cast<std::size_t>(cols) + 1, 0), way(static_cast<std::size_t>(cols) + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<Scalar> minv(static_cast<std::size_t>(cols) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(cols) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      Scalar delta = inf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const Scalar cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= cols; ++j) {
    if (match[static_cast<std::size_t>(j)] != 0) row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return row_to_col;
}

struct KMeansResult {
  std::vector<int> assignments;
  Eigen::MatrixXd centers;
  double inertia = 0.0;
};

/// Lloyd k-means over rows. Each restart seeds farthest-first from a random
/// first point; the lowest-inertia run wins.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts = 100,
                    int max_iterations = 300);

struct SpectralOptions {
  int kmeans_restarts = 100;
  double jacobi_tol = 1e-10;
  int jacobi_max_sweeps = 100;
};

/// Normalized spectral embedding of an affinity matrix: the k eigenvectors
/// of the smallest eigenvalues of I - D^-1/2 A D^-1/2, rows L2-normalized.
Eigen::MatrixXd spectral_embedding(const Eigen::MatrixXd& affinity, int k, const SpectralOptions& options = {});

/// (cos + 1) / 2 with a zeroed diagonal.
Eigen::MatrixXd cosine_affinity(const Eigen::MatrixXd& similarity);

std::vector<int> spectral_cluster_affinity(const Eigen::MatrixXd& affinity, int k, std::uint64_t seed,
                                           const SpectralOptions& options = {});

/// Full pipeline from a cosine similarity matrix.
std::vector<int> spectral_cluster(const Eigen::MatrixXd& similarity, int k, std::uint64_t seed,
                                  const SpectralOptions& options = {});

struct LabelMatch {
  std::map<int, std::string> mapping;  // cluster -> label, injective
  double accuracy = 0.0;
  std::size_t matched = 0;
};

/// Optimal injective cluster/label pairing maximizing agreement.
LabelMatch match_labels(const std::vector<int>& assignments, const std::vector<std::string>& truth, int k);

/// Per-label F1 treating the mapped cluster as the prediction.
std::map<std::string, double> cluster_f1(const std::vector<int>& assignments, const std::vector<std::string>& truth,
                                         const std::map<int, std::string>& mapping);

struct ClusterResult {
  std::vector<int> assignments;
  int k = 0;
  LabelMatch match;
  std::map<std::string, double> per_class_f1;
  Eigen::MatrixXd similarity;
};

ClusterResult cluster_models(const Eigen::MatrixXd& similarity, const std::vector<std::string>& truth, int k,
                             std::uint64_t seed, const SpectralOptions& options = {});

/// JSON report: assignments, mapping, accuracy, per-class F1.
std::string cluster_report_json(const ClusterResult& result, const std::vector<std::string>& model_ids);

enum class ProjectionMethod { Pca, Tsne };

struct TsneOptions {
  double perplexity = 15.0;
  int iterations = 500;
  double learning_rate = 100.0;
};

/// n x 2 coordinates. PCA is exact; t-SNE is the exact O(n^2) variant.
Eigen::MatrixXd project_2d(const Eigen::MatrixXd& rows, ProjectionMethod method, std::uint64_t seed,
                           const TsneOptions& tsne = {});

Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& rows);
Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& rows, std::uint64_t seed, const TsneOptions& options = {});

}  // namespace wrl
