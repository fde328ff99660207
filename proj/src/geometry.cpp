#include "wrl/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <json.hpp>

#include "wrl/rng.hpp"

namespace wrl {

Eigen::VectorXd task_vector(const WeightVector& finetuned, const WeightVector& pretrained) {
  if (!same_encoder_layout(finetuned, pretrained)) {
    throw DataError("task vector operands have different encoder segment tables");
  }
  const auto n = static_cast<Eigen::Index>(encoder_length(pretrained));
  return finetuned.values.head(n) - pretrained.values.head(n);
}

Eigen::MatrixXd task_vector_matrix(std::span<const WeightVector> finetuned, const WeightVector& pretrained) {
  const auto cols = static_cast<Eigen::Index>(encoder_length(pretrained));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(finetuned.size()), cols);
  for (std::size_t i = 0; i < finetuned.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = task_vector(finetuned[i], pretrained).transpose();
  }
  return out;
}

namespace {

double lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd& centers, std::vector<int>& assign, int max_iterations) {
  const Eigen::Index n = points.rows();
  const auto k = centers.rows();
  assign.assign(static_cast<std::size_t>(n), -1);
  double inertia = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      const double d = (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      inertia += d;
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
    }
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts, int max_iterations) {
  const Eigen::Index n = points.rows();
  if (k < 1 || k > n) throw DataError("k-means needs 1 <= k <= number of points");
  std::vector<Eigen::Index> firsts(static_cast<std::size_t>(n));
  std::iota(firsts.begin(), firsts.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(firsts.begin(), firsts.end(), rng);
  firsts.resize(std::min<std::size_t>(firsts.size(), static_cast<std::size_t>(std::max(restarts, 1))));

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (const auto first : firsts) {
    Eigen::MatrixXd centers(k, points.cols());
    centers.row(0) = points.row(first);
    Eigen::VectorXd nearest = (points.rowwise() - points.row(first)).rowwise().squaredNorm();
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    chosen[static_cast<std::size_t>(first)] = 1;
    for (int c = 1; c < k; ++c) {
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (chosen[static_cast<std::size_t>(i)]) continue;
        if (far < 0 || nearest[i] > nearest[far]) far = i;
      }
      chosen[static_cast<std::size_t>(far)] = 1;
      centers.row(c) = points.row(far);
      nearest = nearest.cwiseMin((points.rowwise() - points.row(far)).rowwise().squaredNorm());
    }
    std::vector<int> assign;
    const double inertia = lloyd(points, centers, assign, max_iterations);
    if (inertia < best.inertia) best = {std::move(assign), std::move(centers), inertia};
  }
  return best;
}

Eigen::MatrixXd cosine_affinity(const Eigen::MatrixXd& similarity) {
  Eigen::MatrixXd a = (similarity.array() + 1.0) / 2.0;
  a.diagonal().setZero();
  return a;
}

Eigen::MatrixXd spectral_embedding(const Eigen::MatrixXd& affinity, int k, const SpectralOptions& options) {
  const Eigen::Index n = affinity.rows();
  if (affinity.cols() != n) throw DataError("affinity must be square");
  if (k < 2 || k > n) throw DataError("spectral clustering needs 2 <= k <= n");
  const Eigen::VectorXd degree = affinity.rowwise().sum();
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt[i] = degree[i] > 0.0 ? 1.0 / std::sqrt(degree[i]) : 0.0;
  Eigen::MatrixXd lap = -(inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal());
  lap.diagonal().array() += 1.0;
  lap = (lap + lap.transpose()) / 2.0;
  const auto eig = jacobi_eigen(lap, options.jacobi_tol, options.jacobi_max_sweeps);
  Eigen::MatrixXd emb = eig.vectors.leftCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = emb.row(i).norm();
    if (norm > 0.0) emb.row(i) /= norm;
  }
  return emb;
}

std::vector<int> spectral_cluster_affinity(const Eigen::MatrixXd& affinity, int k, std::uint64_t seed,
                                           const SpectralOptions& options) {
  const Eigen::MatrixXd emb = spectral_embedding(affinity, k, options);
  return kmeans(emb, k, seed, options.kmeans_restarts).assignments;
}

std::vector<int> spectral_cluster(const Eigen::MatrixXd& similarity, int k, std::uint64_t seed,
                                  const SpectralOptions& options) {
  if (!similarity.isApprox(similarity.transpose(), 1e-12)) throw DataError("similarity must be symmetric");
  return spectral_cluster_affinity(cosine_affinity(similarity), k, seed, options);
}

LabelMatch match_labels(const std::vector<int>& assignments, const std::vector<std::string>& truth, int k) {
  if (assignments.size() != truth.size()) throw DataError("assignments and labels differ in length");
  const std::set<std::string> label_set(truth.begin(), truth.end());
  const std::vector<std::string> labels(label_set.begin(), label_set.end());
  if (static_cast<int>(labels.size()) > k) throw DataError("more distinct labels than clusters");
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto c = assignments[i];
    if (c < 0 || c >= k) throw DataError("cluster id out of range");
    const auto l = std::lower_bound(labels.begin(), labels.end(), truth[i]) - labels.begin();
    cost(l, c) -= 1.0;
  }
  const auto label_to_cluster = hungarian(cost);
  LabelMatch out;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    const int c = label_to_cluster[l];
    out.mapping[c] = labels[l];
    out.matched += static_cast<std::size_t>(-cost(static_cast<Eigen::Index>(l), c));
  }
  out.accuracy = truth.empty() ? 0.0 : static_cast<double>(out.matched) / static_cast<double>(truth.size());
  return out;
}

std::map<std::string, double> cluster_f1(const std::vector<int>& assignments, const std::vector<std::string>& truth,
                                         const std::map<int, std::string>& mapping) {
  std::map<std::string, double> out;
  const std::set<std::string> labels(truth.begin(), truth.end());
  for (const auto& label : labels) {
    std::size_t tp = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const auto it = mapping.find(assignments[i]);
      const bool pred = it != mapping.end() && it->second == label;
      const bool real = truth[i] == label;
      tp += pred && real;
      predicted += pred;
      actual += real;
    }
    const double precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    out[label] = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return out;
}

ClusterResult cluster_models(const Eigen::MatrixXd& similarity, const std::vector<std::string>& truth, int k,
                             std::uint64_t seed, const SpectralOptions& options) {
  ClusterResult r;
  r.k = k;
  r.similarity = similarity;
  r.assignments = spectral_cluster(similarity, k, seed, options);
  r.match = match_labels(r.assignments, truth, k);
  r.per_class_f1 = cluster_f1(r.assignments, truth, r.match.mapping);
  return r;
}

std::string cluster_report_json(const ClusterResult& result, const std::vector<std::string>& model_ids) {
  nlohmann::ordered_json j;
  j["k"] = result.k;
  j["assignments"] = result.assignments;
  if (!model_ids.empty()) j["model_ids"] = model_ids;
  nlohmann::ordered_json mapping = nlohmann::ordered_json::object();
  for (const auto& [cluster, label] : result.match.mapping) mapping[std::to_string(cluster)] = label;
  j["mapping"] = mapping;
  j["accuracy"] = result.match.accuracy;
  j["per_class_f1"] = result.per_class_f1;
  return j.dump(2);
}

Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  if (n < 3) throw DataError("projection needs at least 3 points");
  const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  const Eigen::MatrixXd gram = centered * centered.transpose();
  if (gram.trace() <= 0.0) throw DataError("degenerate covariance: all points identical");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  Eigen::MatrixXd out(n, 2);
  for (int c = 0; c < 2; ++c) {
    const Eigen::Index col = n - 1 - c;
    Eigen::VectorXd u = eig.eigenvectors().col(col);
    Eigen::Index arg;
    u.cwiseAbs().maxCoeff(&arg);
    if (u[arg] < 0.0) u = -u;
    out.col(c) = u * std::sqrt(std::max(eig.eigenvalues()[col], 0.0));
  }
  return out;
}

Eigen::MatrixXd project_2d(const Eigen::MatrixXd& rows, ProjectionMethod method, std::uint64_t seed,
                           const TsneOptions& tsne) {
  return method == ProjectionMethod::Pca ? pca_2d(rows) : tsne_2d(rows, seed, tsne);
}

}  // namespace wrl
