#include "wrl/evaluator.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "softmax.hpp"
#include "wrl/checkpoint.hpp"
#include "wrl/error.hpp"
#include "wrl/parallel.hpp"
#include "wrl/rng.hpp"

namespace wrl {

std::string to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::In: return "In";
    case GroupKind::Ex: return "Ex";
    case GroupKind::InPrime: return "In'";
  }
  return "In";
}

ModelGroup make_group(GroupKind kind, std::vector<WeightVector> members, std::vector<std::string> sources,
                      std::string provenance) {
  ModelGroup g;
  g.kind = kind;
  g.provenance = std::move(provenance);
  sources.resize(members.size());
  g.member_sources = std::move(sources);
  for (const auto& m : members) g.member_ids.push_back(content_id(m));
  if (!members.empty()) g.config_id = members.front().model_config_id;
  g.members = std::move(members);
  validate(g);
  return g;
}

void validate(const ModelGroup& group) {
  if (group.members.empty()) throw DataError("model group " + to_string(group.kind) + " is empty");
  if (group.member_ids.size() != group.members.size() || group.member_sources.size() != group.members.size()) {
    throw DataError("model group bookkeeping lengths disagree");
  }
  for (const auto& m : group.members) {
    if (!same_layout(m, group.members.front())) throw DataError("model group members differ in layout");
    if (m.model_config_id != group.config_id) throw DataError("model group members differ in config");
  }
}

std::string group_to_json(const ModelGroup& group) {
  nlohmann::ordered_json j;
  j["name"] = to_string(group.kind);
  j["members"] = group.member_ids;
  j["sources"] = group.member_sources;
  j["provenance"] = group.provenance;
  j["config_id"] = group.config_id;
  return j.dump(2);
}

ProbeResult probe(const WeightVector& encoder, const ModelConfig& config, const TargetData& target,
                  std::uint64_t probe_seed, const ProbeOptions& options) {
  if (has_head(encoder)) throw DataError("probe expects a head-free encoder (strip the head first)");
  const Eigen::MatrixXd train_features = encode(encoder, config, target.train.inputs);
  const Eigen::MatrixXd test_features = encode(encoder, config, target.test.inputs);
  const auto n = static_cast<double>(train_features.rows());
  const Eigen::Index h = train_features.cols();

  // Whitening P with P C P^T = I (up to a floor on tiny eigenvalues).
  const Eigen::RowVectorXd mean = train_features.colwise().mean();
  const Eigen::MatrixXd centered = train_features.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double floor = std::max(1e-12 * cov.trace() / static_cast<double>(h), 1e-300);
  const Eigen::ArrayXd lambda = eig.eigenvalues().array().max(floor);
  const Eigen::MatrixXd whiten = lambda.rsqrt().matrix().asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::MatrixXd unwhiten = eig.eigenvectors() * lambda.sqrt().matrix().asDiagonal();
  const Eigen::MatrixXd z = centered * whiten.transpose();

  const WeightVector fresh = attach_head(encoder, config, probe_seed);
  const auto& head_w = fresh.segments[fresh.segments.size() - 2];
  const auto& head_b = fresh.segments.back();
  const RowMajorMatrixXd w0 = matrix_view(fresh, head_w);
  const Eigen::VectorXd b0 = vector_view(fresh, head_b);

  auto test_loss = [&](const Eigen::MatrixXd& w, const Eigen::VectorXd& b, std::size_t* correct) {
    Eigen::MatrixXd logits = test_features * w.transpose();
    logits.rowwise() += b.transpose();
    return detail::softmax_xent(logits, target.test.labels, nullptr, correct);
  };

  LossReport report;
  report.target_dataset_id = target.spec.dataset_id;
  report.probe_seed = probe_seed;
  {
    Eigen::MatrixXd logits = train_features * w0.transpose();
    logits.rowwise() += b0.transpose();
    report.initial_train_loss = detail::softmax_xent(logits, target.train.labels);
    report.initial_test_loss = test_loss(w0, b0, nullptr);
  }

  // Head in whitened coordinates: logits = z V^T + c. Parameters are packed
  // per class as [V_k, c_k]; the ridge acts on V only.
  const Eigen::Index k_classes = w0.rows();
  const Eigen::Index block = h + 1;
  const Eigen::Index dim = k_classes * block;
  Eigen::MatrixXd z1(z.rows(), block);
  z1.leftCols(h) = z;
  z1.col(h).setOnes();
  Eigen::MatrixXd theta(k_classes, block);  // row k = [V_k, c_k]
  theta.leftCols(h) = w0 * unwhiten;
  theta.col(h) = b0 + w0 * mean.transpose();

  const double ridge = options.ridge;
  auto objective = [&](const Eigen::MatrixXd& th, Eigen::MatrixXd* dlogits, Eigen::MatrixXd* probs, double* data_loss) {
    const Eigen::MatrixXd logits = z1 * th.transpose();
    const double ce = detail::softmax_xent(logits, target.train.labels, dlogits);
    if (probs) {
      *probs = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
      probs->array().colwise() /= probs->rowwise().sum().array();
    }
    if (data_loss) *data_loss = ce;
    return ce + ridge * th.leftCols(h).squaredNorm();
  };

  Eigen::MatrixXd dlogits, probs;
  double data_loss = 0.0;
  double value = objective(theta, &dlogits, &probs, &data_loss);
  if (!std::isfinite(value)) throw DivergenceError("probe loss is not finite at initialization");
  int steps = 0;
  bool converged = false;
  for (;;) {
    Eigen::MatrixXd grad = dlogits.transpose() * z1;
    grad.leftCols(h) += 2.0 * ridge * theta.leftCols(h);
    const double grad_norm = grad.norm();
    if (grad_norm <= options.grad_tol) {
      converged = true;
      break;
    }
    if (steps >= options.step_cap) break;

    // Softmax Hessian blocks: z1^T diag(p_a (delta_ab - p_b)) z1 / n.
    Eigen::MatrixXd hess(dim, dim);
    for (Eigen::Index a = 0; a < k_classes; ++a) {
      for (Eigen::Index b = a; b < k_classes; ++b) {
        Eigen::VectorXd s = -probs.col(a).cwiseProduct(probs.col(b));
        if (a == b) s += probs.col(a);
        const Eigen::MatrixXd blk = z1.transpose() * (s / n).asDiagonal() * z1;
        hess.block(a * block, b * block, block, block) = blk;
        hess.block(b * block, a * block, block, block) = blk.transpose();
      }
      hess.block(a * block, a * block, h, h).diagonal().array() += 2.0 * ridge;
    }
    // The softmax is invariant to a shared bias shift; a tiny shift keeps the
    // system definite without affecting directions the gradient spans.
    hess.diagonal().array() += 1e-10;
    Eigen::VectorXd g(dim);
    for (Eigen::Index a = 0; a < k_classes; ++a) g.segment(a * block, block) = grad.row(a).transpose();
    const Eigen::VectorXd d = hess.ldlt().solve(-g);
    Eigen::MatrixXd direction(k_classes, block);
    for (Eigen::Index a = 0; a < k_classes; ++a) direction.row(a) = d.segment(a * block, block).transpose();

    double step = 1.0;
    bool accepted = false;
    Eigen::MatrixXd trial_dlogits, trial_probs;
    double trial_data = 0.0;
    while (step >= 1e-20) {
      Eigen::MatrixXd trial = theta + step * direction;
      const double trial_value = objective(trial, &trial_dlogits, &trial_probs, &trial_data);
      if (std::isfinite(trial_value) && trial_value <= value) {
        theta = std::move(trial);
        value = trial_value;
        data_loss = trial_data;
        dlogits.swap(trial_dlogits);
        probs.swap(trial_probs);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++steps;
    if (!accepted) {
      // No representable descent step remains: numerically stationary.
      converged = true;
      break;
    }
  }
  const double loss = data_loss;
  const Eigen::MatrixXd v = theta.leftCols(h);
  const Eigen::VectorXd c = theta.col(h);

  const Eigen::MatrixXd w = v * whiten;
  const Eigen::VectorXd b = c - w * mean.transpose();
  std::size_t correct = 0;
  report.probe_train_loss = loss;
  report.generalized_loss = test_loss(w, b, &correct);
  report.accuracy = static_cast<double>(correct) / static_cast<double>(target.test.size());
  report.converged = converged;
  report.steps = steps;
  if (!std::isfinite(report.generalized_loss)) throw DivergenceError("probe test loss is not finite");

  ProbeResult result{std::move(report), fresh};
  matrix_view(result.model, head_w) = w;
  vector_view(result.model, head_b) = b;
  return result;
}

LossReport generalized_loss(const WeightVector& encoder, const ModelConfig& config, const TargetData& target,
                            std::uint64_t probe_seed, const ProbeOptions& options) {
  return probe(encoder, config, target, probe_seed, options).report;
}

double family_loss(const WeightVector& encoder, const ModelConfig& config, std::span<const TargetData> family,
                   std::uint64_t probe_seed, const ProbeOptions& options) {
  if (family.empty()) throw DataError("family loss needs at least one dataset");
  double sum = 0.0;
  for (const auto& t : family) sum += generalized_loss(encoder, config, t, probe_seed, options).generalized_loss;
  return sum / static_cast<double>(family.size());
}

namespace {

template <typename Cmp>
double pair_fraction(std::span<const double> in, std::span<const double> ex, Cmp cmp) {
  if (in.empty() || ex.empty()) throw DataError("PB needs nonempty loss lists");
  std::size_t wins = 0;
  for (double a : in)
    for (double b : ex)
      if (cmp(a, b)) ++wins;
  return static_cast<double>(wins) / static_cast<double>(in.size() * ex.size());
}

}  // namespace

double pb(std::span<const double> in_losses, std::span<const double> ex_losses) {
  return pair_fraction(in_losses, ex_losses, [](double a, double b) { return a <= b; });
}

double pb_strict(std::span<const double> in_losses, std::span<const double> ex_losses) {
  return pair_fraction(in_losses, ex_losses, [](double a, double b) { return a < b; });
}

std::vector<double> GroupLossTable::member_means() const {
  std::vector<double> out;
  const std::size_t t = std::max<std::size_t>(targets_per_member, 1);
  for (std::size_t i = 0; i + t <= rows.size(); i += t) {
    double s = 0.0;
    for (std::size_t j = 0; j < t; ++j) s += rows[i + j].generalized_loss;
    out.push_back(s / static_cast<double>(t));
  }
  return out;
}

GroupLossTable group_eval(const ModelGroup& group, std::span<const TargetData> targets, const ModelConfig& config,
                          std::uint64_t probe_seed, const ProbeOptions& options, int workers) {
  validate(group);
  if (targets.empty()) throw DataError("group evaluation needs at least one target");
  const std::size_t t = targets.size();
  auto reports = parallel_map(group.size() * t, workers, [&](std::size_t k) {
    return generalized_loss(group.members[k / t], config, targets[k % t], probe_seed, options);
  });
  GroupLossTable table;
  table.group_name = to_string(group.kind);
  table.targets_per_member = t;
  double sum = 0.0;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    table.rows.push_back({group.member_ids[k / t], group.member_sources[k / t], r.target_dataset_id,
                          r.generalized_loss, r.accuracy, r.converged});
    sum += r.generalized_loss;
  }
  table.aggregate = sum / static_cast<double>(table.rows.size());
  return table;
}

void write_csv_header(std::ostream& out) {
  out << "group,model_id,source_dataset,target_dataset,generalized_loss,accuracy,converged\n";
}

void write_csv(const GroupLossTable& table, std::ostream& out) {
  char buf[64];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g", r.generalized_loss, r.accuracy);
    out << table.group_name << ',' << r.model_id << ',' << r.source_dataset << ',' << r.target_dataset << ','
        << buf << ',' << (r.converged ? "true" : "false") << '\n';
  }
}

}  // namespace wrl
