#include "wrl/regions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wrl/checkpoint.hpp"
#include "wrl/error.hpp"
#include "wrl/geometry.hpp"
#include "wrl/rng.hpp"

namespace wrl {

namespace {

WeightVector encoder_of(const WeightVector& w) { return has_head(w) ? strip_head(w) : w; }

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Interpolation: return "interpolation";
    case ScheduleKind::ExtrapolationPositive: return "extrapolation-positive";
    case ScheduleKind::ExtrapolationNegative: return "extrapolation-negative";
    case ScheduleKind::Custom: return "custom";
  }
  return "custom";
}

void validate(const AlphaSchedule& schedule) {
  if (schedule.values.empty()) throw DataError("alpha schedule is empty");
  const auto& v = schedule.values;
  const bool up = std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
  const bool down = std::adjacent_find(v.begin(), v.end(), std::less_equal<>()) == v.end();
  if (!up && !down) throw DataError("alpha schedule must be strictly monotone");
  if (schedule.kind == ScheduleKind::Interpolation &&
      std::any_of(v.begin(), v.end(), [](double a) { return a < 0.0 || a > 1.0; })) {
    throw DataError("interpolation alphas must lie in [0, 1]");
  }
}

AlphaSchedule interpolation_schedule(int points) {
  if (points < 2) throw DataError("interpolation grid needs at least 2 points");
  AlphaSchedule s{ScheduleKind::Interpolation, {}};
  for (int i = 0; i < points; ++i) s.values.push_back(static_cast<double>(i) / (points - 1));
  return s;
}

ExtrapolationSchedule extrapolation_schedule() {
  ExtrapolationSchedule s{{ScheduleKind::ExtrapolationPositive, {}}, {ScheduleKind::ExtrapolationNegative, {}}};
  for (int j = 0; j < 10; ++j) {
    const double step = std::pow(2.0, 5.0 * j / 9.0);
    s.positive.values.push_back(step);
    s.negative.values.push_back(1.0 - step);
  }
  return s;
}

void validate(const CombinationWeights& weights) {
  if (weights.coefficients.empty() || weights.coefficients.size() != weights.member_ids.size()) {
    throw DataError("combination weights need one coefficient per member");
  }
  double sum = 0.0;
  for (double a : weights.coefficients) {
    if (!(a >= 0.0)) throw DataError("convex combination coefficients must be non-negative");
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw DataError("combination coefficients must sum to 1");
}

WeightVector combine(const ModelGroup& group, const CombinationWeights& weights) {
  validate(group);
  validate(weights);
  std::vector<std::pair<std::string_view, double>> terms;
  std::vector<std::size_t> member_of;
  for (std::size_t i = 0; i < weights.member_ids.size(); ++i) {
    const auto it = std::find(group.member_ids.begin(), group.member_ids.end(), weights.member_ids[i]);
    if (it == group.member_ids.end()) throw DataError("member " + weights.member_ids[i] + " is not in the group");
    terms.emplace_back(weights.member_ids[i], weights.coefficients[i]);
    member_of.push_back(static_cast<std::size_t>(it - group.member_ids.begin()));
  }
  std::vector<std::size_t> order(terms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return terms[a] < terms[b]; });

  WeightVector out = encoder_of(group.members.front());
  out.values.setZero();
  for (auto k : order) {
    const auto& member = group.members[member_of[k]];
    out.values += terms[k].second * member.values.head(out.values.size());
  }
  return out;
}

WeightVector interpolate(const WeightVector& w1, const WeightVector& w2, double alpha) {
  if (!same_encoder_layout(w1, w2)) throw DataError("interpolation endpoints have different segment tables");
  if (alpha == 1.0) return encoder_of(w1);
  if (alpha == 0.0) return encoder_of(w2);
  WeightVector out = encoder_of(w1);
  out.values = alpha * out.values + (1.0 - alpha) * w2.values.head(out.values.size());
  return out;
}

std::vector<WeightVector> interpolate_pair(const WeightVector& w1, const WeightVector& w2,
                                           const AlphaSchedule& schedule) {
  validate(schedule);
  std::vector<WeightVector> out;
  out.reserve(schedule.values.size());
  for (double a : schedule.values) out.push_back(interpolate(w1, w2, a));
  return out;
}

std::vector<double> flat_dirichlet(std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> a(k);
  double sum = 0.0;
  for (auto& x : a) {
    x = expo(rng);
    sum += x;
  }
  for (auto& x : a) x /= sum;
  return a;
}

std::vector<HullSample> hull_sample(const ModelGroup& group, int m, std::uint64_t seed) {
  validate(group);
  if (group.size() < 2) throw DataError("hull sampling needs at least 2 members");
  if (m < 1) throw DataError("hull sampling needs m >= 1");
  std::vector<HullSample> out;
  for (int s = 0; s < m; ++s) {
    CombinationWeights cw{flat_dirichlet(group.size(), derive_seed(seed, static_cast<std::uint64_t>(s))),
                          group.member_ids};
    out.push_back({combine(group, cw), std::move(cw)});
  }
  return out;
}

WeightVector centroid(const ModelGroup& group) {
  validate(group);
  CombinationWeights cw{std::vector<double>(group.size(), 1.0 / static_cast<double>(group.size())), group.member_ids};
  return combine(group, cw);
}

FilteredCentroid exclude_target_centroid(const ModelGroup& group, const std::string& target_dataset_id) {
  validate(group);
  ModelGroup kept;
  kept.kind = group.kind;
  kept.config_id = group.config_id;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group.member_sources[i] == target_dataset_id) continue;
    kept.members.push_back(group.members[i]);
    kept.member_ids.push_back(group.member_ids[i]);
    kept.member_sources.push_back(group.member_sources[i]);
  }
  if (kept.members.empty()) throw DataError("no members left after excluding " + target_dataset_id);
  FilteredCentroid out;
  out.used = kept.size();
  out.excluded = group.size() - kept.size();
  out.provenance = "centroid of " + std::to_string(out.used) + " members excluding " + target_dataset_id + " (" +
                   std::to_string(out.excluded) + " removed)";
  out.model = centroid(kept);
  return out;
}

Eigen::VectorXd xavier_direction(const WeightVector& like, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(like.values.size());
  double scale = 1.0;
  for (const auto& seg : like.segments) {
    if (is_head(seg.kind)) continue;
    if (!is_bias(seg.kind)) {
      if (seg.shape.size() != 2) throw DataError("weight segment " + seg.name + " is not a matrix");
      scale = std::sqrt(2.0 / (static_cast<double>(seg.shape[0]) + static_cast<double>(seg.shape[1])));
    }
    for (std::size_t i = 0; i < seg.length; ++i) r[static_cast<Eigen::Index>(seg.offset + i)] = scale * normal(rng);
  }
  return r;
}

WeightVector random_direction_model(const WeightVector& pre, double target_norm, std::uint64_t seed) {
  if (!(target_norm > 0.0)) throw DataError("target norm must be positive");
  Eigen::VectorXd r = xavier_direction(pre, seed);
  r *= target_norm / r.norm();
  WeightVector out = pre;
  out.values += r;
  return out;
}

double avg_distance(const ModelGroup& group, const WeightVector& pre) {
  validate(group);
  double sum = 0.0;
  for (const auto& m : group.members) sum += task_vector(m, pre).norm();
  return sum / static_cast<double>(group.size());
}

std::vector<WeightVector> radius_scan(const WeightVector& center, RadiusDirection direction,
                                      std::span<const double> radii, double unit_radius, std::uint64_t seed) {
  if (!(unit_radius > 0.0)) throw DataError("unit radius must be positive");
  for (double r : radii) {
    if (!(r >= 0.0)) throw DataError("radii must be non-negative");
  }
  const WeightVector base = encoder_of(center);
  std::vector<WeightVector> out;
  if (direction == RadiusDirection::Origin) {
    const double norm = base.values.norm();
    if (norm == 0.0) throw DataError("origin direction is undefined for a zero-norm center");
    for (double r : radii) {
      WeightVector w = base;
      if (r != 0.0) w.values *= 1.0 - r * unit_radius / norm;
      out.push_back(std::move(w));
    }
    return out;
  }
  Eigen::VectorXd dir = xavier_direction(base, seed);
  dir.normalize();
  for (double r : radii) {
    WeightVector w = base;
    if (r != 0.0) w.values += (r * unit_radius) * dir;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace wrl
