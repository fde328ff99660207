#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wrl/group.hpp"
#include "wrl/weights.hpp"

namespace wrl {

enum class ScheduleKind { Interpolation, ExtrapolationPositive, ExtrapolationNegative, Custom };

std::string to_string(ScheduleKind kind);

struct AlphaSchedule {
  ScheduleKind kind = ScheduleKind::Interpolation;
  std::vector<double> values;
};

/// Strictly monotone; interpolation values inside [0, 1].
void validate(const AlphaSchedule& schedule);

/// `points` equally spaced values from 0 to 1.
AlphaSchedule interpolation_schedule(int points = 11);

struct ExtrapolationSchedule {
  AlphaSchedule positive;  // 2^(5j/9), j = 0..9: 1 -> 32
  AlphaSchedule negative;  // 1 - 2^(5j/9):          0 -> -31
};

ExtrapolationSchedule extrapolation_schedule();

struct CombinationWeights {
  std::vector<double> coefficients;
  std::vector<std::string> member_ids;
};

void validate(const CombinationWeights& weights);

/// sum_i a_i w_i over encoder segments. Terms are accumulated in a
/// canonical (id, coefficient) order, so the result does not depend on how
/// the pairs are listed.
WeightVector combine(const ModelGroup& group, const CombinationWeights& weights);

/// a * w1 + (1 - a) * w2 on encoder segments; a = 1 and a = 0 return the
/// encoders of w1 and w2 unchanged.
WeightVector interpolate(const WeightVector& w1, const WeightVector& w2, double alpha);
std::vector<WeightVector> interpolate_pair(const WeightVector& w1, const WeightVector& w2,
                                           const AlphaSchedule& schedule);

struct HullSample {
  WeightVector model;
  CombinationWeights weights;
};

/// Flat-Dirichlet draw over the simplex (normalized standard exponentials).
std::vector<double> flat_dirichlet(std::size_t k, std::uint64_t seed);

std::vector<HullSample> hull_sample(const ModelGroup& group, int m, std::uint64_t seed);

WeightVector centroid(const ModelGroup& group);

struct FilteredCentroid {
  WeightVector model;
  std::size_t used = 0;
  std::size_t excluded = 0;
  std::string provenance;
};

/// Centroid of the members whose source dataset is not `target_dataset_id`.
FilteredCentroid exclude_target_centroid(const ModelGroup& group, const std::string& target_dataset_id);

/// Encoder-shaped direction: weight entries ~ N(0, 2/(fan_in+fan_out)),
/// bias entries standard normal scaled by the preceding weight's Xavier std.
/// Head entries are zero.
Eigen::VectorXd xavier_direction(const WeightVector& like, std::uint64_t seed);

/// pre + r with r a Xavier direction rescaled to `target_norm`.
WeightVector random_direction_model(const WeightVector& pre, double target_norm, std::uint64_t seed);

/// Mean Euclidean norm of the group's task vectors relative to `pre`.
double avg_distance(const ModelGroup& group, const WeightVector& pre);

enum class RadiusDirection { Origin, Random };

/// center + radius * unit_radius * direction for each radius. The origin
/// direction is -center / |center|; the random one is a normalized Xavier
/// direction drawn from `seed`.
std::vector<WeightVector> radius_scan(const WeightVector& center, RadiusDirection direction,
                                      std::span<const double> radii, double unit_radius, std::uint64_t seed);

}  // namespace wrl
