#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace wrl {

enum class SegmentKind : std::uint8_t {
  EncoderWeight = 0,
  EncoderBias = 1,
  HeadWeight = 2,
  HeadBias = 3,
};

std::string_view to_string(SegmentKind kind);
bool is_head(SegmentKind kind);
bool is_bias(SegmentKind kind);

struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::vector<std::uint32_t> shape;
  SegmentKind kind = SegmentKind::EncoderWeight;

  friend bool operator==(const ParamSegment&, const ParamSegment&) = default;
};

using RowMajorMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat parameter vector of an encoder (+ optional classification head).
///
/// Segments partition `values` in order; head segments, when present, are
/// always the trailing block so removing the head is a truncation.
struct WeightVector {
  Eigen::VectorXd values;
  std::vector<ParamSegment> segments;
  std::string model_config_id;
};

/// Throws DataError when the segment table does not partition `values`,
/// shapes disagree with lengths, heads are not trailing, or a value is
/// non-finite.
void validate(const WeightVector& w);

bool has_head(const WeightVector& w);
std::size_t encoder_length(const WeightVector& w);
std::size_t segment_count(const WeightVector& w, SegmentKind kind);

const ParamSegment& find_segment(const WeightVector& w, std::string_view name);

/// Weight-matrix segments are stored row-major as [out, in].
Eigen::Map<const RowMajorMatrixXd> matrix_view(const WeightVector& w, const ParamSegment& seg);
Eigen::Map<RowMajorMatrixXd> matrix_view(WeightVector& w, const ParamSegment& seg);

Eigen::Map<const Eigen::VectorXd> vector_view(const WeightVector& w, const ParamSegment& seg);
Eigen::Map<Eigen::VectorXd> vector_view(WeightVector& w, const ParamSegment& seg);

/// Encoder-only copy. Throws DataError if `w` has no head.
WeightVector strip_head(const WeightVector& w);

/// Same segment layout (names, shapes, kinds, offsets).
bool same_layout(const WeightVector& a, const WeightVector& b);

/// Encoder segments only, compared elementwise.
bool same_encoder_layout(const WeightVector& a, const WeightVector& b);

/// Copy of `w` with `values` replaced; length must match.
WeightVector with_values(const WeightVector& w, Eigen::VectorXd values);

}  // namespace wrl
