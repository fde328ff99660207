#include "wrl/weights.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "wrl/error.hpp"

namespace wrl {

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::EncoderWeight: return "encoder-weight";
    case SegmentKind::EncoderBias: return "encoder-bias";
    case SegmentKind::HeadWeight: return "head-weight";
    case SegmentKind::HeadBias: return "head-bias";
  }
  return "unknown";
}

bool is_head(SegmentKind kind) {
  return kind == SegmentKind::HeadWeight || kind == SegmentKind::HeadBias;
}

bool is_bias(SegmentKind kind) {
  return kind == SegmentKind::EncoderBias || kind == SegmentKind::HeadBias;
}

void validate(const WeightVector& w) {
  std::size_t cursor = 0;
  bool seen_head = false;
  for (const auto& seg : w.segments) {
    if (seg.offset != cursor) {
      throw DataError("segment '" + seg.name + "' does not start where the previous one ends");
    }
    const std::size_t shape_product = std::accumulate(
        seg.shape.begin(), seg.shape.end(), std::size_t{1}, std::multiplies<>());
    if (seg.shape.empty() || shape_product != seg.length) {
      throw DataError("segment '" + seg.name + "' length disagrees with its shape");
    }
    if (is_head(seg.kind)) {
      seen_head = true;
    } else if (seen_head) {
      throw DataError("encoder segment '" + seg.name + "' follows the head block");
    }
    cursor += seg.length;
  }
  if (cursor != static_cast<std::size_t>(w.values.size())) {
    throw DataError("segment table covers " + std::to_string(cursor) + " values but vector has " +
                    std::to_string(w.values.size()));
  }
  for (Eigen::Index i = 0; i < w.values.size(); ++i) {
    if (!std::isfinite(w.values[i])) {
      throw DataError("non-finite value at index " + std::to_string(i));
    }
  }
}

bool has_head(const WeightVector& w) {
  return std::any_of(w.segments.begin(), w.segments.end(),
                     [](const ParamSegment& s) { return is_head(s.kind); });
}

std::size_t encoder_length(const WeightVector& w) {
  std::size_t n = 0;
  for (const auto& seg : w.segments) {
    if (!is_head(seg.kind)) n += seg.length;
  }
  return n;
}

std::size_t segment_count(const WeightVector& w, SegmentKind kind) {
  return static_cast<std::size_t>(std::count_if(
      w.segments.begin(), w.segments.end(), [kind](const ParamSegment& s) { return s.kind == kind; }));
}

const ParamSegment& find_segment(const WeightVector& w, std::string_view name) {
  for (const auto& seg : w.segments) {
    if (seg.name == name) return seg;
  }
  throw DataError("no segment named '" + std::string(name) + "'");
}

namespace {

void require_matrix(const ParamSegment& seg) {
  if (seg.shape.size() != 2) throw DataError("segment '" + seg.name + "' is not a matrix");
}

}  // namespace

Eigen::Map<const RowMajorMatrixXd> matrix_view(const WeightVector& w, const ParamSegment& seg) {
  require_matrix(seg);
  return {w.values.data() + seg.offset, seg.shape[0], seg.shape[1]};
}

Eigen::Map<RowMajorMatrixXd> matrix_view(WeightVector& w, const ParamSegment& seg) {
  require_matrix(seg);
  return {w.values.data() + seg.offset, seg.shape[0], seg.shape[1]};
}

Eigen::Map<const Eigen::VectorXd> vector_view(const WeightVector& w, const ParamSegment& seg) {
  return {w.values.data() + seg.offset, static_cast<Eigen::Index>(seg.length)};
}

Eigen::Map<Eigen::VectorXd> vector_view(WeightVector& w, const ParamSegment& seg) {
  return {w.values.data() + seg.offset, static_cast<Eigen::Index>(seg.length)};
}

WeightVector strip_head(const WeightVector& w) {
  if (!has_head(w)) throw DataError("vector has no head segments to strip");
  WeightVector out;
  out.model_config_id = w.model_config_id;
  for (const auto& seg : w.segments) {
    if (!is_head(seg.kind)) out.segments.push_back(seg);
  }
  out.values = w.values.head(static_cast<Eigen::Index>(encoder_length(w)));
  return out;
}

bool same_layout(const WeightVector& a, const WeightVector& b) {
  return a.segments == b.segments && a.values.size() == b.values.size();
}

bool same_encoder_layout(const WeightVector& a, const WeightVector& b) {
  std::vector<ParamSegment> ea, eb;
  for (const auto& s : a.segments) if (!is_head(s.kind)) ea.push_back(s);
  for (const auto& s : b.segments) if (!is_head(s.kind)) eb.push_back(s);
  return ea == eb;
}

WeightVector with_values(const WeightVector& w, Eigen::VectorXd values) {
  if (values.size() != w.values.size()) throw DataError("replacement values have the wrong length");
  WeightVector out{std::move(values), w.segments, w.model_config_id};
  return out;
}

}  // namespace wrl
