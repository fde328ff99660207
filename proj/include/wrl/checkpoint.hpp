#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wrl/weights.hpp"

namespace wrl {

enum class CheckpointRole { Pretrained, Finetuned, Derived };

std::string to_string(CheckpointRole role);
CheckpointRole parse_role(const std::string& text);

struct CheckpointManifest {
  std::string checkpoint_id;
  CheckpointRole role = CheckpointRole::Derived;
  std::optional<std::string> source_dataset_id;
  std::optional<std::string> family_id;
  std::uint64_t seed = 0;
  std::optional<std::string> parent_pretrained_id;
  std::map<std::string, std::string> hyperparams;
  std::map<std::string, double> metrics;
};

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// WSV1 encoding: header, segment table, length-prefixed little-endian
/// float64 payload, then a 32-byte SHA-256 over everything before it.
std::vector<std::uint8_t> encode_wsv1(const WeightVector& w);

/// Inverse of encode_wsv1. Throws IntegrityError on digest mismatch and
/// DataError on malformed framing. `model_config_id` is not part of the
/// format and comes back empty.
WeightVector decode_wsv1(std::span<const std::uint8_t> bytes);

/// Content id of `w`: the hex digest trailing its WSV1 encoding.
std::string content_id(const WeightVector& w);

/// Append-only checkpoint directory: `<id>.wsv` payload files plus an
/// `index.jsonl` with one manifest per line. One writer per store.
class CheckpointStore {
 public:
  explicit CheckpointStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Writes the payload and appends the manifest (skipped when the id is
  /// already indexed). Returns the content id.
  std::string save(const WeightVector& w, CheckpointManifest manifest);

  std::pair<WeightVector, CheckpointManifest> load(const std::string& checkpoint_id) const;

  bool contains(const std::string& checkpoint_id) const;
  std::vector<CheckpointManifest> index() const;
  std::filesystem::path payload_path(const std::string& checkpoint_id) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
};

std::string manifest_to_json_line(const CheckpointManifest& m);
CheckpointManifest manifest_from_json_line(const std::string& line);

}  // namespace wrl
