#pragma once

#include <string>
#include <vector>

#include "wrl/weights.hpp"

namespace wrl {

enum class GroupKind { In, Ex, InPrime };

std::string to_string(GroupKind kind);

/// Named collection of encoders sharing one layout.
struct ModelGroup {
  GroupKind kind = GroupKind::In;
  std::vector<std::string> member_ids;      // content ids
  std::vector<WeightVector> members;
  std::vector<std::string> member_sources;  // source dataset per member; empty for derived models
  std::string provenance;
  std::string config_id;

  std::size_t size() const { return members.size(); }
};

/// Builds a group, filling ids from content digests when `sources` is empty
/// or shorter than `members`.
ModelGroup make_group(GroupKind kind, std::vector<WeightVector> members, std::vector<std::string> sources,
                      std::string provenance);

/// Throws DataError unless nonempty with consistent lengths and layouts.
void validate(const ModelGroup& group);

/// JSON group definition: name, members, sources, provenance, config_id.
std::string group_to_json(const ModelGroup& group);

}  // namespace wrl
