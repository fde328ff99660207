#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wrl {

enum class RuleKind { LinearThreshold, BandMembership, SignParity };

std::string to_string(RuleKind kind);
RuleKind parse_rule_kind(const std::string& text);

struct TaskFamilySpec {
  std::string family_id;
  RuleKind rule_kind = RuleKind::LinearThreshold;
  int input_dim = 32;
  std::uint64_t shared_subspace_seed = 0;
  int num_datasets = 3;
};

struct DatasetSpec {
  std::string dataset_id;
  std::string family_id;
  std::uint64_t rule_params_seed = 0;
  int n_train = 4096;
  int n_test = 1024;
  int label_count = 2;
};

enum class Split { Train, Test };

struct LabeledSet {
  Eigen::MatrixXd inputs;  // rows are examples
  std::vector<int> labels;
  Split split = Split::Train;
  std::string dataset_id;
  std::string family_id;
  int label_count = 2;

  Eigen::Index size() const { return inputs.rows(); }
};

/// Dataset-specific parameters of a family rule.
struct RuleParams {
  RuleKind kind = RuleKind::LinearThreshold;
  Eigen::VectorXd direction;  // w for linear-threshold, v for band-membership
  double threshold = 0.0;     // band half-width
  int coord_a = -1;           // sign-parity coordinates
  int coord_b = -1;

  bool operator==(const RuleParams& other) const;
};

/// Throws DataError unless input_dim >= 8 and num_datasets >= 2.
void validate(const TaskFamilySpec& family);
/// Throws DataError unless n_train >= 64, n_test >= 256 and label_count == 2.
void validate(const DatasetSpec& spec);

RuleParams rule_params(const TaskFamilySpec& family, std::uint64_t rule_seed);
int apply_rule(const RuleParams& rule, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Label of the pretraining proxy rule: sign of the coordinate sum.
int proxy_label(const Eigen::Ref<const Eigen::VectorXd>& x);

struct GeneratedDataset {
  LabeledSet train;
  LabeledSet test;
  RuleParams rule;
  std::uint64_t effective_rule_seed = 0;
  int rule_regenerations = 0;  // rule seed perturbations needed to reach balance
};

GeneratedDataset gen_dataset(const DatasetSpec& spec, const TaskFamilySpec& family, std::uint64_t seed);

/// Uniform subsample without replacement, in permuted order.
LabeledSet subsample(const LabeledSet& set, int n, std::uint64_t seed);

/// Mixed pretraining corpus labeled by the proxy rule.
LabeledSet pretrain_corpus(std::span<const TaskFamilySpec> families, std::uint64_t seed, int size = 4096);

/// The three built-in families (nli-like, sentiment-like, topic-like analogs).
std::vector<TaskFamilySpec> builtin_families(std::uint64_t seed, int input_dim = 32, int datasets_per_family = 3);

/// Dataset specs of a family whose rule parameters are pairwise distinct.
std::vector<DatasetSpec> family_datasets(const TaskFamilySpec& family, std::uint64_t seed,
                                         int n_train = 4096, int n_test = 1024);

double positive_fraction(const LabeledSet& set);

/// CSV with header dataset_id,family_id,split,label,x0..x{d-1}.
void write_csv(const LabeledSet& set, std::ostream& out);

/// Binary cache using the WSV1 float64 little-endian encoding for inputs.
void write_binary(const LabeledSet& set, const std::filesystem::path& path);
LabeledSet read_binary(const std::filesystem::path& path);

}  // namespace wrl
