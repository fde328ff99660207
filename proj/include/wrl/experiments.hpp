#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wrl/checkpoint.hpp"
#include "wrl/evaluator.hpp"
#include "wrl/model.hpp"
#include "wrl/report.hpp"
#include "wrl/synthgen.hpp"

namespace wrl {

enum class Granularity { SameDataset, SameTask, General };
std::string to_string(Granularity g);
Granularity parse_granularity(const std::string& text);
inline constexpr Granularity kAllGranularities[] = {Granularity::SameDataset, Granularity::SameTask,
                                                    Granularity::General};

struct ExperimentPlan {
  std::string name = "desk";
  Granularity granularity = Granularity::SameDataset;
  std::vector<TaskFamilySpec> families;  // empty: builtin families
  int seeds_per_dataset = 5;
  int clustering_seeds = 8;
  std::vector<std::string> targets;  // empty: every dataset
  std::filesystem::path output_dir = "wrl-out";
  std::uint64_t seed = 0;

  int n_train = 4096;
  int n_test = 1024;
  int corpus_size = 4096;
  TrainConfig pretrain{TrainMode::Full, 0.05, 1500, 128, 0, std::nullopt};
  TrainConfig finetune{TrainMode::Full, 0.5, 800, 128, 0, std::nullopt};
  TrainConfig fusion{TrainMode::BiasOnly, 0.5, 500, 128, 0, std::nullopt};
  ProbeOptions probe;

  std::vector<int> subsample_sizes{256, 512, 1024};
  int subsample_seeds = 2;
  int lineage_seeds = 2;
  int interpolation_points = 11;
  int task_pair_seeds = 2;
  int extrapolation_pairs = 3;  // per target dataset
  std::vector<double> radii{0.25, 0.5, 1, 2, 4, 8};
  int random_directions = 5;
  int few_shot_examples = 64;
  int fusion_seeds = 3;
  double tie_tolerance = 0.005;  // accuracy difference counted as a tie
  int workers = 1;
};

/// Throws DataError unless seeds_per_dataset >= 2, the seed counts are
/// consistent and every named target exists.
void validate(const ExperimentPlan& plan);
/// JSON plan; absent keys keep their defaults. DataError on bad input.
ExperimentPlan plan_from_json(const std::string& text);
ExperimentPlan load_plan(const std::filesystem::path& path);
std::string plan_to_json(const ExperimentPlan& plan);

struct ExperimentReport {
  std::string plan_name;
  std::map<std::string, CsvTable> tables;
  std::map<std::string, std::string> figures;  // name -> SVG text
  std::map<std::string, double> summary;
  std::map<std::string, std::string> summary_source;  // summary key -> table name
  std::map<std::string, double> timings;  // seconds; kept out of the summary

  /// Records a summary value and the table it is computed from.
  void set(const std::string& key, double value, const std::string& table);
  void merge(const ExperimentReport& other);
};

std::string summary_json(const ExperimentReport& report);
/// Writes tables/*.csv, figures/*.svg, summary.json and timings.json.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

struct GridModel {
  WeightVector encoder;
  std::string id;
  std::string source;  // dataset id
  std::string family;
  int seed_index = 0;
  int lineage = 0;
};

/// Shared state of one plan: data, pretrained lineages, the fine-tune grid
/// and a probe cache keyed by (content id, target). With a store attached,
/// trained models are saved and reused across processes.
class Workspace {
 public:
  explicit Workspace(ExperimentPlan plan, CheckpointStore* store = nullptr);

  const ExperimentPlan& plan() const { return plan_; }
  const ModelConfig& config() const { return config_; }
  const std::vector<TaskFamilySpec>& families() const { return families_; }
  const std::vector<TargetData>& datasets() const { return datasets_; }
  const TargetData& dataset(const std::string& id) const;
  std::vector<std::string> target_ids() const;
  std::vector<std::string> family_dataset_ids(const std::string& family_id) const;

  std::uint64_t job_seed(const std::string& job) const;

  /// Head-free pretrained encoder of the given lineage.
  const WeightVector& pretrained(int lineage = 0);
  const GridModel& finetuned(const std::string& dataset_id, int seed_index, int lineage = 0);
  /// First `seeds` fine-tuned models of every dataset, dataset-major.
  std::vector<GridModel> grid(int seeds, int lineage = 0);
  /// Fine-tuned on a subsample of `size` examples.
  GridModel subsampled(const std::string& dataset_id, int size, int seed_index);
  /// Store checkpoint id of a fine-tuned grid model; empty without a store.
  std::string checkpoint_id(const std::string& dataset_id, int seed_index, int lineage = 0) const;

  /// Probe results for every (encoder, target), encoder-major. Cached.
  std::vector<LossReport> losses(const std::vector<const WeightVector*>& encoders,
                                 const std::vector<std::string>& targets);
  LossReport loss(const WeightVector& encoder, const std::string& target);
  std::size_t probes_run() const { return probes_run_; }

 private:
  std::optional<WeightVector> lookup(const std::string& job) const;
  void record(const std::string& job, const WeightVector& w, CheckpointRole role, const std::string& dataset_id,
              int lineage);
  WeightVector train_or_load(const std::string& job, CheckpointRole role, const std::string& dataset_id,
                             int lineage, const std::function<WeightVector()>& train);
  GridModel make_grid_model(const WeightVector& full, const std::string& dataset_id, int seed_index,
                            int lineage) const;

  ExperimentPlan plan_;
  CheckpointStore* store_;
  ModelConfig config_;
  std::vector<TaskFamilySpec> families_;
  std::vector<TargetData> datasets_;
  std::map<int, WeightVector> pretrained_;
  std::map<std::string, GridModel> finetuned_;
  std::map<std::string, LossReport> cache_;
  std::map<std::string, std::string> job_index_;
  std::size_t probes_run_ = 0;
};

ExperimentReport run_clustering_suite(Workspace& ws);
ExperimentReport run_interpolation_suite(Workspace& ws, const std::vector<Granularity>& levels);
ExperimentReport run_pb_suite(Workspace& ws, const std::vector<Granularity>& levels);
ExperimentReport run_extrapolation_suite(Workspace& ws);
ExperimentReport run_edge_suite(Workspace& ws, const std::vector<Granularity>& levels);
ExperimentReport run_fusion_suite(Workspace& ws);
/// Every suite at every granularity.
ExperimentReport run_all(Workspace& ws);

}  // namespace wrl
