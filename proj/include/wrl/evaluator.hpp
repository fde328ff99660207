#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wrl/group.hpp"
#include "wrl/model.hpp"
#include "wrl/synthgen.hpp"

namespace wrl {

/// A probing target: the dataset spec with its generated splits.
struct TargetData {
  DatasetSpec spec;
  LabeledSet train;
  LabeledSet test;
};

struct ProbeOptions {
  int step_cap = 5000;
  double grad_tol = 1e-6;
  double ridge = 1e-3;  // on head weights in whitened feature coordinates
};

struct LossReport {
  std::string model_id;
  std::string target_dataset_id;
  double probe_train_loss = 0.0;
  double generalized_loss = 0.0;  // test cross-entropy after probing
  double accuracy = 0.0;
  std::uint64_t probe_seed = 0;
  bool converged = false;
  int steps = 0;
  double initial_train_loss = 0.0;
  double initial_test_loss = 0.0;
};

struct ProbeResult {
  LossReport report;
  WeightVector model;  // encoder with the fitted head
};

/// Linear probe of a frozen, head-free encoder on `target`.
///
/// The head is fit on whitened features by damped Newton steps, halving
/// the step until the objective does not increase. The objective is the
/// train cross-entropy plus `ridge` times the squared head weights. Stops
/// when the gradient norm drops to `grad_tol` or after `step_cap` steps;
/// the latter clears `converged`.
ProbeResult probe(const WeightVector& encoder, const ModelConfig& config, const TargetData& target,
                  std::uint64_t probe_seed, const ProbeOptions& options = {});

LossReport generalized_loss(const WeightVector& encoder, const ModelConfig& config, const TargetData& target,
                            std::uint64_t probe_seed, const ProbeOptions& options = {});

/// Mean generalized loss over a family's datasets.
double family_loss(const WeightVector& encoder, const ModelConfig& config, std::span<const TargetData> family,
                   std::uint64_t probe_seed, const ProbeOptions& options = {});

/// Fraction of pairs (i, j) with in[i] <= ex[j]. Ties count for `in`.
double pb(std::span<const double> in_losses, std::span<const double> ex_losses);

/// Same with strict inequality.
double pb_strict(std::span<const double> in_losses, std::span<const double> ex_losses);

struct GroupLossRow {
  std::string model_id;
  std::string source_dataset;
  std::string target_dataset;
  double generalized_loss = 0.0;
  double accuracy = 0.0;
  bool converged = false;
};

struct GroupLossTable {
  std::string group_name;
  std::vector<GroupLossRow> rows;
  double aggregate = 0.0;  // mean generalized loss over rows
  std::size_t targets_per_member = 1;  // rows are member-major

  /// Per-member mean over targets, in member order.
  std::vector<double> member_means() const;
};

GroupLossTable group_eval(const ModelGroup& group, std::span<const TargetData> targets, const ModelConfig& config,
                          std::uint64_t probe_seed, const ProbeOptions& options = {}, int workers = 1);

void write_csv_header(std::ostream& out);
void write_csv(const GroupLossTable& table, std::ostream& out);

}  // namespace wrl
