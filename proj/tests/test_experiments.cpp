#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>
#include <json.hpp>

#include "wrl/error.hpp"
#include "wrl/experiments.hpp"

using namespace wrl;
namespace fs = std::filesystem;

namespace {

ExperimentPlan tiny_plan() {
  ExperimentPlan p;
  p.name = "tiny";
  p.n_train = 256;
  p.n_test = 256;
  p.corpus_size = 512;
  p.pretrain.steps = 100;
  p.finetune.steps = 100;
  p.fusion.steps = 50;
  p.seeds_per_dataset = 2;
  p.clustering_seeds = 2;
  p.lineage_seeds = 1;
  p.subsample_sizes = {64, 128};
  p.subsample_seeds = 1;
  p.task_pair_seeds = 1;
  p.extrapolation_pairs = 1;
  p.random_directions = 2;
  p.fusion_seeds = 1;
  p.seed = 11;
  return p;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wrl-exp-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Plan, DefaultsValidateAndRoundTrip) {
  const ExperimentPlan p;
  EXPECT_NO_THROW(validate(p));
  EXPECT_EQ(p.radii, (std::vector<double>{0.25, 0.5, 1, 2, 4, 8}));
  const std::string text = plan_to_json(p);
  EXPECT_EQ(plan_to_json(plan_from_json(text)), text);
  const ExperimentPlan t = tiny_plan();
  EXPECT_EQ(plan_to_json(plan_from_json(plan_to_json(t))), plan_to_json(t));
}

TEST(Plan, PartialJsonKeepsDefaults) {
  const ExperimentPlan p = plan_from_json(R"({"name": "x", "seed": 9, "finetune": {"steps": 10}})");
  EXPECT_EQ(p.name, "x");
  EXPECT_EQ(p.seed, 9u);
  EXPECT_EQ(p.finetune.steps, 10);
  EXPECT_EQ(p.finetune.learning_rate, ExperimentPlan{}.finetune.learning_rate);
  EXPECT_EQ(p.few_shot_examples, 64);
}

TEST(Plan, RejectsBadInput) {
  EXPECT_THROW(plan_from_json("{"), DataError);
  EXPECT_THROW(plan_from_json("[1, 2]"), DataError);
  EXPECT_THROW(plan_from_json(R"({"unknown_key": 1})"), DataError);
  EXPECT_THROW(plan_from_json(R"({"granularity": "sideways"})"), DataError);
  EXPECT_THROW(plan_from_json(R"({"seeds_per_dataset": 1})"), DataError);
  EXPECT_THROW(load_plan("/nonexistent/plan.json"), DataError);
  ExperimentPlan p;
  p.targets = {"no-such-dataset"};
  EXPECT_THROW(Workspace{p}, DataError);
}

TEST(Plan, GranularityNames) {
  for (Granularity g : kAllGranularities) EXPECT_EQ(parse_granularity(to_string(g)), g);
  EXPECT_EQ(to_string(Granularity::SameTask), "same-task");
}

TEST(Report, SummaryJsonAndLayout) {
  ExperimentReport r;
  r.plan_name = "p";
  CsvTable t;
  t.header = {"x", "y", "std"};
  t.add_row({"0", "1", "0"});
  t.add_row({"1", "2", "0"});
  r.tables["curve"] = t;
  r.figures["curve"] = emit_svg_lineplot(t, {});
  r.set("b.value", 2.0, "curve");
  r.set("a.value", 0.1, "curve");
  r.timings["suite"] = 1.5;

  const auto j = nlohmann::json::parse(summary_json(r));
  EXPECT_EQ(j.at("plan"), "p");
  EXPECT_EQ(j.at("summary").at("a.value"), 0.1);
  EXPECT_EQ(j.at("sources").at("b.value"), "tables/curve.csv");
  EXPECT_EQ(j.at("summary").begin().key(), "a.value");
  EXPECT_EQ(summary_json(r).find("suite"), std::string::npos);

  const fs::path dir = fresh_dir("layout");
  write_report(r, dir);
  EXPECT_TRUE(fs::exists(dir / "tables" / "curve.csv"));
  EXPECT_TRUE(fs::exists(dir / "figures" / "curve.svg"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "timings.json"));
  EXPECT_EQ(read_csv(dir / "tables" / "curve.csv").rows, t.rows);

  r.set("c.value", 1.0, "missing");
  EXPECT_THROW(write_report(r, dir), DataError);
  fs::remove_all(dir);

  ExperimentReport other;
  other.tables["curve"] = t;
  EXPECT_THROW(r.merge(other), DataError);
}

class TinySuites : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    store_dir_ = new fs::path(fresh_dir("store"));
    store_ = new CheckpointStore(*store_dir_);
    ws_ = new Workspace(tiny_plan(), store_);
  }
  static void TearDownTestSuite() {
    delete ws_;
    delete store_;
    fs::remove_all(*store_dir_);
    delete store_dir_;
  }
  static fs::path* store_dir_;
  static CheckpointStore* store_;
  static Workspace* ws_;
};

fs::path* TinySuites::store_dir_ = nullptr;
CheckpointStore* TinySuites::store_ = nullptr;
Workspace* TinySuites::ws_ = nullptr;

TEST_F(TinySuites, JobSeedsAreStableAndDistinct) {
  EXPECT_EQ(ws_->job_seed("a"), ws_->job_seed("a"));
  EXPECT_NE(ws_->job_seed("a"), ws_->job_seed("b"));
  EXPECT_EQ(ws_->datasets().size(), 9u);
  EXPECT_EQ(ws_->family_dataset_ids("nli").size(), 3u);
}

TEST_F(TinySuites, StoredModelsAreReused) {
  const auto grid = ws_->grid(2);
  ASSERT_EQ(grid.size(), 18u);
  const std::size_t before = store_->index().size();
  std::size_t finetuned = 0;
  for (const auto& m : store_->index()) finetuned += m.role == CheckpointRole::Finetuned ? 1 : 0;
  EXPECT_EQ(finetuned, 18u);

  Workspace again(tiny_plan(), store_);
  const auto reloaded = again.grid(2);
  EXPECT_EQ(store_->index().size(), before);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_EQ(reloaded[i].id, grid[i].id);
    EXPECT_EQ(reloaded[i].encoder.values, grid[i].encoder.values);
  }

  ExperimentPlan changed = tiny_plan();
  changed.finetune.learning_rate = 0.25;
  Workspace other(changed, store_);
  EXPECT_NE(other.finetuned(grid[0].source, 0).id, grid[0].id);
}

TEST_F(TinySuites, InterpolationIsDeterministicAndConsistent) {
  const ExperimentReport a = run_interpolation_suite(*ws_, {Granularity::SameDataset});
  Workspace fresh(tiny_plan(), store_);
  const ExperimentReport b = run_interpolation_suite(fresh, {Granularity::SameDataset});
  ASSERT_EQ(a.tables.size(), b.tables.size());
  for (const auto& [name, table] : a.tables) EXPECT_EQ(to_csv(table), to_csv(b.tables.at(name))) << name;
  EXPECT_EQ(summary_json(a), summary_json(b));

  EXPECT_LE(a.summary.at("interpolation.endpoint_max_abs_diff"), 1e-9);
  const CsvTable& pairs = a.tables.at("interpolation_pairs");
  std::size_t plain = 0;
  for (const auto& row : pairs.rows) plain += row[pairs.column("centroids")] == "0" ? 1 : 0;
  EXPECT_EQ(a.summary.at("interpolation.same-dataset.pairs"), static_cast<double>(plain));
  for (const auto& [key, table] : a.summary_source) EXPECT_TRUE(a.tables.count(table)) << key;

  const CsvTable& curve = a.tables.at("interpolation_curve_same-dataset");
  const auto means = curve.numeric_column("mean");
  EXPECT_DOUBLE_EQ(a.summary.at("interpolation.same-dataset.max_interior_mean"),
                   *std::max_element(means.begin() + 1, means.end() - 1));
}

TEST_F(TinySuites, PbAndEdgeSummariesAreInRange) {
  const ExperimentReport pb = run_pb_suite(*ws_, {Granularity::SameDataset});
  for (const char* k : {"pb.same-dataset.in_vs_ex", "pb.same-dataset.in_prime_vs_ex", "pb.same-dataset.in_prime_vs_in"}) {
    EXPECT_GE(pb.summary.at(k), 0.0);
    EXPECT_LE(pb.summary.at(k), 1.0);
  }
  const ExperimentReport edge = run_edge_suite(*ws_, {Granularity::SameDataset});
  const CsvTable& units = edge.tables.at("edge_units");
  EXPECT_FALSE(units.rows.empty());
  EXPECT_TRUE(edge.figures.count("edge_random_same-dataset"));
}

TEST_F(TinySuites, ExtrapolationUsesTheFixedSchedule) {
  const ExperimentReport r = run_extrapolation_suite(*ws_);
  EXPECT_EQ(r.summary.at("extrapolation.schedule.positive_first"), 1.0);
  EXPECT_EQ(r.summary.at("extrapolation.schedule.positive_last"), 32.0);
  EXPECT_EQ(r.summary.at("extrapolation.schedule.negative_first"), 0.0);
  EXPECT_EQ(r.summary.at("extrapolation.schedule.negative_last"), -31.0);
  std::set<double> alphas;
  const CsvTable& t = r.tables.at("extrapolation");
  for (double a : t.numeric_column("alpha")) alphas.insert(a);
  EXPECT_TRUE(alphas.count(32.0));
  EXPECT_TRUE(alphas.count(-31.0));
}
