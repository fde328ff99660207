// Suite-level properties, read from the output of the acceptance runs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "wrl/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path run_dir(const char* name) {
  const char* root = std::getenv("WRL_ACCEPTANCE_DIR");
  return fs::path(root ? root : "acceptance-work") / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class SuiteOutput : public ::testing::Test {
 protected:
  void SetUp() override {
    const fs::path path = run_dir("run-a") / "summary.json";
    if (!fs::exists(path)) GTEST_SKIP() << "no acceptance output at " << path;
    doc_ = json::parse(slurp(path));
  }
  double v(const std::string& key) const { return doc_.at("summary").at(key).get<double>(); }
  json doc_;
};

}  // namespace

TEST_F(SuiteOutput, LineagesClusterApart) { EXPECT_GE(v("clustering.lineage.accuracy"), 0.95); }

TEST_F(SuiteOutput, HullSamplesHoldUpAgainstEx) {
  for (const char* g : {"same-dataset", "same-task", "general"}) {
    const std::string k = std::string("pb.") + g;
    EXPECT_GE(v(k + ".in_prime_vs_ex"), v(k + ".in_vs_ex") - 0.05) << g;
  }
}

TEST_F(SuiteOutput, ExtrapolationDegradesOnBothSides) {
  EXPECT_GE(v("extrapolation.loss_alpha32_over_alpha1"), 2.0);
  EXPECT_GT(v("extrapolation.positive_far_mean"), v("extrapolation.interior_mean"));
  EXPECT_GT(v("extrapolation.negative_far_mean"), v("extrapolation.interior_mean"));
}

TEST_F(SuiteOutput, InterpolationEndpointsMatchModels) {
  EXPECT_LE(v("interpolation.endpoint_max_abs_diff"), 1e-9);
}

TEST_F(SuiteOutput, FusionCountsAddUp) {
  for (const char* variant : {"full", "few-shot"}) {
    const std::string k = std::string("fusion.") + variant;
    const double total = v(k + ".wins") + v(k + ".ties") + v(k + ".losses");
    EXPECT_GT(total, 0.0);
    EXPECT_DOUBLE_EQ(v(k + ".nonlosing_fraction"), (v(k + ".wins") + v(k + ".ties")) / total);
  }
}

TEST_F(SuiteOutput, EverySummaryKeyHasASourceTable) {
  const fs::path dir = run_dir("run-a");
  for (const auto& [key, source] : doc_.at("sources").items()) {
    EXPECT_TRUE(fs::exists(dir / source.get<std::string>())) << key;
    EXPECT_TRUE(doc_.at("summary").contains(key)) << key;
  }
  EXPECT_EQ(doc_.at("sources").size(), doc_.at("summary").size());
}

TEST_F(SuiteOutput, EveryFigureIsBackedByATable) {
  const fs::path dir = run_dir("run-a");
  std::size_t figures = 0;
  for (const auto& entry : fs::directory_iterator(dir / "figures")) {
    ++figures;
    const fs::path table = dir / "tables" / (entry.path().stem().string() + ".csv");
    ASSERT_TRUE(fs::exists(table)) << entry.path();
    EXPECT_FALSE(wrl::read_csv(table).rows.empty()) << table;
  }
  EXPECT_GT(figures, 0u);
}

TEST_F(SuiteOutput, TablesAreByteIdenticalAcrossRuns) {
  const fs::path a = run_dir("run-a") / "tables", b = run_dir("run-b") / "tables";
  std::size_t tables = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++tables;
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path().filename();
  }
  EXPECT_GT(tables, 0u);
}
