#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "wrl/error.hpp"
#include "wrl/synthgen.hpp"

using namespace wrl;

namespace {

const TaskFamilySpec& family(RuleKind kind) {
  static const std::vector<TaskFamilySpec> families = builtin_families(17);
  for (const auto& f : families)
    if (f.rule_kind == kind) return f;
  throw std::logic_error("missing family");
}

GeneratedDataset make(RuleKind kind, int n_train = 1000, std::uint64_t seed = 3) {
  const TaskFamilySpec& f = family(kind);
  DatasetSpec spec{f.family_id + "-x", f.family_id, 11, n_train, 512, 2};
  return gen_dataset(spec, f, seed);
}

int positives(const LabeledSet& s) { return static_cast<int>(std::count(s.labels.begin(), s.labels.end(), 1)); }

}  // namespace

TEST(Families, BuiltinsHaveDistinctRuleKinds) {
  const auto fams = builtin_families(1);
  ASSERT_EQ(fams.size(), 3u);
  std::set<RuleKind> kinds;
  for (const auto& f : fams) {
    kinds.insert(f.rule_kind);
    EXPECT_NO_THROW(validate(f));
  }
  EXPECT_EQ(kinds.size(), 3u);
  TaskFamilySpec bad = fams[0];
  bad.input_dim = 4;
  EXPECT_THROW(validate(bad), DataError);
  bad = fams[0];
  bad.num_datasets = 1;
  EXPECT_THROW(validate(bad), DataError);
  EXPECT_THROW(validate(DatasetSpec{"d", "f", 0, 32, 1024, 2}), DataError);
  EXPECT_THROW(validate(DatasetSpec{"d", "f", 0, 4096, 100, 2}), DataError);
}

TEST(GenDataset, DeterministicBytes) {
  for (RuleKind kind : {RuleKind::LinearThreshold, RuleKind::BandMembership, RuleKind::SignParity}) {
    const auto a = make(kind), b = make(kind);
    std::ostringstream sa, sb;
    write_csv(a.train, sa);
    write_csv(b.train, sb);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(a.test.inputs, b.test.inputs);
    EXPECT_EQ(a.rule, b.rule);
  }
}

TEST(GenDataset, LabelsFollowTheRule) {
  const auto d = make(RuleKind::LinearThreshold);
  for (Eigen::Index i = 0; i < d.train.size(); ++i) {
    const bool positive = d.rule.direction.dot(d.train.inputs.row(i).transpose()) > 0.0;
    EXPECT_EQ(d.train.labels[static_cast<std::size_t>(i)], positive ? 1 : 0);
  }
  const auto band = make(RuleKind::BandMembership);
  for (Eigen::Index i = 0; i < band.test.size(); ++i) {
    const bool inside = std::abs(band.rule.direction.dot(band.test.inputs.row(i).transpose())) < band.rule.threshold;
    EXPECT_EQ(band.test.labels[static_cast<std::size_t>(i)], inside ? 1 : 0);
  }
  const auto parity = make(RuleKind::SignParity);
  for (Eigen::Index i = 0; i < parity.train.size(); ++i) {
    const bool a = parity.train.inputs(i, parity.rule.coord_a) > 0.0;
    const bool b = parity.train.inputs(i, parity.rule.coord_b) > 0.0;
    EXPECT_EQ(parity.train.labels[static_cast<std::size_t>(i)], a != b ? 1 : 0);
  }
}

TEST(GenDataset, ClassBalance) {
  for (RuleKind kind : {RuleKind::LinearThreshold, RuleKind::BandMembership, RuleKind::SignParity}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto d = make(kind, 1000, seed);
      EXPECT_GE(positives(d.train), 400);
      EXPECT_LE(positives(d.train), 600);
      EXPECT_GE(positive_fraction(d.test), 0.4);
      EXPECT_LE(positive_fraction(d.test), 0.6);
      EXPECT_TRUE(d.train.inputs.allFinite());
    }
  }
}

TEST(FamilyDatasets, SiblingRulesDiffer) {
  for (const auto& f : builtin_families(23)) {
    const auto specs = family_datasets(f, 5);
    ASSERT_EQ(specs.size(), static_cast<std::size_t>(f.num_datasets));
    std::vector<RuleParams> rules;
    for (const auto& s : specs) rules.push_back(rule_params(f, s.rule_params_seed));
    for (std::size_t i = 0; i < rules.size(); ++i)
      for (std::size_t j = i + 1; j < rules.size(); ++j) {
        EXPECT_FALSE(rules[i] == rules[j]);
        if (f.rule_kind != RuleKind::SignParity) {
          const double c = rules[i].direction.normalized().dot(rules[j].direction.normalized());
          EXPECT_LE(std::abs(c), 0.8 + 1e-12);
        }
      }
  }
}

TEST(Subsample, Properties) {
  const auto d = make(RuleKind::LinearThreshold);
  const auto a = subsample(d.train, 200, 1), b = subsample(d.train, 200, 1), c = subsample(d.train, 200, 2);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.size(), 200);
  EXPECT_NE(a.inputs, c.inputs);
  const auto all = subsample(d.train, static_cast<int>(d.train.size()), 4);
  EXPECT_EQ(all.size(), d.train.size());
  EXPECT_EQ(positives(all), positives(d.train));
  EXPECT_NEAR(all.inputs.sum(), d.train.inputs.sum(), 1e-9);
  EXPECT_THROW(subsample(d.train, static_cast<int>(d.train.size()) + 1, 0), DataError);
}

TEST(PretrainCorpus, SizeDeterminismAndDistinctRule) {
  const auto fams = builtin_families(31);
  const auto a = pretrain_corpus(fams, 8, 2000), b = pretrain_corpus(fams, 8, 2000);
  EXPECT_EQ(a.size(), 2000);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    EXPECT_EQ(a.labels[static_cast<std::size_t>(i)], proxy_label(a.inputs.row(i).transpose()));
  for (const auto& f : fams) {
    for (const auto& spec : family_datasets(f, 2)) {
      const RuleParams r = rule_params(f, spec.rule_params_seed);
      int differ = 0;
      for (Eigen::Index i = 0; i < a.size(); ++i)
        differ += apply_rule(r, a.inputs.row(i).transpose()) != a.labels[static_cast<std::size_t>(i)] ? 1 : 0;
      EXPECT_GE(differ, a.size() / 4) << spec.dataset_id;
    }
  }
}

TEST(Serialization, CsvHeaderAndBinaryRoundTrip) {
  const auto d = make(RuleKind::SignParity, 100);
  std::ostringstream out;
  write_csv(d.test, out);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')).rfind("dataset_id,family_id,split,label,x0,x1,", 0), 0u);
  EXPECT_EQ(static_cast<Eigen::Index>(std::count(text.begin(), text.end(), '\n')), d.test.size() + 1);

  const auto path = std::filesystem::temp_directory_path() / ("wrl-set-" + std::to_string(::getpid()) + ".bin");
  write_binary(d.train, path);
  const LabeledSet back = read_binary(path);
  EXPECT_EQ(back.inputs, d.train.inputs);
  EXPECT_EQ(back.labels, d.train.labels);
  EXPECT_EQ(back.dataset_id, d.train.dataset_id);
  EXPECT_EQ(back.split, d.train.split);
  std::filesystem::remove(path);
}
