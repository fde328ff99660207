#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wrl/checkpoint.hpp"
#include "wrl/error.hpp"
#include "wrl/evaluator.hpp"

using namespace wrl;

namespace {

struct Fixture {
  ModelConfig config;
  std::vector<TargetData> targets;
  WeightVector pre;
  WeightVector tuned;  // full model fine-tuned on targets[0]
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    const auto families = builtin_families(5);
    for (const auto& fam : {families[0], families[1]}) {
      for (const auto& spec : family_datasets(fam, 6, 1024, 512)) {
        auto d = gen_dataset(spec, fam, 7);
        out.targets.push_back({spec, std::move(d.train), std::move(d.test)});
      }
    }
    const auto corpus = pretrain_corpus(families, 8, 2048);
    out.pre = strip_head(pretrain(out.config, corpus, {TrainMode::Full, 0.05, 400, 128, 9, std::nullopt}));
    out.tuned = finetune(out.pre, out.config, out.targets[0].train, {TrainMode::Full, 0.5, 400, 128, 10, std::nullopt});
    return out;
  }();
  return f;
}

std::vector<double> random_losses(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(Pb, DocumentedExamples) {
  EXPECT_DOUBLE_EQ(pb(std::vector{0.5, 0.5}, std::vector{0.5, 0.5}), 1.0);
  EXPECT_DOUBLE_EQ(pb(std::vector{0.2, 0.2, 0.2}, std::vector{0.2, 0.2, 0.2}), 1.0);
  EXPECT_DOUBLE_EQ(pb(std::vector{0.1, 0.3}, std::vector{0.2, 0.4}), 0.75);
  EXPECT_DOUBLE_EQ(pb(std::vector{0.8, 0.9}, std::vector{0.2, 0.4}), 0.0);
  EXPECT_THROW(pb(std::vector<double>{}, std::vector{0.1}), DataError);
  EXPECT_THROW(pb(std::vector{0.1}, std::vector<double>{}), DataError);
}

TEST(Pb, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_losses(rng, 1 + static_cast<std::size_t>(trial % 13));
    auto ex = random_losses(rng, 1 + static_cast<std::size_t>(trial % 7));
    if (trial % 3 == 0) ex[0] = in[0];
    EXPECT_DOUBLE_EQ(pb(in, ex), oracle::pb_exhaustive(in, ex));
  }
}

TEST(Pb, SelfComparisonAndComplement) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_losses(rng, 9);
    const auto b = random_losses(rng, 6);
    // Distinct values: the diagonal and one triangle of the n x n pairs.
    EXPECT_DOUBLE_EQ(pb(a, a), 10.0 / 18.0);
    EXPECT_NEAR(pb(a, a) + pb_strict(a, a), 1.0, 1e-15);
    EXPECT_NEAR(pb(a, b) + pb_strict(b, a), 1.0, 1e-15);
  }
}

TEST(Probe, SeedsAgree) {
  const Fixture& f = fixture();
  const WeightVector enc = strip_head(f.tuned);
  double lo = 1e9, hi = -1e9;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LossReport r = generalized_loss(enc, f.config, f.targets[1], seed);
    EXPECT_TRUE(r.converged);
    lo = std::min(lo, r.generalized_loss);
    hi = std::max(hi, r.generalized_loss);
  }
  EXPECT_LE(hi - lo, 1e-3);
}

TEST(Probe, NeverEndsWorseThanItsStart) {
  const Fixture& f = fixture();
  for (const WeightVector* enc : {&f.pre}) {
    for (const auto& t : f.targets) {
      const LossReport r = generalized_loss(*enc, f.config, t, 3);
      EXPECT_LE(r.probe_train_loss, r.initial_train_loss) << t.spec.dataset_id;
      EXPECT_GE(r.generalized_loss, 0.0);
      EXPECT_GE(r.accuracy, 0.0);
      EXPECT_LE(r.accuracy, 1.0);
    }
  }
}

TEST(Probe, RecoversTheFineTuningLoss) {
  const Fixture& f = fixture();
  const double own = evaluate(f.tuned, f.config, f.targets[0].train).loss;
  ProbeOptions plain;
  plain.ridge = 0.0;
  plain.step_cap = 200;
  const LossReport r = generalized_loss(strip_head(f.tuned), f.config, f.targets[0], 4, plain);
  EXPECT_LE(r.probe_train_loss, own + 1e-3);
  // The default probe pays a small ridge penalty on separable features.
  const LossReport ridged = generalized_loss(strip_head(f.tuned), f.config, f.targets[0], 4);
  EXPECT_LE(ridged.probe_train_loss, own + 0.02);
}

TEST(Probe, FineTunedEncoderBeatsPretrained) {
  const Fixture& f = fixture();
  const LossReport tuned = generalized_loss(strip_head(f.tuned), f.config, f.targets[0], 5);
  const LossReport base = generalized_loss(f.pre, f.config, f.targets[0], 5);
  EXPECT_GT(tuned.accuracy, base.accuracy);
  EXPECT_LT(tuned.generalized_loss, base.generalized_loss);
}

TEST(Probe, RejectsHeadedEncoders) {
  const Fixture& f = fixture();
  EXPECT_THROW(generalized_loss(f.tuned, f.config, f.targets[0], 0), DataError);
}

TEST(FamilyLoss, MeanOfDatasetLosses) {
  const Fixture& f = fixture();
  const std::span<const TargetData> fam(f.targets.data(), 3);
  double sum = 0.0;
  for (const auto& t : fam) sum += generalized_loss(f.pre, f.config, t, 6).generalized_loss;
  EXPECT_NEAR(family_loss(f.pre, f.config, fam, 6), sum / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(family_loss(f.pre, f.config, fam.first(1), 6),
                   generalized_loss(f.pre, f.config, fam[0], 6).generalized_loss);
  std::vector<TargetData> reversed(fam.rbegin(), fam.rend());
  EXPECT_NEAR(family_loss(f.pre, f.config, reversed, 6), sum / 3.0, 1e-12);
  EXPECT_THROW(family_loss(f.pre, f.config, {}, 6), DataError);
}

TEST(GroupEval, RowsAggregateAndDeterminism) {
  const Fixture& f = fixture();
  const ModelGroup one = make_group(GroupKind::In, {f.pre}, {""}, "pre");
  const auto single = group_eval(one, std::span(f.targets).first(1), f.config, 1);
  EXPECT_EQ(single.rows.size(), 1u);

  const ModelGroup two = make_group(GroupKind::Ex, {f.pre, strip_head(f.tuned)}, {"", "x"}, "pair");
  const auto table = group_eval(two, f.targets, f.config, 1, {}, 2);
  ASSERT_EQ(table.rows.size(), 2 * f.targets.size());
  double sum = 0.0;
  for (const auto& r : table.rows) sum += r.generalized_loss;
  EXPECT_NEAR(table.aggregate, sum / static_cast<double>(table.rows.size()), 1e-12);
  const auto means = table.member_means();
  ASSERT_EQ(means.size(), 2u);
  EXPECT_NEAR((means[0] + means[1]) / 2.0, table.aggregate, 1e-12);
  EXPECT_EQ(table.rows[0].model_id, content_id(f.pre));

  const auto again = group_eval(two, f.targets, f.config, 1, {}, 1);
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    EXPECT_EQ(table.rows[i].generalized_loss, again.rows[i].generalized_loss);

  std::ostringstream out;
  write_csv_header(out);
  write_csv(table, out);
  const std::string text = out.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), table.rows.size() + 1);
}
