#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wrl/checkpoint.hpp"
#include "wrl/error.hpp"
#include "wrl/model.hpp"
#include "wrl/rng.hpp"
#include "wrl/synthgen.hpp"

using namespace wrl;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.input_dim = 5;
  c.hidden_dims = {6, 4};
  return c;
}

LabeledSet random_batch(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  LabeledSet s;
  s.inputs.resize(n, dim);
  for (Eigen::Index i = 0; i < s.inputs.size(); ++i) s.inputs.data()[i] = normal(rng);
  for (int i = 0; i < n; ++i) s.labels.push_back(i % 2);
  return s;
}

GeneratedDataset linear_dataset() {
  const auto fams = builtin_families(3);
  const TaskFamilySpec& f = fams[0];
  return gen_dataset(DatasetSpec{"lin", f.family_id, 4, 2048, 512, 2}, f, 9);
}

}  // namespace

TEST(InitModel, XavierStatisticsAndDeterminism) {
  ModelConfig cfg;
  const WeightVector w = init_model(cfg, 1);
  EXPECT_NO_THROW(validate(w));
  EXPECT_EQ(static_cast<std::size_t>(w.values.size()), cfg.parameter_count());
  EXPECT_EQ(encoder_length(w), cfg.encoder_parameter_count());
  for (const auto& seg : w.segments)
    if (is_bias(seg.kind)) EXPECT_TRUE(vector_view(w, seg).isZero(0.0)) << seg.name;
  const auto layer = vector_view(w, find_segment(w, "enc1.weight"));
  ASSERT_EQ(layer.size(), 64 * 32);
  const double var = layer.squaredNorm() / static_cast<double>(layer.size());
  EXPECT_NEAR(var, 2.0 / 96.0, 0.2 * 2.0 / 96.0);
  EXPECT_EQ(init_model(cfg, 1).values, w.values);
  EXPECT_NE(init_model(cfg, 2).values, w.values);
}

TEST(LossAndGrad, BalancedUntrainedLossNearLn2) {
  ModelConfig cfg;
  const WeightVector w = attach_head(strip_head(init_model(cfg, 4)), cfg, 5);
  const auto batch = random_batch(512, cfg.input_dim, 6);
  EXPECT_NEAR(loss_and_grad(w, cfg, batch, TrainMode::Full).loss, std::log(2.0), 0.05);
}

TEST(LossAndGrad, MatchesCentralDifferences) {
  const ModelConfig cfg = tiny();
  const auto batch = random_batch(12, cfg.input_dim, 7);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    WeightVector w = init_model(cfg, seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.3);
    for (Eigen::Index i = 0; i < w.values.size(); ++i) w.values[i] += normal(rng);
    const auto analytic = loss_and_grad(w, cfg, batch, TrainMode::Full).grad;
    const auto f = [&](const Eigen::VectorXd& x) {
      return loss_and_grad(with_values(w, x), cfg, batch, TrainMode::Full).loss;
    };
    const Eigen::VectorXd numeric = oracle::central_difference(f, w.values, 1e-5);
    for (Eigen::Index i = 0; i < numeric.size(); ++i) {
      const double scale = std::max(std::abs(numeric[i]), 1e-6);
      EXPECT_LE(std::abs(analytic[i] - numeric[i]) / scale, 1e-4) << "coordinate " << i;
    }
  }
}

TEST(LossAndGrad, ModeMasks) {
  const ModelConfig cfg = tiny();
  const WeightVector w = init_model(cfg, 8);
  const auto batch = random_batch(16, cfg.input_dim, 9);
  const auto full = loss_and_grad(w, cfg, batch, TrainMode::Full).grad;
  const auto bias = loss_and_grad(w, cfg, batch, TrainMode::BiasOnly).grad;
  const auto head = loss_and_grad(w, cfg, batch, TrainMode::HeadOnly).grad;
  for (const auto& seg : w.segments) {
    const auto off = static_cast<Eigen::Index>(seg.offset), len = static_cast<Eigen::Index>(seg.length);
    const bool bias_trainable = is_head(seg.kind) || seg.kind == SegmentKind::EncoderBias;
    if (bias_trainable)
      EXPECT_EQ(bias.segment(off, len), full.segment(off, len)) << seg.name;
    else
      EXPECT_TRUE(bias.segment(off, len).isZero(0.0)) << seg.name;
    if (is_head(seg.kind))
      EXPECT_EQ(head.segment(off, len), full.segment(off, len)) << seg.name;
    else
      EXPECT_TRUE(head.segment(off, len).isZero(0.0)) << seg.name;
  }
  EXPECT_THROW(loss_and_grad(w, cfg, random_batch(4, 3, 1), TrainMode::Full), DataError);
}

TEST(Fit, HeadOnlyFullBatchIsMonotone) {
  ModelConfig cfg;
  const auto d = linear_dataset();
  const WeightVector start = attach_head(strip_head(init_model(cfg, 10)), cfg, 11);
  TrainConfig tc{TrainMode::HeadOnly, 0.05, 200, 4096, 1, std::nullopt};
  const auto r = fit(start, cfg, d.train, tc);
  for (std::size_t i = 1; i < r.step_losses.size(); ++i) EXPECT_LE(r.step_losses[i], r.step_losses[i - 1] + 1e-15);
  EXPECT_EQ(r.weights.values.head(static_cast<Eigen::Index>(encoder_length(start))),
            start.values.head(static_cast<Eigen::Index>(encoder_length(start))));
}

TEST(Fit, DivergenceIsReported) {
  ModelConfig cfg;
  const auto d = linear_dataset();
  const WeightVector start = attach_head(strip_head(init_model(cfg, 12)), cfg, 13);
  TrainConfig tc{TrainMode::Full, 1e6, 50, 128, 1, std::nullopt};
  EXPECT_THROW(fit(start, cfg, d.train, tc), DivergenceError);
  EXPECT_THROW(validate(TrainConfig{TrainMode::Full, 0.0, 5, 8, 0, std::nullopt}), DataError);
}

TEST(Pretrain, ReachesProxyAccuracyAndIsDeterministic) {
  ModelConfig cfg;
  const auto corpus = pretrain_corpus(builtin_families(2), 3, 2048);
  TrainConfig tc{TrainMode::Full, 0.05, 600, 128, 4, std::nullopt};
  const WeightVector a = pretrain(cfg, corpus, tc);
  EXPECT_NO_THROW(validate(a));
  EXPECT_GE(evaluate(a, cfg, corpus).accuracy, 0.9);
  EXPECT_EQ(pretrain(cfg, corpus, tc).values, a.values);
}

TEST(Finetune, FullAndBiasOnly) {
  ModelConfig cfg;
  const auto d = linear_dataset();
  const WeightVector pre = strip_head(init_model(cfg, 20));
  TrainConfig tc{TrainMode::Full, 0.5, 400, 128, 1, std::nullopt};
  const WeightVector a = finetune(pre, cfg, d.train, tc);
  EXPECT_GE(evaluate(a, cfg, d.train).accuracy, 0.95);
  tc.seed = 2;
  EXPECT_NE(content_id(finetune(pre, cfg, d.train, tc)), content_id(a));

  tc.mode = TrainMode::BiasOnly;
  tc.steps = 100;
  const WeightVector b = finetune(pre, cfg, d.train, tc);
  for (const auto& seg : pre.segments) {
    const auto before = vector_view(pre, seg);
    const auto after = vector_view(b, seg);
    if (seg.kind == SegmentKind::EncoderWeight) EXPECT_EQ(before, after) << seg.name;
  }
  EXPECT_THROW(finetune(a, cfg, d.train, tc), DataError);
}

TEST(Finetune, FewShotCapUsesSeededPrefix) {
  ModelConfig cfg;
  const auto d = linear_dataset();
  const WeightVector pre = strip_head(init_model(cfg, 21));
  TrainConfig tc{TrainMode::BiasOnly, 0.5, 50, 128, 7, 64};
  const WeightVector a = finetune(pre, cfg, d.train, tc);
  const WeightVector start = attach_head(pre, cfg, derive_seed(7, "head"));
  TrainConfig manual = tc;
  manual.max_examples.reset();
  const WeightVector b = fit(start, cfg, subsample(d.train, 64, derive_seed(7, "few-shot")), manual).weights;
  EXPECT_EQ(a.values, b.values);
}

TEST(Evaluate, HandComputedCrossEntropy) {
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dims = {2};
  WeightVector w = init_model(cfg, 0);
  w.values.setZero();
  // Identity-ish encoder, head reading the tanh features directly.
  auto w0 = matrix_view(w, find_segment(w, "enc0.weight"));
  w0 = Eigen::Matrix2d::Identity();
  auto hw = matrix_view(w, find_segment(w, "head.weight"));
  hw << 1.0, 0.0, 0.0, 1.0;
  LabeledSet s;
  s.inputs.resize(3, 2);
  s.inputs << 0.5, -0.5, -1.0, 2.0, 0.0, 0.0;
  s.labels = {0, 1, 1};
  double expected = 0.0;
  int correct = 0;
  for (int i = 0; i < 3; ++i) {
    const double z0 = std::tanh(s.inputs(i, 0)), z1 = std::tanh(s.inputs(i, 1));
    const double zy = s.labels[static_cast<std::size_t>(i)] == 0 ? z0 : z1;
    expected += -(zy - std::log(std::exp(z0) + std::exp(z1)));
    const int pred = z1 > z0 ? 1 : 0;
    correct += pred == s.labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  const Evaluation e = evaluate(w, cfg, s);
  EXPECT_NEAR(e.loss, expected / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(e.accuracy, correct / 3.0);
  EXPECT_THROW(evaluate(strip_head(w), cfg, s), DataError);
}

TEST(Evaluate, PerfectAndConstantPredictors) {
  ModelConfig cfg;
  cfg.input_dim = 8;
  cfg.hidden_dims = {1};
  const auto fams = builtin_families(3, 8);
  const auto d = gen_dataset(DatasetSpec{"lin", fams[0].family_id, 4, 512, 512, 2}, fams[0], 1);
  WeightVector w = init_model(cfg, 0);
  w.values.setZero();
  auto w0 = matrix_view(w, find_segment(w, "enc0.weight"));
  w0.row(0) = 100.0 * d.rule.direction.transpose();
  auto hw = matrix_view(w, find_segment(w, "head.weight"));
  hw << -1.0, 1.0;
  EXPECT_DOUBLE_EQ(evaluate(w, cfg, d.test).accuracy, 1.0);
  hw.setZero();
  vector_view(w, find_segment(w, "head.bias")) << 1.0, 0.0;
  const double acc = evaluate(w, cfg, d.test).accuracy;
  EXPECT_GE(acc, 0.4);
  EXPECT_LE(acc, 0.6);
}
