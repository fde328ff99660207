#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wrl/synthgen.hpp"
#include "wrl/weights.hpp"

namespace wrl {

/// tanh MLP encoder followed by a linear softmax head.
struct ModelConfig {
  int input_dim = 32;
  std::vector<int> hidden_dims{64, 32};
  int label_count = 2;

  std::string id() const;
  int feature_dim() const { return hidden_dims.back(); }
  std::size_t encoder_parameter_count() const;
  std::size_t parameter_count() const;
};

enum class TrainMode { Full, BiasOnly, HeadOnly };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

struct TrainConfig {
  TrainMode mode = TrainMode::Full;
  double learning_rate = 0.05;
  int steps = 500;
  int batch_size = 128;
  std::uint64_t seed = 0;
  std::optional<int> max_examples;  // few-shot cap on training examples
};

/// Throws DataError unless learning_rate > 0 and steps >= 1.
void validate(const TrainConfig& tc);

/// Segment table for `config`, encoder first, head last.
std::vector<ParamSegment> segment_table(const ModelConfig& config, bool with_head = true);

/// Xavier-normal weights (variance 2 / (fan_in + fan_out)), zero biases.
WeightVector init_model(const ModelConfig& config, std::uint64_t seed);

/// Appends a freshly initialized head: weights N(0, 0.02^2), zero bias.
WeightVector attach_head(const WeightVector& encoder, const ModelConfig& config, std::uint64_t seed);

/// Frozen-encoder representation of `inputs` (rows are examples).
Eigen::MatrixXd encode(const WeightVector& w, const ModelConfig& config, const Eigen::MatrixXd& inputs);

struct LossAndGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Mean softmax cross-entropy and its exact gradient. Entries outside the
/// trainable set of `mode` are zero.
LossAndGrad loss_and_grad(const WeightVector& w, const ModelConfig& config, const Eigen::MatrixXd& inputs,
                          const std::vector<int>& labels, TrainMode mode);
LossAndGrad loss_and_grad(const WeightVector& w, const ModelConfig& config, const LabeledSet& batch,
                          TrainMode mode);

/// 1 where `mode` may move the parameter, 0 elsewhere.
Eigen::VectorXd trainable_mask(const WeightVector& w, TrainMode mode);

struct FitResult {
  WeightVector weights;
  std::vector<double> step_losses;  // minibatch loss before each update
};

/// Mini-batch gradient descent from `start` (which must carry a head).
FitResult fit(const WeightVector& start, const ModelConfig& config, const LabeledSet& data, const TrainConfig& tc);

/// Full-mode training of a fresh model on the proxy corpus; returns encoder + head.
WeightVector pretrain(const ModelConfig& config, const LabeledSet& corpus, const TrainConfig& tc);

/// Attaches a seeded head to the encoder-only `pre` and trains it.
WeightVector finetune(const WeightVector& pre, const ModelConfig& config, const LabeledSet& train,
                      const TrainConfig& tc);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const WeightVector& w, const ModelConfig& config, const LabeledSet& data);

}  // namespace wrl
