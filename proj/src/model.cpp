#include "wrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "softmax.hpp"
#include "wrl/error.hpp"
#include "wrl/rng.hpp"

namespace wrl {

namespace {

constexpr double kDivergenceFactor = 10.0;
constexpr double kHeadInitStd = 0.02;

struct Layer {
  const ParamSegment* weight;
  const ParamSegment* bias;
};

std::vector<Layer> encoder_layers(const WeightVector& w) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < w.segments.size(); ++i) {
    const auto& s = w.segments[i];
    if (s.kind == SegmentKind::EncoderWeight && w.segments[i + 1].kind == SegmentKind::EncoderBias) {
      layers.push_back({&s, &w.segments[i + 1]});
    }
  }
  return layers;
}

Layer head_layer(const WeightVector& w) {
  const ParamSegment* weight = nullptr;
  const ParamSegment* bias = nullptr;
  for (const auto& s : w.segments) {
    if (s.kind == SegmentKind::HeadWeight) weight = &s;
    if (s.kind == SegmentKind::HeadBias) bias = &s;
  }
  if (!weight || !bias) throw DataError("model has no classification head");
  return {weight, bias};
}

void check_input(const WeightVector& w, const Eigen::MatrixXd& inputs) {
  const auto layers = encoder_layers(w);
  if (layers.empty()) throw DataError("model has no encoder layers");
  if (static_cast<std::uint32_t>(inputs.cols()) != layers.front().weight->shape[1]) {
    throw DataError("input dimension " + std::to_string(inputs.cols()) + " does not match encoder input " +
                    std::to_string(layers.front().weight->shape[1]));
  }
}

void fill_normal(WeightVector& w, const ParamSegment& seg, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  auto v = vector_view(w, seg);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
}

void fill_xavier(WeightVector& w, const ParamSegment& seg, Rng& rng) {
  const double fan_out = seg.shape[0];
  const double fan_in = seg.shape[1];
  fill_normal(w, seg, std::sqrt(2.0 / (fan_in + fan_out)), rng);
}

}  // namespace

std::string ModelConfig::id() const {
  std::string s = "mlp-tanh-" + std::to_string(input_dim);
  for (int h : hidden_dims) s += "-" + std::to_string(h);
  return s + "-" + std::to_string(label_count);
}

std::size_t ModelConfig::encoder_parameter_count() const {
  std::size_t n = 0;
  int in = input_dim;
  for (int h : hidden_dims) {
    n += static_cast<std::size_t>(h) * static_cast<std::size_t>(in + 1);
    in = h;
  }
  return n;
}

std::size_t ModelConfig::parameter_count() const {
  return encoder_parameter_count() + static_cast<std::size_t>(label_count) * static_cast<std::size_t>(feature_dim() + 1);
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Full: return "full";
    case TrainMode::BiasOnly: return "bias-only";
    case TrainMode::HeadOnly: return "head-only";
  }
  return "full";
}

TrainMode parse_train_mode(const std::string& text) {
  if (text == "full") return TrainMode::Full;
  if (text == "bias-only") return TrainMode::BiasOnly;
  if (text == "head-only") return TrainMode::HeadOnly;
  throw DataError("unknown training mode '" + text + "'");
}

void validate(const TrainConfig& tc) {
  if (!(tc.learning_rate > 0.0)) throw DataError("learning_rate must be positive");
  if (tc.steps < 1) throw DataError("steps must be >= 1");
  if (tc.batch_size < 1) throw DataError("batch_size must be >= 1");
  if (tc.max_examples && *tc.max_examples < 1) throw DataError("max_examples must be >= 1");
}

std::vector<ParamSegment> segment_table(const ModelConfig& config, bool with_head) {
  if (config.hidden_dims.empty()) throw DataError("model needs at least one hidden layer");
  std::vector<ParamSegment> segs;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::uint32_t> shape, SegmentKind kind) {
    std::size_t len = 1;
    for (auto d : shape) len *= d;
    segs.push_back({std::move(name), offset, len, std::move(shape), kind});
    offset += len;
  };
  auto in = static_cast<std::uint32_t>(config.input_dim);
  for (std::size_t l = 0; l < config.hidden_dims.size(); ++l) {
    const auto out = static_cast<std::uint32_t>(config.hidden_dims[l]);
    add("enc" + std::to_string(l) + ".weight", {out, in}, SegmentKind::EncoderWeight);
    add("enc" + std::to_string(l) + ".bias", {out}, SegmentKind::EncoderBias);
    in = out;
  }
  if (with_head) {
    const auto k = static_cast<std::uint32_t>(config.label_count);
    add("head.weight", {k, in}, SegmentKind::HeadWeight);
    add("head.bias", {k}, SegmentKind::HeadBias);
  }
  return segs;
}

WeightVector init_model(const ModelConfig& config, std::uint64_t seed) {
  WeightVector w;
  w.segments = segment_table(config, true);
  w.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.parameter_count()));
  w.model_config_id = config.id();
  Rng rng(seed);
  for (const auto& seg : w.segments) {
    if (!is_bias(seg.kind)) fill_xavier(w, seg, rng);
  }
  return w;
}

WeightVector attach_head(const WeightVector& encoder, const ModelConfig& config, std::uint64_t seed) {
  if (has_head(encoder)) throw DataError("encoder already carries a head");
  const auto full = segment_table(config, true);
  const auto enc = segment_table(config, false);
  if (encoder.segments != enc) throw DataError("encoder layout does not match " + config.id());
  WeightVector w;
  w.segments = full;
  w.model_config_id = config.id();
  w.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.parameter_count()));
  w.values.head(encoder.values.size()) = encoder.values;
  Rng rng(seed);
  fill_normal(w, full[full.size() - 2], kHeadInitStd, rng);
  return w;
}

Eigen::MatrixXd encode(const WeightVector& w, const ModelConfig& config, const Eigen::MatrixXd& inputs) {
  (void)config;
  check_input(w, inputs);
  Eigen::MatrixXd a = inputs;
  for (const auto& layer : encoder_layers(w)) {
    const auto W = matrix_view(w, *layer.weight);
    const auto b = vector_view(w, *layer.bias);
    Eigen::MatrixXd z = a * W.transpose();
    z.rowwise() += b.transpose();
    a = z.array().tanh().matrix();
  }
  return a;
}

Eigen::VectorXd trainable_mask(const WeightVector& w, TrainMode mode) {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(w.values.size());
  for (const auto& seg : w.segments) {
    const bool on = mode == TrainMode::Full || is_head(seg.kind) ||
                    (mode == TrainMode::BiasOnly && seg.kind == SegmentKind::EncoderBias);
    if (on) mask.segment(static_cast<Eigen::Index>(seg.offset), static_cast<Eigen::Index>(seg.length)).setOnes();
  }
  return mask;
}

LossAndGrad loss_and_grad(const WeightVector& w, const ModelConfig& config, const Eigen::MatrixXd& inputs,
                          const std::vector<int>& labels, TrainMode mode) {
  (void)config;
  if (inputs.rows() == 0) throw DataError("empty batch");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) throw DataError("inputs and labels disagree in length");
  check_input(w, inputs);
  const auto layers = encoder_layers(w);
  const auto head = head_layer(w);
  const auto Wh = matrix_view(w, *head.weight);
  const auto bh = vector_view(w, *head.bias);
  for (int y : labels) {
    if (y < 0 || y >= Wh.rows()) throw DataError("label out of range for head");
  }

  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(inputs);
  for (const auto& layer : layers) {
    const auto W = matrix_view(w, *layer.weight);
    const auto b = vector_view(w, *layer.bias);
    Eigen::MatrixXd z = acts.back() * W.transpose();
    z.rowwise() += b.transpose();
    acts.push_back(z.array().tanh().matrix());
  }
  Eigen::MatrixXd logits = acts.back() * Wh.transpose();
  logits.rowwise() += bh.transpose();

  LossAndGrad out;
  Eigen::MatrixXd dlogits;
  out.loss = detail::softmax_xent(logits, labels, &dlogits);
  out.grad = Eigen::VectorXd::Zero(w.values.size());

  auto gview = [&](const ParamSegment& seg) {
    return Eigen::Map<RowMajorMatrixXd>(out.grad.data() + seg.offset, seg.shape[0],
                                        seg.shape.size() == 2 ? seg.shape[1] : 1);
  };
  gview(*head.weight) = dlogits.transpose() * acts.back();
  gview(*head.bias) = dlogits.colwise().sum().transpose();
  if (mode == TrainMode::HeadOnly) return out;

  Eigen::MatrixXd da = dlogits * Wh;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& a = acts[l + 1];
    Eigen::MatrixXd dz = (da.array() * (1.0 - a.array().square())).matrix();
    if (mode == TrainMode::Full) gview(*layers[l].weight) = dz.transpose() * acts[l];
    gview(*layers[l].bias) = dz.colwise().sum().transpose();
    if (l > 0) da = dz * matrix_view(w, *layers[l].weight);
  }
  return out;
}

LossAndGrad loss_and_grad(const WeightVector& w, const ModelConfig& config, const LabeledSet& batch, TrainMode mode) {
  return loss_and_grad(w, config, batch.inputs, batch.labels, mode);
}

FitResult fit(const WeightVector& start, const ModelConfig& config, const LabeledSet& data, const TrainConfig& tc) {
  validate(tc);
  validate(start);
  if (data.size() == 0) throw DataError("empty training set");
  if (!has_head(start)) throw DataError("training needs a model with a head");

  FitResult result{start, {}};
  WeightVector& w = result.weights;
  const Eigen::VectorXd mask = trainable_mask(w, tc.mode);
  const auto n = static_cast<std::size_t>(data.size());
  const std::size_t batch = std::min(n, static_cast<std::size_t>(tc.batch_size));

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(tc.seed, "shuffle"));
  std::size_t cursor = n;

  Eigen::MatrixXd xb(static_cast<Eigen::Index>(batch), data.inputs.cols());
  std::vector<int> yb(batch);
  double initial = 0.0;
  result.step_losses.reserve(static_cast<std::size_t>(tc.steps));
  for (int step = 0; step < tc.steps; ++step) {
    if (batch == n) {
      xb = data.inputs;
      yb = data.labels;
    } else {
      for (std::size_t i = 0; i < batch; ++i) {
        if (cursor == n) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        const auto row = order[cursor++];
        xb.row(static_cast<Eigen::Index>(i)) = data.inputs.row(row);
        yb[i] = data.labels[static_cast<std::size_t>(row)];
      }
    }
    auto lg = loss_and_grad(w, config, xb, yb, tc.mode);
    if (step == 0) initial = lg.loss;
    if (!std::isfinite(lg.loss) || lg.loss > kDivergenceFactor * initial) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + " (loss " +
                            std::to_string(lg.loss) + ", initial " + std::to_string(initial) + ")");
    }
    result.step_losses.push_back(lg.loss);
    w.values.noalias() -= tc.learning_rate * lg.grad.cwiseProduct(mask);
  }
  return result;
}

WeightVector pretrain(const ModelConfig& config, const LabeledSet& corpus, const TrainConfig& tc) {
  TrainConfig full = tc;
  full.mode = TrainMode::Full;
  return fit(init_model(config, derive_seed(tc.seed, "init")), config, corpus, full).weights;
}

WeightVector finetune(const WeightVector& pre, const ModelConfig& config, const LabeledSet& train,
                      const TrainConfig& tc) {
  if (tc.mode == TrainMode::HeadOnly) throw DataError("finetune supports full and bias-only modes");
  if (has_head(pre)) throw DataError("finetune expects an encoder-only starting point");
  const WeightVector start = attach_head(pre, config, derive_seed(tc.seed, "head"));
  if (tc.max_examples && *tc.max_examples < train.size()) {
    return fit(start, config, subsample(train, *tc.max_examples, derive_seed(tc.seed, "few-shot")), tc).weights;
  }
  return fit(start, config, train, tc).weights;
}

Evaluation evaluate(const WeightVector& w, const ModelConfig& config, const LabeledSet& data) {
  if (!has_head(w)) throw DataError("evaluation needs a model with a head");
  if (data.size() == 0) throw DataError("empty evaluation set");
  const auto head = head_layer(w);
  Eigen::MatrixXd logits = encode(w, config, data.inputs) * matrix_view(w, *head.weight).transpose();
  logits.rowwise() += vector_view(w, *head.bias).transpose();
  std::size_t correct = 0;
  const double loss = detail::softmax_xent(logits, data.labels, nullptr, &correct);
  return {loss, static_cast<double>(correct) / static_cast<double>(data.size())};
}

}  // namespace wrl
