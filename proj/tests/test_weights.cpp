#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "wrl/checkpoint.hpp"
#include "wrl/error.hpp"
#include "wrl/model.hpp"
#include "wrl/weights.hpp"

using namespace wrl;
namespace fs = std::filesystem;

namespace {

WeightVector three_segments() {
  WeightVector w;
  w.values.resize(10);
  w.values << 0.1, -2.5, 3e-300, 1e300, -0.0, 7, 8, 9, 10, 11;
  w.segments = {{"enc0.weight", 0, 6, {2, 3}, SegmentKind::EncoderWeight},
                {"head.weight", 6, 2, {1, 2}, SegmentKind::HeadWeight},
                {"head.bias", 8, 2, {2}, SegmentKind::HeadBias}};
  return w;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wrl-test-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

bool bit_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(sha256_hex({}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(WeightVector, ValidateRejectsBrokenTables) {
  WeightVector w = three_segments();
  EXPECT_NO_THROW(validate(w));
  w.values[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(validate(w), DataError);
  w = three_segments();
  w.segments[1].offset = 5;
  EXPECT_THROW(validate(w), DataError);
  w = three_segments();
  w.segments[0].shape = {3, 3};
  EXPECT_THROW(validate(w), DataError);
  w = three_segments();
  std::swap(w.segments[0].kind, w.segments[1].kind);
  EXPECT_THROW(validate(w), DataError);
}

TEST(WeightVector, StripHead) {
  const WeightVector w = three_segments();
  const WeightVector enc = strip_head(w);
  EXPECT_EQ(enc.values.size(), 6);
  EXPECT_EQ(enc.values, w.values.head(6));
  EXPECT_EQ(enc.segments.size(), 1u);
  EXPECT_FALSE(has_head(enc));
  EXPECT_THROW(strip_head(enc), DataError);
}

TEST(Wsv1, RoundTripIsBitExact) {
  const WeightVector w = three_segments();
  const WeightVector back = decode_wsv1(encode_wsv1(w));
  EXPECT_TRUE(bit_equal(back.values, w.values));
  EXPECT_TRUE(std::signbit(back.values[4]));
  EXPECT_EQ(back.segments, w.segments);
}

TEST(Wsv1, RoundTripRandomVectors) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> exponent(-300.0, 300.0);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg;
    cfg.hidden_dims = {4 + trial, 3};
    WeightVector w = init_model(cfg, static_cast<std::uint64_t>(trial));
    for (Eigen::Index i = 0; i < w.values.size(); ++i) w.values[i] = normal(rng) * std::pow(10.0, exponent(rng));
    const WeightVector back = decode_wsv1(encode_wsv1(w));
    EXPECT_TRUE(bit_equal(back.values, w.values));
    EXPECT_EQ(back.segments, w.segments);
  }
}

TEST(Wsv1, DigestIsDeterministicAndContentSensitive) {
  const WeightVector w = three_segments();
  EXPECT_EQ(content_id(w), content_id(three_segments()));
  WeightVector v = w;
  v.values[0] = std::nextafter(v.values[0], 1.0);
  EXPECT_NE(content_id(w), content_id(v));
  EXPECT_EQ(content_id(w).size(), 64u);
}

TEST(Wsv1, EveryFlippedByteIsRejected) {
  const auto bytes = encode_wsv1(three_segments());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x01;
    EXPECT_THROW(decode_wsv1(bad), Error) << "byte " << i;
  }
  auto payload_flip = bytes;
  payload_flip[payload_flip.size() - 40] ^= 0x80;
  EXPECT_THROW(decode_wsv1(payload_flip), IntegrityError);
  EXPECT_THROW(decode_wsv1(std::span(bytes).first(bytes.size() - 1)), Error);
}

TEST(CheckpointStore, SaveLoadAndIndex) {
  const fs::path dir = fresh_dir("store");
  CheckpointStore store(dir);
  ModelConfig cfg;
  const WeightVector w = init_model(cfg, 3);
  CheckpointManifest m;
  m.role = CheckpointRole::Pretrained;
  m.seed = 3;
  m.hyperparams["lr"] = "0.05";
  const std::string id = store.save(w, m);
  EXPECT_EQ(id, content_id(w));
  EXPECT_EQ(store.save(w, m), id);
  EXPECT_EQ(store.index().size(), 1u);
  EXPECT_TRUE(store.contains(id));

  const auto [back, manifest] = store.load(id);
  EXPECT_TRUE(bit_equal(back.values, w.values));
  EXPECT_EQ(manifest.checkpoint_id, id);
  EXPECT_EQ(manifest.role, CheckpointRole::Pretrained);
  EXPECT_EQ(manifest.hyperparams.at("lr"), "0.05");

  CheckpointStore reopened(dir);
  EXPECT_TRUE(reopened.contains(id));
  EXPECT_THROW(reopened.load(std::string(64, '0')), DataError);
  fs::remove_all(dir);
}

TEST(CheckpointStore, CorruptedFileIsAnIntegrityError) {
  const fs::path dir = fresh_dir("corrupt");
  CheckpointStore store(dir);
  CheckpointManifest m;
  m.role = CheckpointRole::Derived;
  const std::string id = store.save(three_segments(), m);
  {
    std::fstream f(store.payload_path(id), std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(-45, std::ios::end);
    char c = 0;
    f.read(&c, 1);
    c = static_cast<char>(c ^ 0x10);
    f.seekp(-45, std::ios::end);
    f.write(&c, 1);
  }
  EXPECT_THROW(store.load(id), IntegrityError);
  fs::remove_all(dir);
}

TEST(CheckpointStore, RejectsInvalidInputs) {
  const fs::path dir = fresh_dir("reject");
  CheckpointStore store(dir);
  WeightVector w = three_segments();
  w.values[2] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(store.save(w, {}), DataError);
  CheckpointManifest ft;
  ft.role = CheckpointRole::Finetuned;
  EXPECT_THROW(store.save(three_segments(), ft), DataError);
  fs::remove_all(dir);
}

TEST(Manifest, JsonLineRoundTrip) {
  CheckpointManifest m;
  m.checkpoint_id = std::string(64, 'a');
  m.role = CheckpointRole::Finetuned;
  m.source_dataset_id = "nli-0";
  m.family_id = "nli";
  m.seed = 18446744073709551615ull;
  m.parent_pretrained_id = std::string(64, 'b');
  m.hyperparams = {{"job", "finetune/0/nli-0/1"}};
  m.metrics = {{"train_loss", 0.125}};
  const std::string line = manifest_to_json_line(m);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const CheckpointManifest back = manifest_from_json_line(line);
  EXPECT_EQ(back.checkpoint_id, m.checkpoint_id);
  EXPECT_EQ(back.role, m.role);
  EXPECT_EQ(back.source_dataset_id, m.source_dataset_id);
  EXPECT_EQ(back.seed, m.seed);
  EXPECT_EQ(back.parent_pretrained_id, m.parent_pretrained_id);
  EXPECT_EQ(back.hyperparams, m.hyperparams);
  EXPECT_EQ(back.metrics, m.metrics);
  EXPECT_THROW(manifest_from_json_line("{not json"), DataError);
}
