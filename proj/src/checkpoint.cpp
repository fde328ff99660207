#include "wrl/checkpoint.hpp"

#include <openssl/sha.h>

#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "bytes.hpp"
#include "wrl/error.hpp"

namespace wrl {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'W', 'S', 'V', '1'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::size_t kDigestBytes = 32;

std::array<std::uint8_t, kDigestBytes> sha256(std::span<const std::uint8_t> bytes) {
  std::array<std::uint8_t, kDigestBytes> digest{};
  SHA256(bytes.data(), bytes.size(), digest.data());
  return digest;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string to_string(CheckpointRole role) {
  switch (role) {
    case CheckpointRole::Pretrained: return "pretrained";
    case CheckpointRole::Finetuned: return "finetuned";
    case CheckpointRole::Derived: return "derived";
  }
  return "derived";
}

CheckpointRole parse_role(const std::string& text) {
  if (text == "pretrained") return CheckpointRole::Pretrained;
  if (text == "finetuned") return CheckpointRole::Finetuned;
  if (text == "derived") return CheckpointRole::Derived;
  throw DataError("unknown checkpoint role '" + text + "'");
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) { return to_hex(sha256(bytes)); }

std::vector<std::uint8_t> encode_wsv1(const WeightVector& w) {
  validate(w);
  ByteWriter out;
  out.put_bytes(kMagic);
  out.put(kFormatVersion);
  out.put(static_cast<std::uint32_t>(w.segments.size()));
  for (const auto& seg : w.segments) {
    out.put(static_cast<std::uint16_t>(seg.name.size()));
    out.put_bytes({reinterpret_cast<const std::uint8_t*>(seg.name.data()), seg.name.size()});
    out.put(static_cast<std::uint8_t>(seg.kind));
    out.put(static_cast<std::uint8_t>(seg.shape.size()));
    for (auto dim : seg.shape) out.put(dim);
    out.put(static_cast<std::uint64_t>(seg.offset));
    out.put(static_cast<std::uint64_t>(seg.length));
  }
  out.put(static_cast<std::uint64_t>(w.values.size()));
  for (Eigen::Index i = 0; i < w.values.size(); ++i) out.put_f64(w.values[i]);
  const auto digest = sha256(out.bytes());
  out.put_bytes(digest);
  return std::move(out.bytes());
}

WeightVector decode_wsv1(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + kDigestBytes) throw DataError("WSV1 stream too short");
  const auto body = bytes.first(bytes.size() - kDigestBytes);
  const auto stored = bytes.last(kDigestBytes);
  const auto actual = sha256(body);
  if (!std::equal(actual.begin(), actual.end(), stored.begin())) {
    throw IntegrityError("WSV1 digest mismatch: stored " + to_hex(stored) + ", computed " +
                         to_hex(actual));
  }

  ByteReader in(body);
  const auto magic = in.get_bytes(kMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw DataError("bad WSV1 magic");
  if (const auto version = in.get<std::uint16_t>(); version != kFormatVersion) {
    throw DataError("unsupported WSV1 version " + std::to_string(version));
  }
  WeightVector w;
  const auto nseg = in.get<std::uint32_t>();
  for (std::uint32_t s = 0; s < nseg; ++s) {
    ParamSegment seg;
    const auto name_len = in.get<std::uint16_t>();
    const auto name = in.get_bytes(name_len);
    seg.name.assign(name.begin(), name.end());
    const auto kind = in.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(SegmentKind::HeadBias)) throw DataError("bad segment kind");
    seg.kind = static_cast<SegmentKind>(kind);
    const auto rank = in.get<std::uint8_t>();
    for (std::uint8_t r = 0; r < rank; ++r) seg.shape.push_back(in.get<std::uint32_t>());
    seg.offset = in.get<std::uint64_t>();
    seg.length = in.get<std::uint64_t>();
    w.segments.push_back(std::move(seg));
  }
  const auto count = in.get<std::uint64_t>();
  if (count * 8 != in.remaining()) throw DataError("WSV1 payload length mismatch");
  w.values.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) w.values[static_cast<Eigen::Index>(i)] = in.get_f64();
  validate(w);
  return w;
}

std::string content_id(const WeightVector& w) {
  const auto bytes = encode_wsv1(w);
  return to_hex(std::span(bytes).last(kDigestBytes));
}

std::string manifest_to_json_line(const CheckpointManifest& m) {
  auto opt = [](const std::optional<std::string>& v) -> json { return v ? json(*v) : json(nullptr); };
  json j;
  j["checkpoint_id"] = m.checkpoint_id;
  j["role"] = to_string(m.role);
  j["source_dataset_id"] = opt(m.source_dataset_id);
  j["family_id"] = opt(m.family_id);
  j["seed"] = m.seed;
  j["parent_pretrained_id"] = opt(m.parent_pretrained_id);
  j["hyperparams"] = m.hyperparams;
  j["metrics"] = m.metrics;
  return j.dump();
}

CheckpointManifest manifest_from_json_line(const std::string& line) {
  try {
    const auto j = json::parse(line);
    auto opt = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      return j[key].get<std::string>();
    };
    CheckpointManifest m;
    m.checkpoint_id = j.at("checkpoint_id").get<std::string>();
    m.role = parse_role(j.at("role").get<std::string>());
    m.source_dataset_id = opt("source_dataset_id");
    m.family_id = opt("family_id");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.parent_pretrained_id = opt("parent_pretrained_id");
    m.hyperparams = j.value("hyperparams", std::map<std::string, std::string>{});
    m.metrics = j.value("metrics", std::map<std::string, double>{});
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed index line: ") + e.what());
  }
}

CheckpointStore::CheckpointStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw DataError("cannot create store at " + root_.string() + ": " + ec.message());
}

fs::path CheckpointStore::payload_path(const std::string& checkpoint_id) const {
  return root_ / (checkpoint_id + ".wsv");
}

std::string CheckpointStore::save(const WeightVector& w, CheckpointManifest manifest) {
  if (manifest.role == CheckpointRole::Finetuned &&
      (!manifest.source_dataset_id || !manifest.parent_pretrained_id)) {
    throw DataError("finetuned checkpoint needs source_dataset_id and parent_pretrained_id");
  }
  const auto bytes = encode_wsv1(w);
  const auto id = to_hex(std::span(bytes).last(kDigestBytes));
  manifest.checkpoint_id = id;
  if (!w.model_config_id.empty()) manifest.hyperparams["model_config_id"] = w.model_config_id;

  std::lock_guard lock(mutex_);
  const auto path = payload_path(id);
  if (!fs::exists(path)) {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw DataError("cannot write " + tmp);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw DataError("short write to " + tmp);
    }
    fs::rename(tmp, path);
  }
  bool indexed = false;
  {
    std::ifstream in(root_ / "index.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && manifest_from_json_line(line).checkpoint_id == id) {
        indexed = true;
        break;
      }
    }
  }
  if (!indexed) {
    std::ofstream index(root_ / "index.jsonl", std::ios::app);
    if (!index) throw DataError("cannot append to store index");
    index << manifest_to_json_line(manifest) << '\n';
  }
  return id;
}

std::vector<CheckpointManifest> CheckpointStore::index() const {
  std::lock_guard lock(mutex_);
  std::vector<CheckpointManifest> out;
  std::ifstream in(root_ / "index.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(manifest_from_json_line(line));
  }
  return out;
}

bool CheckpointStore::contains(const std::string& checkpoint_id) const {
  for (const auto& m : index()) {
    if (m.checkpoint_id == checkpoint_id) return true;
  }
  return false;
}

std::pair<WeightVector, CheckpointManifest> CheckpointStore::load(const std::string& checkpoint_id) const {
  std::optional<CheckpointManifest> manifest;
  for (auto& m : index()) {
    if (m.checkpoint_id == checkpoint_id) {
      manifest = std::move(m);
      break;
    }
  }
  if (!manifest) throw DataError("missing checkpoint " + checkpoint_id);
  const auto bytes = read_file(payload_path(checkpoint_id));
  auto w = decode_wsv1(bytes);
  const auto digest = to_hex(std::span(bytes).last(kDigestBytes));
  if (digest != checkpoint_id) {
    throw IntegrityError("payload digest " + digest + " does not match id " + checkpoint_id);
  }
  if (auto it = manifest->hyperparams.find("model_config_id"); it != manifest->hyperparams.end()) {
    w.model_config_id = it->second;
  }
  return {std::move(w), std::move(*manifest)};
}

}  // namespace wrl
