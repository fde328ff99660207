#include "wrl/synthgen.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>

#include "bytes.hpp"
#include "wrl/error.hpp"
#include "wrl/rng.hpp"

namespace wrl {

namespace {

// Extra directions spanned by a family beside its anchor direction.
constexpr int kSubspaceRank = 3;
// Weight of the dataset-specific part relative to the family anchor.
constexpr double kDatasetSpread = 0.8;
// Median of |N(0,1)|: a band of this half-width holds half the mass.
constexpr double kBandHalfWidth = 0.6744897501960817;
constexpr int kParityPool = 4;
// Sibling rule directions closer than this are redrawn.
constexpr double kMaxSiblingCosine = 0.8;
constexpr int kSampleAttempts = 8;
constexpr int kRuleAttempts = 16;

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

// Orthonormal family basis (anchor first), orthogonal to the all-ones
// direction so family rules disagree with the proxy rule.
Eigen::MatrixXd family_basis(const TaskFamilySpec& family) {
  Rng rng(derive_seed(family.shared_subspace_seed, "family-basis"));
  const Eigen::Index d = family.input_dim;
  Eigen::MatrixXd m(d, kSubspaceRank + 2);
  m.col(0).setConstant(1.0);
  m.rightCols(kSubspaceRank + 1) = gaussian_matrix(rng, d, kSubspaceRank + 1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, kSubspaceRank + 2);
  return q.rightCols(kSubspaceRank + 1);
}

std::vector<int> parity_pool(const TaskFamilySpec& family) {
  Rng rng(derive_seed(family.shared_subspace_seed, "parity-pool"));
  std::vector<int> coords(static_cast<std::size_t>(family.input_dim));
  std::iota(coords.begin(), coords.end(), 0);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(kParityPool);
  return coords;
}

bool balanced(const std::vector<int>& labels) {
  const double frac = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) /
                      static_cast<double>(labels.size());
  return frac >= 0.4 && frac <= 0.6;
}

LabeledSet draw(const RuleParams& rule, int n, int dim, Rng& rng) {
  LabeledSet set;
  set.inputs = gaussian_matrix(rng, dim, n).transpose();
  set.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) set.labels[static_cast<std::size_t>(i)] = apply_rule(rule, set.inputs.row(i).transpose());
  return set;
}

}  // namespace

std::string to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::LinearThreshold: return "linear-threshold";
    case RuleKind::BandMembership: return "band-membership";
    case RuleKind::SignParity: return "sign-parity";
  }
  return "unknown";
}

RuleKind parse_rule_kind(const std::string& text) {
  if (text == "linear-threshold") return RuleKind::LinearThreshold;
  if (text == "band-membership") return RuleKind::BandMembership;
  if (text == "sign-parity") return RuleKind::SignParity;
  throw DataError("unknown rule kind '" + text + "'");
}

bool RuleParams::operator==(const RuleParams& other) const {
  return kind == other.kind && direction.size() == other.direction.size() &&
         direction == other.direction && threshold == other.threshold && coord_a == other.coord_a &&
         coord_b == other.coord_b;
}

void validate(const TaskFamilySpec& family) {
  if (family.input_dim < 8) throw DataError("family " + family.family_id + ": input_dim must be >= 8");
  if (family.num_datasets < 2) throw DataError("family " + family.family_id + ": needs >= 2 datasets");
}

void validate(const DatasetSpec& spec) {
  if (spec.n_train < 64) throw DataError("dataset " + spec.dataset_id + ": n_train must be >= 64");
  if (spec.n_test < 256) throw DataError("dataset " + spec.dataset_id + ": n_test must be >= 256");
  if (spec.label_count != 2) throw DataError("dataset " + spec.dataset_id + ": only binary labels");
}

RuleParams rule_params(const TaskFamilySpec& family, std::uint64_t rule_seed) {
  RuleParams rule;
  rule.kind = family.rule_kind;
  Rng rng(derive_seed(rule_seed, "rule"));
  if (family.rule_kind == RuleKind::SignParity) {
    auto pool = parity_pool(family);
    std::shuffle(pool.begin(), pool.end(), rng);
    rule.coord_a = std::min(pool[0], pool[1]);
    rule.coord_b = std::max(pool[0], pool[1]);
    return rule;
  }
  const Eigen::MatrixXd basis = family_basis(family);
  const Eigen::VectorXd coeff = gaussian_matrix(rng, kSubspaceRank, 1);
  Eigen::VectorXd dir = basis.col(0) + kDatasetSpread * basis.rightCols(kSubspaceRank) * coeff;
  rule.direction = dir.normalized();
  if (family.rule_kind == RuleKind::BandMembership) rule.threshold = kBandHalfWidth;
  return rule;
}

int apply_rule(const RuleParams& rule, const Eigen::Ref<const Eigen::VectorXd>& x) {
  switch (rule.kind) {
    case RuleKind::LinearThreshold: return rule.direction.dot(x) > 0.0 ? 1 : 0;
    case RuleKind::BandMembership: return std::abs(rule.direction.dot(x)) < rule.threshold ? 1 : 0;
    case RuleKind::SignParity: return ((x[rule.coord_a] > 0.0) != (x[rule.coord_b] > 0.0)) ? 1 : 0;
  }
  return 0;
}

int proxy_label(const Eigen::Ref<const Eigen::VectorXd>& x) { return x.sum() > 0.0 ? 1 : 0; }

GeneratedDataset gen_dataset(const DatasetSpec& spec, const TaskFamilySpec& family, std::uint64_t seed) {
  validate(spec);
  validate(family);
  if (spec.family_id != family.family_id) {
    throw DataError("dataset " + spec.dataset_id + " belongs to " + spec.family_id + ", not " +
                    family.family_id);
  }
  std::uint64_t rule_seed = spec.rule_params_seed;
  for (int rule_attempt = 0; rule_attempt < kRuleAttempts; ++rule_attempt) {
    const RuleParams rule = rule_params(family, rule_seed);
    for (int attempt = 0; attempt < kSampleAttempts; ++attempt) {
      Rng rng(derive_seed(derive_seed(seed, spec.dataset_id), static_cast<std::uint64_t>(attempt)));
      LabeledSet train = draw(rule, spec.n_train, family.input_dim, rng);
      LabeledSet test = draw(rule, spec.n_test, family.input_dim, rng);
      if (!balanced(train.labels) || !balanced(test.labels)) continue;
      for (auto* set : {&train, &test}) {
        set->dataset_id = spec.dataset_id;
        set->family_id = spec.family_id;
        set->label_count = spec.label_count;
      }
      train.split = Split::Train;
      test.split = Split::Test;
      return {std::move(train), std::move(test), rule, rule_seed, rule_attempt};
    }
    rule_seed = derive_seed(rule_seed, "perturb");
  }
  throw DataError("dataset " + spec.dataset_id + ": could not reach class balance");
}

LabeledSet subsample(const LabeledSet& set, int n, std::uint64_t seed) {
  if (n < 1 || n > set.size()) {
    throw DataError("cannot subsample " + std::to_string(n) + " of " + std::to_string(set.size()) +
                    " examples");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(set.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(n));
  LabeledSet out;
  out.inputs = set.inputs(order, Eigen::all);
  out.labels.reserve(order.size());
  for (auto i : order) out.labels.push_back(set.labels[static_cast<std::size_t>(i)]);
  out.split = set.split;
  out.dataset_id = set.dataset_id;
  out.family_id = set.family_id;
  out.label_count = set.label_count;
  return out;
}

LabeledSet pretrain_corpus(std::span<const TaskFamilySpec> families, std::uint64_t seed, int size) {
  if (families.empty()) throw DataError("pretraining corpus needs at least one family");
  const int dim = families.front().input_dim;
  for (const auto& f : families) {
    validate(f);
    if (f.input_dim != dim) throw DataError("families disagree on input_dim");
  }
  // Every family draws inputs from N(0, I); rows rotate through families.
  LabeledSet corpus;
  corpus.dataset_id = "pretrain-corpus";
  corpus.family_id = "mixed";
  corpus.split = Split::Train;
  for (int attempt = 0; attempt < kSampleAttempts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    corpus.inputs = gaussian_matrix(rng, dim, size).transpose();
    corpus.labels.resize(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i)
      corpus.labels[static_cast<std::size_t>(i)] = proxy_label(corpus.inputs.row(i).transpose());
    if (balanced(corpus.labels)) return corpus;
  }
  throw DataError("pretraining corpus could not reach class balance");
}

std::vector<TaskFamilySpec> builtin_families(std::uint64_t seed, int input_dim, int datasets_per_family) {
  const std::pair<const char*, RuleKind> kinds[] = {
      {"nli", RuleKind::LinearThreshold},
      {"sentiment", RuleKind::BandMembership},
      {"topic", RuleKind::SignParity},
  };
  std::vector<TaskFamilySpec> out;
  for (const auto& [name, kind] : kinds) {
    out.push_back({name, kind, input_dim, derive_seed(seed, name), datasets_per_family});
  }
  return out;
}

namespace {

bool too_close(const RuleParams& params, const std::vector<RuleParams>& seen) {
  for (const auto& other : seen) {
    if (params == other) return true;
    if (params.direction.size() > 0 && other.direction.size() == params.direction.size() &&
        std::abs(params.direction.dot(other.direction)) > kMaxSiblingCosine)
      return true;
  }
  return false;
}

}  // namespace

std::vector<DatasetSpec> family_datasets(const TaskFamilySpec& family, std::uint64_t seed, int n_train,
                                         int n_test) {
  validate(family);
  std::vector<DatasetSpec> out;
  std::vector<RuleParams> seen;
  std::uint64_t candidate = derive_seed(seed, family.family_id);
  for (int k = 0; k < family.num_datasets; ++k) {
    RuleParams params;
    do {
      candidate = derive_seed(candidate, static_cast<std::uint64_t>(k));
      params = rule_params(family, candidate);
    } while (too_close(params, seen));
    seen.push_back(params);
    out.push_back({family.family_id + "-" + std::to_string(k), family.family_id, candidate, n_train, n_test, 2});
  }
  return out;
}

double positive_fraction(const LabeledSet& set) {
  return static_cast<double>(std::count(set.labels.begin(), set.labels.end(), 1)) /
         static_cast<double>(set.labels.size());
}

void write_csv(const LabeledSet& set, std::ostream& out) {
  out << "dataset_id,family_id,split,label";
  for (Eigen::Index j = 0; j < set.inputs.cols(); ++j) out << ",x" << j;
  out << '\n';
  const char* split = set.split == Split::Train ? "train" : "test";
  char buf[32];
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    out << set.dataset_id << ',' << set.family_id << ',' << split << ',' << set.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < set.inputs.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", set.inputs(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {
constexpr std::uint32_t kCacheMagic = 0x31534c57;  // "WLS1"
}

void write_binary(const LabeledSet& set, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.put(kCacheMagic);
  auto put_string = [&](const std::string& s) {
    w.put(static_cast<std::uint16_t>(s.size()));
    w.put_bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  };
  put_string(set.dataset_id);
  put_string(set.family_id);
  w.put(static_cast<std::uint8_t>(set.split == Split::Train ? 0 : 1));
  w.put(static_cast<std::uint32_t>(set.label_count));
  w.put(static_cast<std::uint64_t>(set.inputs.rows()));
  w.put(static_cast<std::uint64_t>(set.inputs.cols()));
  for (Eigen::Index i = 0; i < set.inputs.rows(); ++i)
    for (Eigen::Index j = 0; j < set.inputs.cols(); ++j) w.put_f64(set.inputs(i, j));
  for (int label : set.labels) w.put(static_cast<std::uint32_t>(label));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
}

LabeledSet read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  detail::ByteReader r(bytes);
  if (r.get<std::uint32_t>() != kCacheMagic) throw DataError("bad dataset cache magic in " + path.string());
  auto get_string = [&] {
    const auto n = r.get<std::uint16_t>();
    const auto b = r.get_bytes(n);
    return std::string(b.begin(), b.end());
  };
  LabeledSet set;
  set.dataset_id = get_string();
  set.family_id = get_string();
  set.split = r.get<std::uint8_t>() == 0 ? Split::Train : Split::Test;
  set.label_count = static_cast<int>(r.get<std::uint32_t>());
  const auto rows = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  const auto cols = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  set.inputs.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) set.inputs(i, j) = r.get_f64();
  set.labels.resize(static_cast<std::size_t>(rows));
  for (auto& label : set.labels) label = static_cast<int>(r.get<std::uint32_t>());
  return set;
}

}  // namespace wrl
