#include "wrl/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wrl/error.hpp"
#include "wrl/parallel.hpp"
#include "wrl/rng.hpp"

namespace wrl {

using nlohmann::json;

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::SameDataset: return "same-dataset";
    case Granularity::SameTask: return "same-task";
    case Granularity::General: return "general";
  }
  return "?";
}

Granularity parse_granularity(const std::string& text) {
  for (auto g : kAllGranularities)
    if (to_string(g) == text) return g;
  throw DataError("unknown granularity '" + text + "'");
}

void validate(const ExperimentPlan& plan) {
  if (plan.name.empty()) throw DataError("plan: empty name");
  if (plan.seeds_per_dataset < 2) throw DataError("plan: seeds_per_dataset must be >= 2");
  if (plan.clustering_seeds < plan.seeds_per_dataset)
    throw DataError("plan: clustering_seeds must be >= seeds_per_dataset");
  if (plan.subsample_seeds < 1 || plan.lineage_seeds < 1 || plan.fusion_seeds < 1)
    throw DataError("plan: seed counts must be positive");
  if (plan.task_pair_seeds < 1 || plan.task_pair_seeds > plan.seeds_per_dataset)
    throw DataError("plan: task_pair_seeds must lie in [1, seeds_per_dataset]");
  if (plan.lineage_seeds > plan.clustering_seeds) throw DataError("plan: lineage_seeds exceeds clustering_seeds");
  if (plan.subsample_sizes.size() < 2) throw DataError("plan: need at least two subsample sizes");
  for (int s : plan.subsample_sizes)
    if (s < 2 || s > plan.n_train) throw DataError("plan: subsample size out of range");
  if (plan.interpolation_points < 3) throw DataError("plan: interpolation_points must be >= 3");
  if (plan.extrapolation_pairs < 1) throw DataError("plan: extrapolation_pairs must be >= 1");
  if (plan.radii.empty()) throw DataError("plan: radii empty");
  for (double r : plan.radii)
    if (!(r > 0)) throw DataError("plan: radii must be positive");
  if (plan.random_directions < 1) throw DataError("plan: random_directions must be >= 1");
  if (plan.few_shot_examples < 2) throw DataError("plan: few_shot_examples must be >= 2");
  if (plan.tie_tolerance < 0) throw DataError("plan: negative tie_tolerance");
  if (plan.workers < 1) throw DataError("plan: workers must be >= 1");
  if (plan.corpus_size < 64) throw DataError("plan: corpus_size must be >= 64");
  validate(plan.pretrain);
  validate(plan.finetune);
  validate(plan.fusion);
  if (plan.fusion.mode != TrainMode::BiasOnly) throw DataError("plan: fusion must train biases only");
  if (plan.finetune.mode != TrainMode::Full) throw DataError("plan: finetune must be full");
}

namespace {

json train_json(const TrainConfig& tc) {
  return {{"learning_rate", tc.learning_rate}, {"steps", tc.steps}, {"batch_size", tc.batch_size}};
}

void read_train(const json& j, TrainConfig& tc) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "learning_rate") tc.learning_rate = it->get<double>();
    else if (it.key() == "steps") tc.steps = it->get<int>();
    else if (it.key() == "batch_size") tc.batch_size = it->get<int>();
    else throw DataError("plan: unknown training key '" + it.key() + "'");
  }
}

json families_json(const std::vector<TaskFamilySpec>& families) {
  json out = json::array();
  for (const auto& f : families)
    out.push_back({{"family_id", f.family_id},
                   {"rule_kind", to_string(f.rule_kind)},
                   {"input_dim", f.input_dim},
                   {"shared_subspace_seed", f.shared_subspace_seed},
                   {"num_datasets", f.num_datasets}});
  return out;
}

// Fields that change trained weights; stored models are reused only when
// these match.
std::string training_digest(const ExperimentPlan& p, const std::vector<TaskFamilySpec>& families) {
  json j{{"families", families_json(families)}, {"seed", p.seed},          {"n_train", p.n_train},
         {"n_test", p.n_test},                  {"corpus", p.corpus_size}, {"pretrain", train_json(p.pretrain)},
         {"finetune", train_json(p.finetune)}};
  const std::string text = j.dump();
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}).substr(0, 16);
}

}  // namespace

std::string plan_to_json(const ExperimentPlan& p) {
  json probe{{"step_cap", p.probe.step_cap}, {"grad_tol", p.probe.grad_tol}, {"ridge", p.probe.ridge}};
  json j{{"name", p.name},
         {"granularity", to_string(p.granularity)},
         {"families", families_json(p.families)},
         {"seeds_per_dataset", p.seeds_per_dataset},
         {"clustering_seeds", p.clustering_seeds},
         {"targets", p.targets},
         {"output_dir", p.output_dir.string()},
         {"seed", p.seed},
         {"n_train", p.n_train},
         {"n_test", p.n_test},
         {"corpus_size", p.corpus_size},
         {"pretrain", train_json(p.pretrain)},
         {"finetune", train_json(p.finetune)},
         {"fusion", train_json(p.fusion)},
         {"probe", probe},
         {"subsample_sizes", p.subsample_sizes},
         {"subsample_seeds", p.subsample_seeds},
         {"lineage_seeds", p.lineage_seeds},
         {"interpolation_points", p.interpolation_points},
         {"task_pair_seeds", p.task_pair_seeds},
         {"extrapolation_pairs", p.extrapolation_pairs},
         {"radii", p.radii},
         {"random_directions", p.random_directions},
         {"few_shot_examples", p.few_shot_examples},
         {"fusion_seeds", p.fusion_seeds},
         {"tie_tolerance", p.tie_tolerance},
         {"workers", p.workers}};
  return j.dump(2) + "\n";
}

ExperimentPlan plan_from_json(const std::string& text) {
  ExperimentPlan p;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw DataError("plan: top level must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = *it;
      if (k == "name") p.name = v.get<std::string>();
      else if (k == "granularity") p.granularity = parse_granularity(v.get<std::string>());
      else if (k == "families") {
        p.families.clear();
        for (const auto& f : v) {
          TaskFamilySpec spec;
          spec.family_id = f.at("family_id").get<std::string>();
          spec.rule_kind = parse_rule_kind(f.at("rule_kind").get<std::string>());
          spec.input_dim = f.value("input_dim", spec.input_dim);
          spec.shared_subspace_seed = f.value("shared_subspace_seed", spec.shared_subspace_seed);
          spec.num_datasets = f.value("num_datasets", spec.num_datasets);
          p.families.push_back(spec);
        }
      } else if (k == "seeds_per_dataset") p.seeds_per_dataset = v.get<int>();
      else if (k == "clustering_seeds") p.clustering_seeds = v.get<int>();
      else if (k == "targets") p.targets = v.get<std::vector<std::string>>();
      else if (k == "output_dir") p.output_dir = v.get<std::string>();
      else if (k == "seed") p.seed = v.get<std::uint64_t>();
      else if (k == "n_train") p.n_train = v.get<int>();
      else if (k == "n_test") p.n_test = v.get<int>();
      else if (k == "corpus_size") p.corpus_size = v.get<int>();
      else if (k == "pretrain") read_train(v, p.pretrain);
      else if (k == "finetune") read_train(v, p.finetune);
      else if (k == "fusion") read_train(v, p.fusion);
      else if (k == "probe") {
        p.probe.step_cap = v.value("step_cap", p.probe.step_cap);
        p.probe.grad_tol = v.value("grad_tol", p.probe.grad_tol);
        p.probe.ridge = v.value("ridge", p.probe.ridge);
      } else if (k == "subsample_sizes") p.subsample_sizes = v.get<std::vector<int>>();
      else if (k == "subsample_seeds") p.subsample_seeds = v.get<int>();
      else if (k == "lineage_seeds") p.lineage_seeds = v.get<int>();
      else if (k == "interpolation_points") p.interpolation_points = v.get<int>();
      else if (k == "task_pair_seeds") p.task_pair_seeds = v.get<int>();
      else if (k == "extrapolation_pairs") p.extrapolation_pairs = v.get<int>();
      else if (k == "radii") p.radii = v.get<std::vector<double>>();
      else if (k == "random_directions") p.random_directions = v.get<int>();
      else if (k == "few_shot_examples") p.few_shot_examples = v.get<int>();
      else if (k == "fusion_seeds") p.fusion_seeds = v.get<int>();
      else if (k == "tie_tolerance") p.tie_tolerance = v.get<double>();
      else if (k == "workers") p.workers = v.get<int>();
      else throw DataError("plan: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("plan: ") + e.what());
  }
  validate(p);
  return p;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read plan " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return plan_from_json(ss.str());
}

void ExperimentReport::set(const std::string& key, double value, const std::string& table) {
  summary[key] = value;
  summary_source[key] = table;
}

void ExperimentReport::merge(const ExperimentReport& other) {
  for (const auto& [k, v] : other.tables)
    if (!tables.emplace(k, v).second) throw DataError("duplicate table " + k);
  for (const auto& [k, v] : other.figures)
    if (!figures.emplace(k, v).second) throw DataError("duplicate figure " + k);
  for (const auto& [k, v] : other.summary) summary[k] = v;
  for (const auto& [k, v] : other.summary_source) summary_source[k] = v;
  for (const auto& [k, v] : other.timings) timings[k] += v;
}

std::string summary_json(const ExperimentReport& report) {
  json values = json::object();
  for (const auto& [k, v] : report.summary) values[k] = v;
  json sources = json::object();
  for (const auto& [k, v] : report.summary_source) sources[k] = "tables/" + v + ".csv";
  json j{{"plan", report.plan_name}, {"summary", values}, {"sources", sources}};
  return j.dump(2) + "\n";
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  for (const auto& [key, table] : report.summary_source)
    if (!report.tables.count(table)) throw DataError("summary key " + key + " names unknown table " + table);
  for (const auto& [name, table] : report.tables) write_text(dir / "tables" / (name + ".csv"), to_csv(table));
  for (const auto& [name, svg] : report.figures) write_text(dir / "figures" / (name + ".svg"), svg);
  write_text(dir / "summary.json", summary_json(report));
  json t = json::object();
  for (const auto& [k, v] : report.timings) t[k] = v;
  write_text(dir / "timings.json", t.dump(2) + "\n");
}

Workspace::Workspace(ExperimentPlan plan, CheckpointStore* store) : plan_(std::move(plan)), store_(store) {
  families_ = plan_.families.empty() ? builtin_families(job_seed("families")) : plan_.families;
  for (const auto& f : families_) {
    if (f.input_dim != config_.input_dim) throw DataError("family " + f.family_id + ": input_dim must be 32");
    for (const auto& spec : family_datasets(f, job_seed("datasets/" + f.family_id), plan_.n_train, plan_.n_test)) {
      auto g = gen_dataset(spec, f, job_seed("data/" + spec.dataset_id));
      datasets_.push_back({spec, std::move(g.train), std::move(g.test)});
    }
  }
  validate(plan_);
  for (const auto& t : plan_.targets) dataset(t);
  if (store_) {
    const std::string digest = training_digest(plan_, families_);
    for (const auto& m : store_->index()) {
      auto job = m.hyperparams.find("job");
      auto dig = m.hyperparams.find("plan_digest");
      if (job != m.hyperparams.end() && dig != m.hyperparams.end() && dig->second == digest)
        job_index_[job->second] = m.checkpoint_id;
    }
  }
}

const TargetData& Workspace::dataset(const std::string& id) const {
  for (const auto& d : datasets_)
    if (d.spec.dataset_id == id) return d;
  throw DataError("unknown dataset '" + id + "'");
}

std::vector<std::string> Workspace::target_ids() const {
  if (!plan_.targets.empty()) return plan_.targets;
  std::vector<std::string> out;
  for (const auto& d : datasets_) out.push_back(d.spec.dataset_id);
  return out;
}

std::vector<std::string> Workspace::family_dataset_ids(const std::string& family_id) const {
  std::vector<std::string> out;
  for (const auto& d : datasets_)
    if (d.spec.family_id == family_id) out.push_back(d.spec.dataset_id);
  return out;
}

std::uint64_t Workspace::job_seed(const std::string& job) const { return derive_seed(plan_.seed, job); }

std::optional<WeightVector> Workspace::lookup(const std::string& job) const {
  if (!store_) return std::nullopt;
  auto it = job_index_.find(job);
  if (it == job_index_.end()) return std::nullopt;
  return store_->load(it->second).first;
}

void Workspace::record(const std::string& job, const WeightVector& w, CheckpointRole role,
                       const std::string& dataset_id, int lineage) {
  if (!store_) return;
  CheckpointManifest m;
  m.role = role;
  m.seed = job_seed(job);
  m.hyperparams["job"] = job;
  m.hyperparams["plan_digest"] = training_digest(plan_, families_);
  if (role == CheckpointRole::Finetuned) {
    const auto& d = dataset(dataset_id);
    m.source_dataset_id = d.spec.dataset_id;
    m.family_id = d.spec.family_id;
    m.parent_pretrained_id = content_id(pretrained(lineage));
    const TrainConfig& tc = plan_.finetune;
    m.hyperparams["learning_rate"] = format_double(tc.learning_rate);
    m.hyperparams["steps"] = std::to_string(tc.steps);
    m.hyperparams["batch_size"] = std::to_string(tc.batch_size);
  }
  job_index_[job] = store_->save(w, m);
}

WeightVector Workspace::train_or_load(const std::string& job, CheckpointRole role, const std::string& dataset_id,
                                      int lineage, const std::function<WeightVector()>& train) {
  if (auto w = lookup(job)) return *w;
  WeightVector w = train();
  record(job, w, role, dataset_id, lineage);
  return w;
}

GridModel Workspace::make_grid_model(const WeightVector& full, const std::string& dataset_id, int seed_index,
                                     int lineage) const {
  GridModel g;
  g.encoder = has_head(full) ? strip_head(full) : full;
  g.id = content_id(g.encoder);
  g.source = dataset_id;
  g.family = dataset(dataset_id).spec.family_id;
  g.seed_index = seed_index;
  g.lineage = lineage;
  return g;
}

namespace {

std::string finetune_job(const std::string& dataset_id, int seed_index, int lineage) {
  return "finetune/" + std::to_string(lineage) + "/" + dataset_id + "/" + std::to_string(seed_index);
}

}  // namespace

const WeightVector& Workspace::pretrained(int lineage) {
  if (lineage < 0 || lineage > 1) throw DataError("lineage must be 0 or 1");
  if (auto it = pretrained_.find(lineage); it != pretrained_.end()) return it->second;
  const std::string job = "pretrain/" + std::to_string(lineage);
  WeightVector w = train_or_load(job, CheckpointRole::Pretrained, "", lineage, [&] {
    const LabeledSet corpus = pretrain_corpus(families_, job_seed("corpus"), plan_.corpus_size);
    TrainConfig tc = plan_.pretrain;
    tc.seed = job_seed(job);
    return strip_head(pretrain(config_, corpus, tc));
  });
  return pretrained_.emplace(lineage, std::move(w)).first->second;
}

const GridModel& Workspace::finetuned(const std::string& dataset_id, int seed_index, int lineage) {
  const std::string job = finetune_job(dataset_id, seed_index, lineage);
  if (auto it = finetuned_.find(job); it != finetuned_.end()) return it->second;
  const TargetData& data = dataset(dataset_id);
  const WeightVector& pre = pretrained(lineage);
  WeightVector full = train_or_load(job, CheckpointRole::Finetuned, dataset_id, lineage, [&] {
    TrainConfig tc = plan_.finetune;
    tc.seed = job_seed(job);
    return finetune(pre, config_, data.train, tc);
  });
  return finetuned_.emplace(job, make_grid_model(full, dataset_id, seed_index, lineage)).first->second;
}

std::vector<GridModel> Workspace::grid(int seeds, int lineage) {
  const WeightVector& pre = pretrained(lineage);
  struct Job {
    std::string name;
    std::string dataset_id;
    int seed_index;
  };
  std::vector<Job> pending;
  for (const auto& d : datasets_)
    for (int s = 0; s < seeds; ++s) {
      const std::string job = finetune_job(d.spec.dataset_id, s, lineage);
      if (finetuned_.count(job)) continue;
      if (auto w = lookup(job)) {
        finetuned_.emplace(job, make_grid_model(*w, d.spec.dataset_id, s, lineage));
        continue;
      }
      pending.push_back({job, d.spec.dataset_id, s});
    }
  auto trained = parallel_map(pending.size(), plan_.workers, [&](std::size_t i) {
    TrainConfig tc = plan_.finetune;
    tc.seed = job_seed(pending[i].name);
    return finetune(pre, config_, dataset(pending[i].dataset_id).train, tc);
  });
  for (std::size_t i = 0; i < pending.size(); ++i) {
    record(pending[i].name, trained[i], CheckpointRole::Finetuned, pending[i].dataset_id, lineage);
    finetuned_.emplace(pending[i].name,
                       make_grid_model(trained[i], pending[i].dataset_id, pending[i].seed_index, lineage));
  }
  std::vector<GridModel> out;
  for (const auto& d : datasets_)
    for (int s = 0; s < seeds; ++s) out.push_back(finetuned(d.spec.dataset_id, s, lineage));
  return out;
}

std::string Workspace::checkpoint_id(const std::string& dataset_id, int seed_index, int lineage) const {
  auto it = job_index_.find(finetune_job(dataset_id, seed_index, lineage));
  return it == job_index_.end() ? std::string{} : it->second;
}

GridModel Workspace::subsampled(const std::string& dataset_id, int size, int seed_index) {
  const std::string job = "subsample/" + dataset_id + "/" + std::to_string(size) + "/" + std::to_string(seed_index);
  if (auto it = finetuned_.find(job); it != finetuned_.end()) return it->second;
  const TargetData& data = dataset(dataset_id);
  const WeightVector& pre = pretrained(0);
  WeightVector full = train_or_load(job, CheckpointRole::Finetuned, dataset_id, 0, [&] {
    TrainConfig tc = plan_.finetune;
    tc.seed = job_seed(job);
    tc.max_examples = size;
    return finetune(pre, config_, data.train, tc);
  });
  return finetuned_.emplace(job, make_grid_model(full, dataset_id, seed_index, 0)).first->second;
}

std::vector<LossReport> Workspace::losses(const std::vector<const WeightVector*>& encoders,
                                          const std::vector<std::string>& targets) {
  std::vector<std::string> ids;
  ids.reserve(encoders.size());
  for (const auto* e : encoders) ids.push_back(content_id(*e));
  struct Job {
    std::size_t encoder;
    std::string target;
    std::string key;
  };
  std::vector<Job> missing;
  std::set<std::string> queued;
  for (std::size_t i = 0; i < encoders.size(); ++i)
    for (const auto& t : targets) {
      std::string key = ids[i] + "|" + t;
      if (!cache_.count(key) && queued.insert(key).second) missing.push_back({i, t, key});
    }
  const std::uint64_t probe_seed = job_seed("probe");
  auto results = parallel_map(missing.size(), plan_.workers, [&](std::size_t j) {
    LossReport r = generalized_loss(*encoders[missing[j].encoder], config_, dataset(missing[j].target), probe_seed,
                                    plan_.probe);
    r.model_id = ids[missing[j].encoder];
    return r;
  });
  for (std::size_t j = 0; j < missing.size(); ++j) cache_.emplace(missing[j].key, std::move(results[j]));
  probes_run_ += missing.size();
  std::vector<LossReport> out;
  out.reserve(encoders.size() * targets.size());
  for (std::size_t i = 0; i < encoders.size(); ++i)
    for (const auto& t : targets) out.push_back(cache_.at(ids[i] + "|" + t));
  return out;
}

LossReport Workspace::loss(const WeightVector& encoder, const std::string& target) {
  return losses({&encoder}, {target}).front();
}

ExperimentReport run_all(Workspace& ws) {
  const std::vector<Granularity> all(std::begin(kAllGranularities), std::end(kAllGranularities));
  ExperimentReport report;
  report.plan_name = ws.plan().name;
  report.merge(run_clustering_suite(ws));
  report.merge(run_interpolation_suite(ws, all));
  report.merge(run_pb_suite(ws, all));
  report.merge(run_extrapolation_suite(ws));
  report.merge(run_edge_suite(ws, {Granularity::SameDataset, Granularity::General}));
  report.merge(run_fusion_suite(ws));
  return report;
}

}  // namespace wrl
