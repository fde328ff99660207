#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wrl/checkpoint.hpp"
#include "wrl/error.hpp"
#include "wrl/evaluator.hpp"
#include "wrl/experiments.hpp"
#include "wrl/geometry.hpp"
#include "wrl/regions.hpp"
#include "wrl/report.hpp"

namespace fs = std::filesystem;
using namespace wrl;

namespace {

struct CliConfig {
  std::string store_path;
  std::string output_dir = "wrl-out";
  std::optional<std::uint64_t> global_seed;
  int workers = 1;
  std::string plan_file;
};

ExperimentPlan make_plan(const CliConfig& cli) {
  ExperimentPlan plan = cli.plan_file.empty() ? ExperimentPlan{} : load_plan(cli.plan_file);
  if (cli.global_seed) plan.seed = *cli.global_seed;
  if (cli.workers < 1) throw UsageError("--workers must be >= 1");
  plan.workers = cli.workers;
  plan.output_dir = cli.output_dir;
  validate(plan);
  return plan;
}

CheckpointStore open_store(const CliConfig& cli) {
  if (cli.store_path.empty()) throw UsageError("no store: pass --store or set WRL_STORE");
  return CheckpointStore(cli.store_path);
}

std::vector<std::string> split_ids(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

WeightVector load_encoder(const CheckpointStore& store, const std::string& id) {
  WeightVector w = store.load(id).first;
  return has_head(w) ? strip_head(w) : w;
}

ModelGroup load_group(const CheckpointStore& store, const std::vector<std::string>& ids, GroupKind kind) {
  if (ids.empty()) throw UsageError("no model ids given");
  std::vector<WeightVector> members;
  std::vector<std::string> sources;
  for (const auto& id : ids) {
    auto [w, m] = store.load(id);
    members.push_back(has_head(w) ? strip_head(w) : w);
    sources.push_back(m.source_dataset_id.value_or(""));
  }
  return make_group(kind, std::move(members), std::move(sources), "loaded from store");
}

std::string save_derived(CheckpointStore& store, const WeightVector& w, const std::string& how,
                         std::map<std::string, std::string> extra = {}) {
  CheckpointManifest m;
  m.role = CheckpointRole::Derived;
  m.hyperparams = std::move(extra);
  m.hyperparams["derivation"] = how;
  return store.save(w, m);
}

std::vector<double> read_losses(const std::string& path) {
  const CsvTable t = read_csv(path);
  for (const char* name : {"generalized_loss", "loss"})
    if (std::find(t.header.begin(), t.header.end(), name) != t.header.end()) return t.numeric_column(name);
  if (t.header.size() == 1) {
    // Headerless single column: the first line is a value too.
    CsvTable all{{"v"}, {}};
    all.add_row({t.header[0]});
    for (const auto& r : t.rows) all.add_row(r);
    return all.numeric_column("v");
  }
  throw DataError(path + ": no generalized_loss column");
}

void finish_suite(const ExperimentReport& rep, const CliConfig& cli) {
  write_report(rep, cli.output_dir);
  for (const auto& [k, v] : rep.summary) std::cout << k << '=' << format_double(v) << '\n';
}

AlphaSchedule parse_alphas(const std::string& text) {
  AlphaSchedule s;
  s.kind = ScheduleKind::Custom;
  for (const auto& item : split_ids(text)) {
    try {
      s.values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("--alphas: '" + item + "' is not a number");
    }
  }
  validate(s);
  return s;
}

void print_scan(Workspace& ws, const WeightVector& a, const WeightVector& b, const AlphaSchedule& schedule,
                const std::string& dataset, const std::string& pair_id) {
  CsvTable t{{"pair_id", "alpha", "target_dataset", "generalized_loss", "accuracy"}, {}};
  const auto models = interpolate_pair(a, b, schedule);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const LossReport r = ws.loss(models[i], dataset);
    t.add_row({pair_id, format_double(schedule.values[i]), dataset, format_double(r.generalized_loss),
               format_double(r.accuracy)});
  }
  std::cout << to_csv(t);
}

int run(int argc, char** argv) {
  CLI::App app{"Weight-space region laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  CliConfig cli;
  if (const char* env = std::getenv("WRL_STORE")) cli.store_path = env;
  std::uint64_t seed = 0;
  app.add_option("--store", cli.store_path, "checkpoint store directory (default $WRL_STORE)");
  app.add_option("--out", cli.output_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "global seed");
  app.add_option("--workers", cli.workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--plan", cli.plan_file, "JSON experiment plan")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-data", "write every dataset split as CSV");
  auto* pre = app.add_subcommand("pretrain", "train a pretrained lineage into the store");
  int lineage = 0;
  pre->add_option("--lineage", lineage, "lineage index (0 or 1)")->check(CLI::Range(0, 1));

  auto* grid = app.add_subcommand("finetune-grid", "fine-tune datasets x seeds into the store");
  int grid_seeds = 0;
  std::string grid_datasets;
  grid->add_option("--seeds", grid_seeds, "seeds per dataset (default from plan)");
  grid->add_option("--datasets", grid_datasets, "comma-separated dataset ids (default all)");

  auto* probe_cmd = app.add_subcommand("probe", "generalized loss of a stored model");
  std::string model_id, dataset_id;
  probe_cmd->add_option("--model", model_id, "checkpoint id")->required();
  probe_cmd->add_option("--dataset", dataset_id, "target dataset id")->required();

  auto* cluster_cmd = app.add_subcommand("cluster", "clustering suite");
  auto* project_cmd = app.add_subcommand("project", "2-D projection of grid task vectors");
  std::string method = "pca";
  project_cmd->add_option("--method", method, "pca or tsne")->check(CLI::IsMember({"pca", "tsne"}));

  std::string id_a, id_b, alphas;
  auto* interp = app.add_subcommand("interpolate", "interpolation scan (suite when --a/--b are absent)");
  interp->add_option("--a", id_a, "first checkpoint (alpha multiplies it)");
  interp->add_option("--b", id_b, "second checkpoint");
  interp->add_option("--dataset", dataset_id, "target dataset id");
  interp->add_option("--alphas", alphas, "comma-separated alpha values");
  auto* extra = app.add_subcommand("extrapolate", "extrapolation scan (suite when --a/--b are absent)");
  extra->add_option("--a", id_a, "first checkpoint");
  extra->add_option("--b", id_b, "second checkpoint");
  extra->add_option("--dataset", dataset_id, "target dataset id");

  std::string model_ids;
  int m = 0;
  std::uint64_t sample_seed = 0;
  auto* hull = app.add_subcommand("hull-sample", "flat-Dirichlet samples from the hull of stored models");
  hull->add_option("--models", model_ids, "comma-separated checkpoint ids")->required();
  hull->add_option("--m", m, "number of samples (default group size)");
  hull->add_option("--sample-seed", sample_seed, "sampling seed");

  std::string in_file, ex_file;
  auto* pb_cmd = app.add_subcommand("pb", "PB of two loss lists (suite when --in/--ex are absent)");
  pb_cmd->add_option("--in", in_file, "CSV of interior losses")->check(CLI::ExistingFile);
  pb_cmd->add_option("--ex", ex_file, "CSV of exterior losses")->check(CLI::ExistingFile);

  std::string exclude;
  auto* cen = app.add_subcommand("centroid", "centroid of stored models");
  cen->add_option("--models", model_ids, "comma-separated checkpoint ids")->required();
  cen->add_option("--exclude-dataset", exclude, "drop members fine-tuned on this dataset");

  auto* fuse = app.add_subcommand("fuse", "centroid fusion suite");
  auto* edge = app.add_subcommand("edge-scan", "radius scans around region centroids");

  std::string table_path, svg_path, x_col = "x", y_col = "y", std_col = "std", title;
  auto* rep_cmd = app.add_subcommand("report", "SVG line plot from a CSV table");
  rep_cmd->add_option("--table", table_path, "CSV with x, y and std columns")->required()->check(CLI::ExistingFile);
  rep_cmd->add_option("--svg", svg_path, "output SVG path (default <out>/figures/<table>.svg)");
  rep_cmd->add_option("--x", x_col, "x column");
  rep_cmd->add_option("--y", y_col, "mean column");
  rep_cmd->add_option("--std", std_col, "std column");
  rep_cmd->add_option("--title", title, "plot title");

  auto* all = app.add_subcommand("reproduce-all", "run every suite and write summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::Usage);
  }
  if (seed_opt->count()) cli.global_seed = seed;

  const ExperimentPlan plan = make_plan(cli);

  if (*gen) {
    Workspace ws(plan);
    for (const auto& d : ws.datasets()) {
      for (const auto* split : {&d.train, &d.test}) {
        std::ostringstream out;
        write_csv(*split, out);
        const std::string name = d.spec.dataset_id + (split == &d.train ? "-train.csv" : "-test.csv");
        write_text(fs::path(cli.output_dir) / "data" / name, out.str());
      }
      std::cout << d.spec.dataset_id << ',' << d.spec.family_id << ',' << d.train.size() << ',' << d.test.size()
                << ',' << format_double(positive_fraction(d.train)) << '\n';
    }
  } else if (*pre) {
    CheckpointStore store = open_store(cli);
    Workspace ws(plan, &store);
    std::cout << content_id(ws.pretrained(lineage)) << '\n';
  } else if (*grid) {
    CheckpointStore store = open_store(cli);
    Workspace ws(plan, &store);
    const int seeds = grid_seeds > 0 ? grid_seeds : plan.seeds_per_dataset;
    std::vector<std::string> ids = split_ids(grid_datasets);
    if (ids.empty())
      for (const auto& d : ws.datasets()) ids.push_back(d.spec.dataset_id);
    for (const auto& d : ids)
      for (int s = 0; s < seeds; ++s) {
        ws.finetuned(d, s);
        std::cout << d << ',' << s << ',' << ws.checkpoint_id(d, s) << '\n';
      }
  } else if (*probe_cmd) {
    CheckpointStore store = open_store(cli);
    Workspace ws(plan);
    const LossReport r = ws.loss(load_encoder(store, model_id), dataset_id);
    std::cout << "model_id,target_dataset,probe_train_loss,generalized_loss,accuracy,converged\n"
              << r.model_id << ',' << r.target_dataset_id << ',' << format_double(r.probe_train_loss) << ','
              << format_double(r.generalized_loss) << ',' << format_double(r.accuracy) << ',' << r.converged
              << '\n';
  } else if (*cluster_cmd) {
    std::optional<CheckpointStore> store;
    if (!cli.store_path.empty()) store.emplace(cli.store_path);
    Workspace ws(plan, store ? &*store : nullptr);
    finish_suite(run_clustering_suite(ws), cli);
  } else if (*project_cmd) {
    std::optional<CheckpointStore> store;
    if (!cli.store_path.empty()) store.emplace(cli.store_path);
    Workspace ws(plan, store ? &*store : nullptr);
    const auto models = ws.grid(plan.seeds_per_dataset);
    std::vector<WeightVector> enc;
    for (const auto& g : models) enc.push_back(g.encoder);
    const Eigen::MatrixXd xy =
        project_2d(task_vector_matrix(enc, ws.pretrained()),
                   method == "pca" ? ProjectionMethod::Pca : ProjectionMethod::Tsne, ws.job_seed("projection"));
    CsvTable t{{"model_id", "source_dataset", "family", "x", "y"}, {}};
    for (std::size_t i = 0; i < models.size(); ++i)
      t.add_row({models[i].id, models[i].source, models[i].family, format_double(xy(Eigen::Index(i), 0)),
                 format_double(xy(Eigen::Index(i), 1))});
    std::cout << to_csv(t);
  } else if (*interp || *extra) {
    const bool is_interp = static_cast<bool>(*interp);
    if (id_a.empty() && id_b.empty()) {
      std::optional<CheckpointStore> store;
      if (!cli.store_path.empty()) store.emplace(cli.store_path);
      Workspace ws(plan, store ? &*store : nullptr);
      const std::vector<Granularity> levels(std::begin(kAllGranularities), std::end(kAllGranularities));
      finish_suite(is_interp ? run_interpolation_suite(ws, levels) : run_extrapolation_suite(ws), cli);
    } else {
      if (id_a.empty() || id_b.empty() || dataset_id.empty())
        throw UsageError("--a, --b and --dataset go together");
      CheckpointStore store = open_store(cli);
      Workspace ws(plan);
      const WeightVector a = load_encoder(store, id_a), b = load_encoder(store, id_b);
      const std::string pair = id_a.substr(0, 12) + "|" + id_b.substr(0, 12);
      if (is_interp) {
        print_scan(ws, a, b, alphas.empty() ? interpolation_schedule(plan.interpolation_points) : parse_alphas(alphas),
                   dataset_id, pair);
      } else {
        const ExtrapolationSchedule s = extrapolation_schedule();
        print_scan(ws, a, b, s.positive, dataset_id, pair + ":positive");
        print_scan(ws, a, b, s.negative, dataset_id, pair + ":negative");
      }
    }
  } else if (*hull) {
    CheckpointStore store = open_store(cli);
    const ModelGroup group = load_group(store, split_ids(model_ids), GroupKind::In);
    if (group.size() < 2) throw DataError("hull-sample needs at least 2 models");
    const int count = m > 0 ? m : static_cast<int>(group.size());
    for (const auto& s : hull_sample(group, count, sample_seed)) {
      std::string coeffs;
      for (std::size_t i = 0; i < s.weights.coefficients.size(); ++i)
        coeffs += (i ? ";" : "") + format_double(s.weights.coefficients[i]);
      const std::string id = save_derived(store, s.model, "hull-sample", {{"coefficients", coeffs}});
      std::cout << id << ',' << coeffs << '\n';
    }
  } else if (*pb_cmd) {
    if (in_file.empty() && ex_file.empty()) {
      Workspace ws(plan);
      const std::vector<Granularity> levels(std::begin(kAllGranularities), std::end(kAllGranularities));
      finish_suite(run_pb_suite(ws, levels), cli);
    } else {
      if (in_file.empty() || ex_file.empty()) throw UsageError("--in and --ex go together");
      const auto in = read_losses(in_file), ex = read_losses(ex_file);
      std::cout << format_double(pb(in, ex)) << '\n';
    }
  } else if (*cen) {
    CheckpointStore store = open_store(cli);
    const ModelGroup group = load_group(store, split_ids(model_ids), GroupKind::In);
    if (exclude.empty()) {
      std::cout << save_derived(store, centroid(group), "centroid") << '\n';
    } else {
      const FilteredCentroid c = exclude_target_centroid(group, exclude);
      std::cout << save_derived(store, c.model, "centroid", {{"excluded_dataset", exclude}}) << ','
                << c.used << ',' << c.excluded << '\n';
    }
  } else if (*fuse) {
    std::optional<CheckpointStore> store;
    if (!cli.store_path.empty()) store.emplace(cli.store_path);
    Workspace ws(plan, store ? &*store : nullptr);
    finish_suite(run_fusion_suite(ws), cli);
  } else if (*edge) {
    std::optional<CheckpointStore> store;
    if (!cli.store_path.empty()) store.emplace(cli.store_path);
    Workspace ws(plan, store ? &*store : nullptr);
    finish_suite(run_edge_suite(ws, {Granularity::SameDataset, Granularity::General}), cli);
  } else if (*rep_cmd) {
    PlotSpec spec;
    spec.x_column = x_col;
    spec.y_column = y_col;
    spec.std_column = std_col;
    spec.title = title.empty() ? fs::path(table_path).stem().string() : title;
    const std::string svg = emit_svg_lineplot(read_csv(table_path), spec);
    const fs::path target = svg_path.empty()
                                ? fs::path(cli.output_dir) / "figures" / (fs::path(table_path).stem().string() + ".svg")
                                : fs::path(svg_path);
    write_text(target, svg);
    std::cout << target.string() << '\n';
  } else if (*all) {
    std::optional<CheckpointStore> store;
    if (!cli.store_path.empty()) store.emplace(cli.store_path);
    Workspace ws(plan, store ? &*store : nullptr);
    const ExperimentReport rep = run_all(ws);
    write_report(rep, cli.output_dir);
    const std::string text = summary_json(rep);
    std::cout << (fs::path(cli.output_dir) / "summary.json").string() << ' '
              << sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "wrl: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "wrl: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Data);
  }
}
