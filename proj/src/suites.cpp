#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "wrl/error.hpp"
#include "wrl/experiments.hpp"
#include "wrl/geometry.hpp"
#include "wrl/parallel.hpp"
#include "wrl/regions.hpp"

namespace wrl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Population standard deviation.
double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::string fd(double v) { return format_double(v); }

ExperimentReport new_report(const Workspace& ws) {
  ExperimentReport r;
  r.plan_name = ws.plan().name;
  return r;
}

// x, mean, std, n over the values collected per x (in key order).
CsvTable curve_table(const std::string& x_name, const std::map<double, std::vector<double>>& values) {
  CsvTable t{{x_name, "mean", "std", "n"}, {}};
  for (const auto& [x, v] : values) t.add_row({fd(x), fd(mean(v)), fd(stddev(v)), std::to_string(v.size())});
  return t;
}

void add_figure(ExperimentReport& rep, const std::string& table, const std::string& title, const std::string& x,
                const std::string& y_label) {
  PlotSpec spec;
  spec.title = title;
  spec.x_column = x;
  spec.y_column = "mean";
  spec.std_column = "std";
  spec.x_label = x;
  spec.y_label = y_label;
  spec.legend = "mean +- std";
  rep.figures[table] = emit_svg_lineplot(rep.tables.at(table), spec);
}

ModelGroup group_of(GroupKind kind, const std::vector<GridModel>& models, const std::string& provenance) {
  std::vector<WeightVector> members;
  std::vector<std::string> sources;
  for (const auto& m : models) {
    members.push_back(m.encoder);
    sources.push_back(m.source);
  }
  return make_group(kind, std::move(members), std::move(sources), provenance);
}

std::vector<GridModel> models_of(const std::vector<GridModel>& grid, const std::string& dataset_id) {
  std::vector<GridModel> out;
  for (const auto& m : grid)
    if (m.source == dataset_id) out.push_back(m);
  return out;
}

std::vector<const WeightVector*> pointers(const std::vector<WeightVector>& v) {
  std::vector<const WeightVector*> out;
  for (const auto& w : v) out.push_back(&w);
  return out;
}

std::vector<const WeightVector*> pointers(const std::vector<GridModel>& v) {
  std::vector<const WeightVector*> out;
  for (const auto& m : v) out.push_back(&m.encoder);
  return out;
}

// Per-encoder mean over targets, plus mean accuracy.
struct Scored {
  std::vector<double> loss;
  std::vector<double> accuracy;
};

Scored score(Workspace& ws, const std::vector<const WeightVector*>& encoders, const std::vector<std::string>& targets) {
  const auto reports = ws.losses(encoders, targets);
  Scored s;
  const std::size_t t = targets.size();
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    double l = 0.0, a = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      l += reports[i * t + j].generalized_loss;
      a += reports[i * t + j].accuracy;
    }
    s.loss.push_back(l / static_cast<double>(t));
    s.accuracy.push_back(a / static_cast<double>(t));
  }
  return s;
}

void require_two_per_label(const std::vector<std::string>& truth, const std::string& study) {
  std::map<std::string, int> counts;
  for (const auto& t : truth) ++counts[t];
  for (const auto& [label, n] : counts)
    if (n < 2) throw DataError(study + ": label " + label + " has fewer than 2 models");
}

}  // namespace

ExperimentReport run_clustering_suite(Workspace& ws) {
  const auto t0 = Clock::now();
  const ExperimentPlan& plan = ws.plan();
  ExperimentReport rep = new_report(ws);
  CsvTable summary{{"study", "labeling", "k", "models", "accuracy", "mean_f1"}, {}};
  CsvTable f1{{"study", "labeling", "label", "f1"}, {}};
  CsvTable assignments{{"study", "labeling", "model_id", "truth", "cluster"}, {}};
  std::map<std::string, double> accuracy;

  auto cluster = [&](const std::string& study, const std::string& labeling, const Eigen::MatrixXd& sim,
                     const std::vector<std::string>& truth, const std::vector<std::string>& ids) {
    require_two_per_label(truth, study);
    const int k = static_cast<int>(std::set<std::string>(truth.begin(), truth.end()).size());
    const ClusterResult r = cluster_models(sim, truth, k, ws.job_seed("cluster/" + study + "/" + labeling));
    double f1_sum = 0.0;
    for (const auto& [label, v] : r.per_class_f1) {
      f1.add_row({study, labeling, label, fd(v)});
      f1_sum += v;
    }
    for (std::size_t i = 0; i < ids.size(); ++i)
      assignments.add_row({study, labeling, ids[i], truth[i], std::to_string(r.assignments[i])});
    summary.add_row({study, labeling, std::to_string(k), std::to_string(ids.size()), fd(r.match.accuracy),
                     fd(f1_sum / static_cast<double>(r.per_class_f1.size()))});
    accuracy[study + "." + labeling] = r.match.accuracy;
  };

  // Same-dataset and family clustering over the full seed grid.
  const WeightVector& pre = ws.pretrained(0);
  const auto grid = ws.grid(plan.clustering_seeds);
  std::vector<WeightVector> encoders;
  std::vector<std::string> ids, by_dataset, by_family;
  for (const auto& m : grid) {
    encoders.push_back(m.encoder);
    ids.push_back(m.id);
    by_dataset.push_back(m.source);
    by_family.push_back(m.family);
  }
  const Eigen::MatrixXd deltas = task_vector_matrix(encoders, pre);
  const Eigen::MatrixXd sim = cosine_matrix(deltas, ids);
  cluster("grid", "dataset", sim, by_dataset, ids);
  cluster("grid", "family", sim, by_family, ids);

  CsvTable similarity{{"model_id"}, {}};
  for (const auto& id : ids) similarity.header.push_back(id.substr(0, 12));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    std::vector<std::string> row{ids[static_cast<std::size_t>(i)].substr(0, 12)};
    for (Eigen::Index j = 0; j < sim.cols(); ++j) row.push_back(fd(sim(i, j)));
    similarity.add_row(std::move(row));
  }
  rep.tables["clustering_similarity"] = std::move(similarity);

  CsvTable projection{{"method", "model_id", "source_dataset", "family", "x", "y"}, {}};
  for (auto method : {ProjectionMethod::Pca, ProjectionMethod::Tsne}) {
    const Eigen::MatrixXd xy = project_2d(deltas, method, ws.job_seed("projection"));
    for (std::size_t i = 0; i < grid.size(); ++i)
      projection.add_row({method == ProjectionMethod::Pca ? "pca" : "tsne", ids[i], grid[i].source, grid[i].family,
                          fd(xy(static_cast<Eigen::Index>(i), 0)), fd(xy(static_cast<Eigen::Index>(i), 1))});
  }
  rep.tables["clustering_projection"] = std::move(projection);
  rep.timings["clustering.grid"] = seconds_since(t0);

  // Data type versus data size.
  const auto t1 = Clock::now();
  {
    std::vector<WeightVector> sub;
    std::vector<std::string> sub_ids, by_type, by_size;
    for (const auto& d : ws.datasets())
      for (int size : plan.subsample_sizes)
        for (int s = 0; s < plan.subsample_seeds; ++s) {
          GridModel m = ws.subsampled(d.spec.dataset_id, size, s);
          sub.push_back(m.encoder);
          sub_ids.push_back(m.id);
          by_type.push_back(d.spec.dataset_id);
          by_size.push_back(std::to_string(size));
        }
    const Eigen::MatrixXd s = cosine_matrix(task_vector_matrix(sub, pre), sub_ids);
    cluster("size-control", "type", s, by_type, sub_ids);
    cluster("size-control", "size", s, by_size, sub_ids);
  }
  rep.timings["clustering.size_control"] = seconds_since(t1);

  // Two pretrained lineages, task vectors taken from their midpoint.
  const auto t2 = Clock::now();
  {
    const WeightVector& pre_b = ws.pretrained(1);
    WeightVector reference = pre;
    reference.values = 0.5 * (pre.values + pre_b.values);
    std::vector<WeightVector> both;
    std::vector<std::string> both_ids, by_lineage;
    for (int lineage = 0; lineage < 2; ++lineage)
      for (const auto& m : ws.grid(plan.lineage_seeds, lineage)) {
        both.push_back(m.encoder);
        both_ids.push_back(m.id);
        by_lineage.push_back(lineage == 0 ? "A" : "B");
      }
    const Eigen::MatrixXd s = cosine_matrix(task_vector_matrix(both, reference), both_ids);
    cluster("lineage", "pretrained", s, by_lineage, both_ids);
  }
  rep.timings["clustering.lineage"] = seconds_since(t2);

  rep.tables["clustering"] = std::move(summary);
  rep.tables["clustering_f1"] = std::move(f1);
  rep.tables["clustering_assignments"] = std::move(assignments);
  rep.set("clustering.dataset.accuracy", accuracy.at("grid.dataset"), "clustering");
  rep.set("clustering.family.accuracy", accuracy.at("grid.family"), "clustering");
  rep.set("clustering.size_control.type_accuracy", accuracy.at("size-control.type"), "clustering");
  rep.set("clustering.size_control.size_accuracy", accuracy.at("size-control.size"), "clustering");
  rep.set("clustering.lineage.accuracy", accuracy.at("lineage.pretrained"), "clustering");
  rep.set("clustering.models", static_cast<double>(grid.size()), "clustering");
  return rep;
}

namespace {

struct ScanPair {
  std::string id;
  Granularity level;
  const WeightVector* a;
  const WeightVector* b;
  std::vector<std::string> targets;
  bool centroids = false;
};

// Per-alpha mean loss over targets for each pair, and the AlphaScan rows.
std::vector<std::vector<double>> scan_pairs(Workspace& ws, const std::vector<ScanPair>& pairs,
                                            const AlphaSchedule& schedule, const std::string& schedule_name,
                                            CsvTable& rows) {
  std::vector<std::vector<double>> out;
  for (const auto& p : pairs) {
    const auto models = interpolate_pair(*p.a, *p.b, schedule);
    const auto reports = ws.losses(pointers(models), p.targets);
    std::vector<double> curve;
    const std::size_t t = p.targets.size();
    for (std::size_t i = 0; i < models.size(); ++i) {
      double l = 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        const auto& r = reports[i * t + j];
        l += r.generalized_loss;
        std::vector<std::string> row{p.id, fd(schedule.values[i]), r.target_dataset_id, fd(r.generalized_loss),
                                     fd(r.accuracy)};
        if (rows.header.size() == 6) row.insert(row.begin() + 1, schedule_name);
        rows.add_row(std::move(row));
      }
      curve.push_back(l / static_cast<double>(t));
    }
    out.push_back(std::move(curve));
  }
  return out;
}

std::string seed_pair(int i, int j) { return std::to_string(i) + "-" + std::to_string(j); }

}  // namespace

ExperimentReport run_interpolation_suite(Workspace& ws, const std::vector<Granularity>& levels) {
  const auto t0 = Clock::now();
  const ExperimentPlan& plan = ws.plan();
  ExperimentReport rep = new_report(ws);
  const auto grid = ws.grid(plan.seeds_per_dataset);
  const AlphaSchedule schedule = interpolation_schedule(plan.interpolation_points);
  const std::size_t last = schedule.values.size() - 1;

  std::deque<WeightVector> owned;
  auto centroid_of = [&](const std::vector<GridModel>& models, const std::string& what) -> const WeightVector* {
    owned.push_back(centroid(group_of(GroupKind::In, models, what)));
    return &owned.back();
  };
  auto family_models = [&](const std::string& family) {
    std::vector<GridModel> out;
    for (const auto& m : grid)
      if (m.family == family) out.push_back(m);
    return out;
  };

  std::vector<ScanPair> pairs;
  for (Granularity level : levels) {
    const std::string g = to_string(level);
    if (level == Granularity::SameDataset) {
      for (const auto& d : ws.target_ids()) {
        const auto in = models_of(grid, d);
        for (std::size_t i = 0; i < in.size(); ++i)
          for (std::size_t j = i + 1; j < in.size(); ++j)
            pairs.push_back({g + ":" + d + ":" + seed_pair(int(i), int(j)), level, &ws.finetuned(d, int(i)).encoder,
                             &ws.finetuned(d, int(j)).encoder, {d}, false});
        const std::size_t half = in.size() / 2;
        std::vector<GridModel> first(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(half));
        std::vector<GridModel> second(in.begin() + static_cast<std::ptrdiff_t>(half), in.end());
        pairs.push_back({g + ":" + d + ":centroids", level, centroid_of(first, d + " first half"),
                         centroid_of(second, d + " second half"), {d}, true});
      }
    } else if (level == Granularity::SameTask) {
      for (const auto& f : ws.families()) {
        const auto ds = ws.family_dataset_ids(f.family_id);
        for (std::size_t a = 0; a < ds.size(); ++a)
          for (std::size_t b = a + 1; b < ds.size(); ++b) {
            for (int s = 0; s < plan.task_pair_seeds; ++s)
              pairs.push_back({g + ":" + ds[a] + "|" + ds[b] + ":" + std::to_string(s), level,
                               &ws.finetuned(ds[a], s).encoder, &ws.finetuned(ds[b], s).encoder, {ds[a], ds[b]},
                               false});
            pairs.push_back({g + ":" + ds[a] + "|" + ds[b] + ":centroids", level,
                             centroid_of(models_of(grid, ds[a]), ds[a]), centroid_of(models_of(grid, ds[b]), ds[b]),
                             {ds[a], ds[b]}, true});
          }
      }
    } else {
      const auto& fams = ws.families();
      for (std::size_t a = 0; a < fams.size(); ++a)
        for (std::size_t b = a + 1; b < fams.size(); ++b) {
          const auto da = ws.family_dataset_ids(fams[a].family_id);
          const auto db = ws.family_dataset_ids(fams[b].family_id);
          for (std::size_t k = 0; k < std::min(da.size(), db.size()); ++k)
            pairs.push_back({g + ":" + da[k] + "|" + db[k] + ":0", level, &ws.finetuned(da[k], 0).encoder,
                             &ws.finetuned(db[k], 0).encoder, {da[k], db[k]}, false});
          std::vector<std::string> both = da;
          both.insert(both.end(), db.begin(), db.end());
          pairs.push_back({g + ":" + fams[a].family_id + "|" + fams[b].family_id + ":centroids", level,
                           centroid_of(family_models(fams[a].family_id), fams[a].family_id),
                           centroid_of(family_models(fams[b].family_id), fams[b].family_id), both, true});
        }
    }
  }

  CsvTable rows{{"pair_id", "alpha", "target_dataset", "generalized_loss", "accuracy"}, {}};
  const auto curves = scan_pairs(ws, pairs, schedule, "interpolation", rows);

  // Endpoint identity: the scan's endpoints against direct probes.
  double endpoint_gap = 0.0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const double la = score(ws, {pairs[p].a}, pairs[p].targets).loss[0];
    const double lb = score(ws, {pairs[p].b}, pairs[p].targets).loss[0];
    endpoint_gap = std::max({endpoint_gap, std::abs(curves[p][last] - la), std::abs(curves[p][0] - lb)});
  }

  CsvTable pair_table{{"pair_id", "granularity", "centroids", "loss_alpha0", "loss_alpha1", "min_interior_loss",
                       "argmin_alpha", "interior_beats_endpoints"},
                      {}};
  for (Granularity level : levels) {
    const std::string g = to_string(level);
    std::map<double, std::vector<double>> per_alpha, centroid_alpha;
    int wins = 0, count = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      if (pairs[p].level != level) continue;
      const auto& c = curves[p];
      std::size_t best = 1;
      for (std::size_t i = 1; i < last; ++i)
        if (c[i] < c[best]) best = i;
      const bool beats = c[best] < std::min(c[0], c[last]);
      pair_table.add_row({pairs[p].id, g, pairs[p].centroids ? "1" : "0", fd(c[0]), fd(c[last]), fd(c[best]),
                          fd(schedule.values[best]), beats ? "1" : "0"});
      auto& target = pairs[p].centroids ? centroid_alpha : per_alpha;
      for (std::size_t i = 0; i <= last; ++i) target[schedule.values[i]].push_back(c[i]);
      if (!pairs[p].centroids) {
        ++count;
        wins += beats ? 1 : 0;
      }
    }
    const std::string curve_name = "interpolation_curve_" + g;
    rep.tables[curve_name] = curve_table("alpha", per_alpha);
    add_figure(rep, curve_name, "Interpolation, " + g + " pairs", "alpha", "generalized loss");
    const std::string centroid_name = "interpolation_centroids_" + g;
    rep.tables[centroid_name] = curve_table("alpha", centroid_alpha);
    add_figure(rep, centroid_name, "Centroid interpolation, " + g, "alpha", "generalized loss");

    const double end0 = mean(per_alpha.at(schedule.values[0]));
    const double end1 = mean(per_alpha.at(schedule.values[last]));
    double max_interior = -std::numeric_limits<double>::infinity();
    double min_interior = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < last; ++i) {
      const double m = mean(per_alpha.at(schedule.values[i]));
      max_interior = std::max(max_interior, m);
      min_interior = std::min(min_interior, m);
    }
    double centroid_min = std::numeric_limits<double>::infinity();
    for (const auto& [alpha, v] : centroid_alpha) centroid_min = std::min(centroid_min, mean(v));
    const std::string key = "interpolation." + g;
    rep.set(key + ".pairs", count, "interpolation_pairs");
    rep.set(key + ".max_endpoint_mean", std::max(end0, end1), curve_name);
    rep.set(key + ".max_interior_mean", max_interior, curve_name);
    rep.set(key + ".min_interior_mean", min_interior, curve_name);
    rep.set(key + ".interior_win_fraction", count ? double(wins) / count : 0.0, "interpolation_pairs");
    rep.set(key + ".centroid_min_mean", centroid_min, centroid_name);
  }
  rep.tables["interpolation"] = std::move(rows);
  rep.tables["interpolation_pairs"] = std::move(pair_table);
  rep.set("interpolation.endpoint_max_abs_diff", endpoint_gap, "interpolation");
  rep.timings["interpolation"] = seconds_since(t0);
  return rep;
}

ExperimentReport run_pb_suite(Workspace& ws, const std::vector<Granularity>& levels) {
  const auto t0 = Clock::now();
  const ExperimentPlan& plan = ws.plan();
  ExperimentReport rep = new_report(ws);
  const auto grid = ws.grid(plan.seeds_per_dataset);
  const WeightVector& pre = ws.pretrained(0);

  CsvTable losses{{"granularity", "region", "group", "model_id", "loss"}, {}};
  CsvTable table{{"granularity", "region", "in", "ex", "in_prime", "in_vs_ex", "in_prime_vs_ex", "in_prime_vs_in",
                  "in_mean", "ex_mean", "in_prime_mean"},
                 {}};

  auto compare = [&](Granularity level, const std::string& region, const std::vector<GridModel>& in,
                     const std::vector<const WeightVector*>& ex, const std::vector<std::string>& ex_ids,
                     const std::vector<std::string>& targets) {
    const std::string g = to_string(level);
    const ModelGroup in_group = group_of(GroupKind::In, in, g + " " + region);
    const auto hull = hull_sample(in_group, static_cast<int>(in.size()), ws.job_seed("hull/" + g + "/" + region));
    std::vector<const WeightVector*> hull_ptrs;
    for (const auto& h : hull) hull_ptrs.push_back(&h.model);
    const auto l_in = score(ws, pointers(in), targets).loss;
    const auto l_ex = score(ws, ex, targets).loss;
    const auto l_hull = score(ws, hull_ptrs, targets).loss;
    for (std::size_t i = 0; i < in.size(); ++i) losses.add_row({g, region, "In", in[i].id, fd(l_in[i])});
    for (std::size_t i = 0; i < ex.size(); ++i) losses.add_row({g, region, "Ex", ex_ids[i], fd(l_ex[i])});
    for (std::size_t i = 0; i < hull.size(); ++i)
      losses.add_row({g, region, "In'", content_id(hull[i].model), fd(l_hull[i])});
    table.add_row({g, region, std::to_string(in.size()), std::to_string(ex.size()), std::to_string(hull.size()),
                   fd(pb(l_in, l_ex)), fd(pb(l_hull, l_ex)), fd(pb(l_hull, l_in)), fd(mean(l_in)), fd(mean(l_ex)),
                   fd(mean(l_hull))});
  };

  for (Granularity level : levels) {
    if (level == Granularity::SameDataset) {
      for (const auto& d : ws.target_ids()) {
        std::vector<GridModel> in;
        std::vector<const WeightVector*> ex;
        std::vector<std::string> ex_ids;
        for (const auto& m : grid) {
          if (m.source == d) {
            in.push_back(m);
          } else {
            ex.push_back(&m.encoder);
            ex_ids.push_back(m.id);
          }
        }
        compare(level, d, in, ex, ex_ids, {d});
      }
    } else if (level == Granularity::SameTask) {
      for (const auto& f : ws.families()) {
        std::vector<GridModel> in;
        std::vector<const WeightVector*> ex;
        std::vector<std::string> ex_ids;
        for (const auto& m : grid) {
          if (m.family == f.family_id) {
            in.push_back(m);
          } else {
            ex.push_back(&m.encoder);
            ex_ids.push_back(m.id);
          }
        }
        compare(level, f.family_id, in, ex, ex_ids, ws.family_dataset_ids(f.family_id));
      }
    } else {
      std::vector<std::string> all;
      for (const auto& d : ws.datasets()) all.push_back(d.spec.dataset_id);
      const double radius = avg_distance(group_of(GroupKind::In, grid, "general"), pre);
      std::vector<WeightVector> random;
      for (std::size_t i = 0; i < grid.size(); ++i)
        random.push_back(random_direction_model(pre, radius, ws.job_seed("pb/random/" + std::to_string(i))));
      std::vector<std::string> ids;
      for (const auto& r : random) ids.push_back(content_id(r));
      compare(level, "all", grid, pointers(random), ids, all);
    }
  }

  // Granularity means over regions.
  for (Granularity level : levels) {
    const std::string g = to_string(level);
    std::vector<double> a, b, c;
    for (const auto& row : table.rows) {
      if (row[0] != g) continue;
      a.push_back(std::stod(row[5]));
      b.push_back(std::stod(row[6]));
      c.push_back(std::stod(row[7]));
    }
    rep.tables["pb"] = table;
    rep.set("pb." + g + ".in_vs_ex", mean(a), "pb");
    rep.set("pb." + g + ".in_prime_vs_ex", mean(b), "pb");
    rep.set("pb." + g + ".in_prime_vs_in", mean(c), "pb");
  }
  rep.tables["pb"] = std::move(table);
  rep.tables["pb_losses"] = std::move(losses);
  rep.timings["pb"] = seconds_since(t0);
  return rep;
}

ExperimentReport run_extrapolation_suite(Workspace& ws) {
  const auto t0 = Clock::now();
  const ExperimentPlan& plan = ws.plan();
  ExperimentReport rep = new_report(ws);
  const ExtrapolationSchedule ext = extrapolation_schedule();
  const AlphaSchedule inner = interpolation_schedule(plan.interpolation_points);

  std::vector<ScanPair> pairs;
  for (const auto& d : ws.target_ids()) {
    int made = 0;
    for (int i = 0; i < plan.seeds_per_dataset && made < plan.extrapolation_pairs; ++i)
      for (int j = i + 1; j < plan.seeds_per_dataset && made < plan.extrapolation_pairs; ++j, ++made)
        pairs.push_back({"same-dataset:" + d + ":" + seed_pair(i, j), Granularity::SameDataset,
                         &ws.finetuned(d, i).encoder, &ws.finetuned(d, j).encoder, {d}, false});
  }

  CsvTable rows{{"pair_id", "schedule", "alpha", "target_dataset", "generalized_loss", "accuracy"}, {}};
  const auto c_in = scan_pairs(ws, pairs, inner, "interpolation", rows);
  const auto c_pos = scan_pairs(ws, pairs, ext.positive, "positive", rows);
  const auto c_neg = scan_pairs(ws, pairs, ext.negative, "negative", rows);

  std::map<double, std::vector<double>> all, interior;
  std::map<std::string, std::map<double, std::vector<double>>> by_dataset;
  auto collect = [&](const std::vector<std::vector<double>>& curves, const AlphaSchedule& s, bool basin) {
    for (std::size_t p = 0; p < pairs.size(); ++p)
      for (std::size_t i = 0; i < s.values.size(); ++i) {
        const double a = s.values[i];
        if (basin) interior[a].push_back(curves[p][i]);
        // Alpha 0 and 1 are shared by all three schedules; count them once.
        if (!basin && (a == 0.0 || a == 1.0)) continue;
        all[a].push_back(curves[p][i]);
        by_dataset[pairs[p].targets[0]][a].push_back(curves[p][i]);
      }
  };
  collect(c_in, inner, true);
  collect(c_in, inner, false);
  collect(c_pos, ext.positive, false);
  collect(c_neg, ext.negative, false);
  // Restore alpha 0 and 1 from the interior scan.
  for (double a : {0.0, 1.0}) {
    all[a] = interior.at(a);
    for (std::size_t p = 0; p < pairs.size(); ++p)
      by_dataset[pairs[p].targets[0]][a].push_back(c_in[p][a == 0.0 ? 0 : inner.values.size() - 1]);
  }

  double interior_mean = 0.0;
  for (const auto& [a, v] : interior) interior_mean += mean(v);
  interior_mean /= static_cast<double>(interior.size());

  double pos_far = std::numeric_limits<double>::infinity(), neg_far = std::numeric_limits<double>::infinity();
  std::vector<double> pos_far_v, neg_far_v;
  double edge_alpha = std::numeric_limits<double>::quiet_NaN();
  double edge_dist = std::numeric_limits<double>::infinity();
  for (const auto& [a, v] : all) {
    const double m = mean(v);
    if (a >= 8.0) {
      pos_far = std::min(pos_far, m);
      pos_far_v.push_back(m);
    }
    if (a <= -8.0) {
      neg_far = std::min(neg_far, m);
      neg_far_v.push_back(m);
    }
    if (m > 2.0 * interior_mean && std::abs(a - 0.5) < edge_dist) {
      edge_dist = std::abs(a - 0.5);
      edge_alpha = a;
    }
  }

  rep.tables["extrapolation"] = std::move(rows);
  rep.tables["extrapolation_curve"] = curve_table("alpha", all);
  add_figure(rep, "extrapolation_curve", "Extrapolation, same-dataset pairs", "alpha", "generalized loss");
  CsvTable per{{"dataset", "alpha", "mean", "std", "n"}, {}};
  for (const auto& [d, curve] : by_dataset)
    for (const auto& [a, v] : curve) per.add_row({d, fd(a), fd(mean(v)), fd(stddev(v)), std::to_string(v.size())});
  rep.tables["extrapolation_by_dataset"] = std::move(per);

  const double at1 = mean(all.at(1.0));
  const double at32 = mean(all.at(ext.positive.values.back()));
  rep.set("extrapolation.pairs", static_cast<double>(pairs.size()), "extrapolation");
  rep.set("extrapolation.interior_mean", interior_mean, "extrapolation_curve");
  rep.set("extrapolation.positive_far_min_mean", pos_far, "extrapolation_curve");
  rep.set("extrapolation.negative_far_min_mean", neg_far, "extrapolation_curve");
  rep.set("extrapolation.positive_far_mean", mean(pos_far_v), "extrapolation_curve");
  rep.set("extrapolation.negative_far_mean", mean(neg_far_v), "extrapolation_curve");
  rep.set("extrapolation.loss_alpha32_over_alpha1", at32 / at1, "extrapolation_curve");
  rep.set("extrapolation.basin_edge_alpha", edge_alpha, "extrapolation_curve");
  rep.set("extrapolation.schedule.positive_first", ext.positive.values.front(), "extrapolation");
  rep.set("extrapolation.schedule.positive_last", ext.positive.values.back(), "extrapolation");
  rep.set("extrapolation.schedule.negative_first", ext.negative.values.front(), "extrapolation");
  rep.set("extrapolation.schedule.negative_last", ext.negative.values.back(), "extrapolation");
  rep.timings["extrapolation"] = seconds_since(t0);
  return rep;
}

ExperimentReport run_edge_suite(Workspace& ws, const std::vector<Granularity>& levels) {
  const auto t0 = Clock::now();
  const ExperimentPlan& plan = ws.plan();
  ExperimentReport rep = new_report(ws);
  const auto grid = ws.grid(plan.seeds_per_dataset);
  CsvTable rows{{"granularity", "region", "direction", "direction_index", "radius", "accuracy", "generalized_loss"},
                {}};
  CsvTable in_rows{{"granularity", "region", "model_id", "accuracy", "generalized_loss", "distance_to_center"}, {}};
  CsvTable units{{"granularity", "region", "unit_radius", "center_norm"}, {}};

  for (Granularity level : levels) {
    if (level == Granularity::SameTask) throw DataError("edge suite: same-task level is not scanned");
    const std::string g = to_string(level);
    std::vector<std::pair<std::string, std::vector<std::string>>> regions;
    if (level == Granularity::SameDataset) {
      for (const auto& d : ws.target_ids()) regions.push_back({d, {d}});
    } else {
      std::vector<std::string> all;
      for (const auto& d : ws.datasets()) all.push_back(d.spec.dataset_id);
      regions.push_back({"all", all});
    }
    std::map<double, std::vector<double>> origin_curve, random_curve;
    for (const auto& [region, targets] : regions) {
      const auto in = level == Granularity::SameDataset ? models_of(grid, region) : grid;
      const ModelGroup group = group_of(GroupKind::In, in, g + " " + region);
      const WeightVector center = centroid(group);
      const double unit = avg_distance(group, center);
      units.add_row({g, region, fd(unit), fd(center.values.norm())});
      const auto in_score = score(ws, pointers(in), targets);
      for (std::size_t i = 0; i < in.size(); ++i)
        in_rows.add_row({g, region, in[i].id, fd(in_score.accuracy[i]), fd(in_score.loss[i]),
                         fd((in[i].encoder.values - center.values).norm())});
      for (int r = -1; r < plan.random_directions; ++r) {
        const bool origin = r < 0;
        const auto models =
            radius_scan(center, origin ? RadiusDirection::Origin : RadiusDirection::Random, plan.radii, unit,
                        ws.job_seed("edge/" + g + "/" + region + "/" + std::to_string(r)));
        const auto s = score(ws, pointers(models), targets);
        for (std::size_t i = 0; i < models.size(); ++i) {
          rows.add_row({g, region, origin ? "origin" : "random", std::to_string(origin ? 0 : r), fd(plan.radii[i]),
                        fd(s.accuracy[i]), fd(s.loss[i])});
          (origin ? origin_curve : random_curve)[plan.radii[i]].push_back(s.accuracy[i]);
        }
      }
    }
    rep.tables["edge_origin_" + g] = curve_table("radius", origin_curve);
    add_figure(rep, "edge_origin_" + g, "Centroid toward origin, " + g, "radius", "accuracy");
    rep.tables["edge_random_" + g] = curve_table("radius", random_curve);
    add_figure(rep, "edge_random_" + g, "Centroid toward random directions, " + g, "radius", "accuracy");
  }
  rep.tables["edge"] = std::move(rows);
  rep.tables["edge_in"] = std::move(in_rows);
  rep.tables["edge_units"] = std::move(units);

  const CsvTable& edge = rep.tables.at("edge");
  const CsvTable& ein = rep.tables.at("edge_in");
  for (Granularity level : levels) {
    const std::string g = to_string(level);
    std::vector<double> near, far, o_near, o_far, in_acc;
    for (const auto& row : edge.rows) {
      if (row[0] != g) continue;
      const double radius = std::stod(row[4]), acc = std::stod(row[5]);
      auto& bucket_near = row[2] == "random" ? near : o_near;
      auto& bucket_far = row[2] == "random" ? far : o_far;
      if (radius <= 1.0) bucket_near.push_back(acc);
      if (radius >= 4.0) bucket_far.push_back(acc);
    }
    for (const auto& row : ein.rows)
      if (row[0] == g) in_acc.push_back(std::stod(row[3]));
    const std::string key = "edge." + g;
    rep.set(key + ".in_mean_accuracy", mean(in_acc), "edge_in");
    rep.set(key + ".random_near_accuracy", mean(near), "edge");
    rep.set(key + ".random_far_accuracy", mean(far), "edge");
    rep.set(key + ".origin_near_accuracy", mean(o_near), "edge");
    rep.set(key + ".origin_far_accuracy", mean(o_far), "edge");
  }
  rep.timings["edge"] = seconds_since(t0);
  return rep;
}

ExperimentReport run_fusion_suite(Workspace& ws) {
  const auto t0 = Clock::now();
  const ExperimentPlan& plan = ws.plan();
  ExperimentReport rep = new_report(ws);
  const auto grid = ws.grid(plan.seeds_per_dataset);
  const WeightVector& pre = ws.pretrained(0);
  const ModelGroup general = group_of(GroupKind::In, grid, "all fine-tuned models");
  const auto targets = ws.target_ids();

  std::vector<FilteredCentroid> starts;
  for (const auto& d : targets) starts.push_back(exclude_target_centroid(general, d));

  struct Job {
    std::size_t target;
    bool few_shot;
    int seed;
    bool from_centroid;
  };
  std::vector<Job> jobs;
  for (int few = 0; few < 2; ++few)
    for (std::size_t t = 0; t < targets.size(); ++t)
      for (int s = 0; s < plan.fusion_seeds; ++s)
        for (int c = 0; c < 2; ++c) jobs.push_back({t, few == 1, s, c == 1});
  const auto acc = parallel_map(jobs.size(), plan.workers, [&](std::size_t i) {
    const Job& j = jobs[i];
    const TargetData& data = ws.dataset(targets[j.target]);
    TrainConfig tc = plan.fusion;
    tc.seed = ws.job_seed(std::string("fusion/") + (j.few_shot ? "few-shot/" : "full/") + targets[j.target] + "/" +
                          std::to_string(j.seed));
    if (j.few_shot) tc.max_examples = plan.few_shot_examples;
    const WeightVector& start = j.from_centroid ? starts[j.target].model : pre;
    return evaluate(finetune(start, ws.config(), data.train, tc), ws.config(), data.test).accuracy;
  });

  CsvTable table{{"regime", "target_dataset", "centroid_accuracy", "pretrained_accuracy", "gain", "gain_std",
                  "outcome", "models_used", "models_excluded"},
                 {}};
  std::size_t k = 0;
  for (int few = 0; few < 2; ++few) {
    const std::string regime = few ? "few-shot" : "full";
    std::map<double, std::vector<double>> curve;
    std::vector<double> gains;
    int wins = 0, ties = 0, losses = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      std::vector<double> c, p, g;
      for (int s = 0; s < plan.fusion_seeds; ++s) {
        p.push_back(acc[k++]);
        c.push_back(acc[k++]);
        g.push_back(c.back() - p.back());
      }
      const double gain = mean(g);
      const char* outcome = gain > plan.tie_tolerance ? "win" : gain < -plan.tie_tolerance ? "loss" : "tie";
      wins += gain > plan.tie_tolerance;
      losses += gain < -plan.tie_tolerance;
      ties += std::abs(gain) <= plan.tie_tolerance;
      gains.push_back(gain);
      curve[static_cast<double>(t)] = g;
      table.add_row({regime, targets[t], fd(mean(c)), fd(mean(p)), fd(gain), fd(stddev(g)), outcome,
                     std::to_string(starts[t].used), std::to_string(starts[t].excluded)});
    }
    const std::string curve_name = "fusion_gain_" + regime;
    rep.tables[curve_name] = curve_table("target_index", curve);
    add_figure(rep, curve_name, "Centroid minus pretrained accuracy, " + regime, "target_index", "gain");
    rep.tables["fusion"] = table;
    const std::string key = "fusion." + regime;
    const double n = static_cast<double>(targets.size());
    rep.set(key + ".mean_gain", mean(gains), "fusion");
    rep.set(key + ".nonlosing_fraction", (wins + ties) / n, "fusion");
    rep.set(key + ".wins", wins, "fusion");
    rep.set(key + ".ties", ties, "fusion");
    rep.set(key + ".losses", losses, "fusion");
  }
  rep.tables["fusion"] = std::move(table);
  rep.set("fusion.tie_tolerance", plan.tie_tolerance, "fusion");
  rep.timings["fusion"] = seconds_since(t0);
  return rep;
}

}  // namespace wrl
