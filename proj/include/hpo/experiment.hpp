#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "hpo/baselines.hpp"
#include "hpo/config_space.hpp"
#include "hpo/evaluation.hpp"
#include "hpo/health_data.hpp"
#include "hpo/nisneak.hpp"
#include "hpo/objectives.hpp"
#include "hpo/stats.hpp"
#include "hpo/sway.hpp"

namespace hpo {

// ---------------------------------------------------------------------------
// Optimizer registry

struct OptimizerContext {
  const ConfigSpace& space;
  const std::vector<Candidate>& pool;
  EvalSession& session;
  std::uint64_t seed;
};

using OptimizerFn = std::function<Candidate(const OptimizerContext&)>;

inline constexpr std::size_t kBaselineBudget = 120;

inline const std::map<std::string, OptimizerFn>& optimizer_registry() {
  static const std::map<std::string, OptimizerFn> registry = [] {
    std::map<std::string, OptimizerFn> r;
    r["rs"] = [](const OptimizerContext& c) {
      return random_search(c.pool, c.session, kBaselineBudget, c.seed);
    };
    r["gs"] = [](const OptimizerContext& c) {
      return grid_search(c.space, c.session, default_gs_strides());
    };
    r["de"] = [](const OptimizerContext& c) {
      return differential_evolution(c.space, c.session, DeParams{}, c.seed).best;
    };
    r["flash"] = [](const OptimizerContext& c) {
      FlashParams p;
      p.budget = kBaselineBudget;
      return flash(c.pool, c.space, c.session, p, c.seed);
    };
    r["sway"] = [](const OptimizerContext& c) {
      return sway_best(c.pool, c.space, c.session, SwayParams{}, c.seed);
    };
    for (auto p : {SelectPolicy::any, SelectPolicy::sany, SelectPolicy::all, SelectPolicy::sall}) {
      r["nisneak+" + std::string(to_string(p))] = [p](const OptimizerContext& c) {
        return nisneak(c.pool, c.space, c.session, p, c.seed).choice;
      };
    }
    r["default"] = [](const OptimizerContext& c) { return default_config(c.space, c.session); };
    return r;
  }();
  return registry;
}

inline std::vector<std::string> optimizer_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : optimizer_registry()) out.push_back(k);
  return out;
}

inline const OptimizerFn& find_optimizer(const std::string& name) {
  const auto& r = optimizer_registry();
  auto it = r.find(name);
  if (it == r.end()) {
    throw std::invalid_argument("unknown optimizer '" + name + "'; valid names: " +
                                boost::algorithm::join(optimizer_names(), ", "));
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Plans and seeds

struct ExperimentPlan {
  std::vector<std::string> datasets;
  std::vector<Target> targets{kAllTargets.begin(), kAllTargets.end()};
  std::vector<std::string> optimizers;
  std::size_t repeats = 20;
  std::size_t pool_size = 10000;
  std::uint64_t global_seed = 1;
  std::size_t jobs = 1;

  void validate() const {
    if (repeats < 1) throw std::invalid_argument("plan: repeats must be >= 1");
    if (optimizers.empty()) throw std::invalid_argument("plan: no optimizers");
    if (datasets.empty()) throw std::invalid_argument("plan: no datasets");
    if (targets.empty()) throw std::invalid_argument("plan: no targets");
    if (pool_size < 1) throw std::invalid_argument("plan: pool must be >= 1");
    for (const auto& o : optimizers) find_optimizer(o);
  }
};

inline std::uint64_t repeat_seed(std::uint64_t global, std::size_t repeat) {
  return mix_seed(global, repeat);
}

inline std::uint64_t pool_seed(std::uint64_t rep_seed) { return mix_seed(rep_seed, 0x706f6f6c); }

inline std::uint64_t optimizer_seed(std::uint64_t rep_seed, const std::string& name) {
  return mix_seed(rep_seed, fnv1a(name));
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts, out;
  boost::algorithm::split(parts, s, boost::algorithm::is_any_of(","));
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

}  // namespace detail

/// Plain key = value plan file. Keys: datasets, targets, optimizers, repeats,
/// pool, seed, jobs. Lists are comma separated; relative dataset paths resolve
/// against the plan's directory.
inline ExperimentPlan parse_plan(std::istream& in, const std::filesystem::path& base = {}) {
  boost::property_tree::ptree tree;
  boost::property_tree::ini_parser::read_ini(in, tree);
  ExperimentPlan plan;
  for (const auto& [key, node] : tree) {
    if (!node.empty()) throw std::invalid_argument("plan: sections are not supported ('" + key + "')");
    const auto value = node.get_value<std::string>();
    if (key == "datasets") {
      plan.datasets.clear();
      for (const auto& p : detail::split_list(value)) {
        std::filesystem::path path(p);
        plan.datasets.push_back(path.is_relative() && !base.empty() ? (base / path).string() : p);
      }
    } else if (key == "targets") {
      plan.targets.clear();
      for (const auto& t : detail::split_list(value)) plan.targets.push_back(parse_target(t));
    } else if (key == "optimizers") {
      plan.optimizers = detail::split_list(value);
    } else if (key == "repeats") {
      plan.repeats = node.get_value<std::size_t>();
    } else if (key == "pool") {
      plan.pool_size = node.get_value<std::size_t>();
    } else if (key == "seed") {
      plan.global_seed = node.get_value<std::uint64_t>();
    } else if (key == "jobs") {
      plan.jobs = node.get_value<std::size_t>();
    } else {
      throw std::invalid_argument("plan: unknown key '" + key + "'");
    }
  }
  return plan;
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open plan " + path.string());
  return parse_plan(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Runs

struct RunRecord {
  std::string optimizer;
  std::string dataset;
  std::string target;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::uint64_t candidate_id = 0;
  std::string config;
  Objectives objectives;
  std::uint64_t e = 0;
  std::uint64_t e_plus = 0;
  std::uint64_t requests = 0;
  double wall_time = 0.0;
};

/// Wall time stays out of the JSON record so reruns compare byte for byte.
inline nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["optimizer"] = r.optimizer;
  j["dataset"] = r.dataset;
  j["target"] = r.target;
  j["repeat"] = r.repeat;
  j["seed"] = r.seed;
  j["ok"] = r.ok;
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["candidate_id"] = r.candidate_id;
  j["config"] = r.config;
  j["mre"] = r.objectives.mre;
  j["pred40"] = r.objectives.pred40;
  j["sa"] = r.objectives.sa;
  j["d2h"] = r.objectives.d2h.value_or(0.0);
  j["e"] = r.e;
  j["e_plus"] = r.e_plus;
  j["requests"] = r.requests;
  return j;
}

inline RunRecord run_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.optimizer = j.at("optimizer").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.target = j.at("target").get<std::string>();
  r.repeat = j.at("repeat").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ok = j.at("ok").get<bool>();
  if (!r.ok) {
    r.error = j.value("error", std::string{});
    return r;
  }
  r.candidate_id = j.at("candidate_id").get<std::uint64_t>();
  r.config = j.at("config").get<std::string>();
  r.objectives.mre = j.at("mre").get<double>();
  r.objectives.pred40 = j.at("pred40").get<double>();
  r.objectives.sa = j.at("sa").get<double>();
  r.objectives.d2h = j.at("d2h").get<double>();
  r.e = j.at("e").get<std::uint64_t>();
  r.e_plus = j.at("e_plus").get<std::uint64_t>();
  r.requests = j.at("requests").get<std::uint64_t>();
  return r;
}

/// Runs one optimizer on one task. The chosen candidate is certified, and its
/// d2h is its rank among everything the run scored.
inline RunRecord run_once(const std::string& optimizer, const ConfigSpace& space,
                          std::shared_ptr<const EvalTask> task, EvalCache* cache,
                          const std::vector<Candidate>& pool, std::size_t repeat,
                          std::uint64_t rep_seed) {
  RunRecord rec;
  rec.optimizer = optimizer;
  rec.dataset = task->dataset_id;
  rec.target = std::string(to_string(task->target));
  rec.repeat = repeat;
  rec.seed = rep_seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto& fn = find_optimizer(optimizer);
    EvalBudget budget;
    EvalSession session(ForestObjective(space, task, cache), budget);
    const auto choice = fn({space, pool, session, optimizer_seed(rep_seed, optimizer)});
    const auto scored = session.certify(std::span<const Candidate>(&choice, 1));
    std::vector<std::pair<Candidate, std::vector<double>>> all;
    for (const auto& [c, o] : session.evaluated()) all.emplace_back(c, o.goals());
    const auto ranked = rank_d2h(all, GoalSpec::search());
    rec.objectives = scored.front().second;
    for (const auto& [c, d] : ranked)
      if (c.id == choice.id) rec.objectives.d2h = d;
    rec.candidate_id = choice.id;
    rec.config = space.describe(choice);
    rec.e = budget.e();
    rec.e_plus = budget.e_plus();
    rec.requests = session.requests();
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Aggregation

inline bool lower_is_better(const std::string& metric) { return metric == "mre" || metric == "d2h"; }

inline const std::vector<std::string>& report_metrics() {
  static const std::vector<std::string> m{"mre", "pred40", "sa", "d2h"};
  return m;
}

struct Aggregate {
  std::vector<RankReport> reports;
  /// (target, dataset, repeat) blocks dropped because some optimizer failed.
  std::vector<std::string> incomplete;
};

/// One ranked table per metric and target. Blocks are (dataset, repeat); the
/// d2h table ranks each block's chosen candidates against one another.
inline Aggregate aggregate(const std::vector<RunRecord>& runs,
                           const std::vector<std::string>& optimizers,
                           const std::vector<std::string>& targets) {
  Aggregate out;
  for (const auto& target : targets) {
    std::map<std::pair<std::string, std::size_t>, std::map<std::string, const RunRecord*>> blocks;
    for (const auto& r : runs)
      if (r.target == target) blocks[{r.dataset, r.repeat}][r.optimizer] = &r;

    std::vector<std::vector<const RunRecord*>> complete;
    for (const auto& [key, cell] : blocks) {
      std::vector<const RunRecord*> row;
      for (const auto& o : optimizers) {
        auto it = cell.find(o);
        if (it == cell.end() || !it->second->ok) break;
        row.push_back(it->second);
      }
      if (row.size() == optimizers.size()) complete.push_back(std::move(row));
      else out.incomplete.push_back(target + "/" + key.first + "/" + std::to_string(key.second));
    }
    if (complete.empty()) continue;

    // Block-level d2h across the optimizers' choices.
    std::vector<std::vector<double>> block_d2h;
    for (const auto& row : complete) {
      std::vector<std::pair<Candidate, std::vector<double>>> pool;
      for (std::size_t j = 0; j < row.size(); ++j) {
        Candidate c;
        c.id = j;
        pool.emplace_back(c, row[j]->objectives.goals());
      }
      std::vector<double> d(row.size());
      for (const auto& [c, v] : rank_d2h(pool, GoalSpec::search())) d[c.id] = v;
      block_d2h.push_back(std::move(d));
    }

    for (const auto& metric : report_metrics()) {
      TreatmentTable t;
      t.treatments = optimizers;
      t.lower_is_better = lower_is_better(metric);
      t.values.assign(optimizers.size(), {});
      for (std::size_t b = 0; b < complete.size(); ++b)
        for (std::size_t j = 0; j < optimizers.size(); ++j) {
          const auto& o = complete[b][j]->objectives;
          const double v = metric == "mre"      ? o.mre
                           : metric == "pred40" ? o.pred40
                           : metric == "sa"     ? o.sa
                                                : block_d2h[b][j];
          t.values[j].push_back(v);
        }
      if (optimizers.size() < 2 || complete.size() < 2) {
        RankReport rep;
        rep.metric = metric;
        rep.target = target;
        for (std::size_t j = 0; j < optimizers.size(); ++j) {
          const auto [med, iqr] = median_iqr(t.values[j]);
          rep.rows.push_back({optimizers[j], med, iqr, 1.0, 1});
        }
        out.reports.push_back(std::move(rep));
      } else {
        out.reports.push_back(rank_treatments(t, metric, target));
      }
    }
  }
  return out;
}

inline void write_reports(const std::filesystem::path& dir, const Aggregate& agg) {
  std::ofstream md(dir / "report.md");
  md << "# Optimizer comparison\n\n"
     << "Cells: median (IQR) tier. Tier 1 is best; tiers come from Friedman + Nemenyi "
        "at alpha = 0.05.\n\n";
  write_markdown(md, agg.reports);
  if (!agg.incomplete.empty()) {
    md << "## incomplete blocks\n\n";
    for (const auto& b : agg.incomplete) md << "- " << b << '\n';
  }
  std::ofstream csv(dir / "report.csv");
  write_csv(csv, agg.reports);
}

// ---------------------------------------------------------------------------
// Bench

struct BenchResult {
  std::vector<RunRecord> runs;
  Aggregate aggregate;
  std::size_t failures = 0;
};

/// Default cache directory: $HPO_CACHE_DIR, else ./.hpo-cache.
inline std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("HPO_CACHE_DIR"); env && *env) return env;
  return ".hpo-cache";
}

inline std::filesystem::path cache_file(const std::filesystem::path& dir) {
  return dir / "evaluations.tsv";
}

/// Full cross product repeats x targets x datasets x optimizers. Records are
/// kept in that order whatever the scheduling.
inline BenchResult bench(const ExperimentPlan& plan, const ConfigSpace& space, EvalCache* cache) {
  plan.validate();
  std::vector<ProjectSeries> series;
  for (const auto& d : plan.datasets) series.push_back(load_series(d));

  std::map<std::pair<std::size_t, Target>, std::shared_ptr<const EvalTask>> tasks;
  for (std::size_t d = 0; d < series.size(); ++d)
    for (auto t : plan.targets)
      tasks[{d, t}] = std::make_shared<const EvalTask>(make_task(series[d], t, plan.global_seed));

  struct Job {
    std::size_t repeat, dataset;
    Target target;
    std::string optimizer;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < plan.repeats; ++r)
    for (auto t : plan.targets)
      for (std::size_t d = 0; d < series.size(); ++d)
        for (const auto& o : plan.optimizers) jobs.push_back({r, d, t, o});

  std::vector<std::vector<Candidate>> pools(plan.repeats);
  for (std::size_t r = 0; r < plan.repeats; ++r)
    pools[r] = sample(space, plan.pool_size, pool_seed(repeat_seed(plan.global_seed, r)));

  BenchResult out;
  out.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      const auto& j = jobs[i];
      out.runs[i] = run_once(j.optimizer, space, tasks.at({j.dataset, j.target}), cache,
                             pools[j.repeat], j.repeat, repeat_seed(plan.global_seed, j.repeat));
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(plan.jobs, jobs.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  for (const auto& r : out.runs) out.failures += !r.ok;
  std::vector<std::string> targets;
  for (auto t : plan.targets) targets.emplace_back(to_string(t));
  out.aggregate = aggregate(out.runs, plan.optimizers, targets);
  return out;
}

/// Writes runs.jsonl, timings.jsonl, report.md, report.csv and summary.json.
inline void write_bench(const std::filesystem::path& dir, const ExperimentPlan& plan,
                        const BenchResult& result) {
  std::filesystem::create_directories(dir);
  std::ofstream runs(dir / "runs.jsonl"), timings(dir / "timings.jsonl");
  for (const auto& r : result.runs) {
    runs << to_json(r).dump() << '\n';
    nlohmann::ordered_json t;
    t["optimizer"] = r.optimizer;
    t["dataset"] = r.dataset;
    t["target"] = r.target;
    t["repeat"] = r.repeat;
    t["wall_time"] = r.wall_time;
    timings << t.dump() << '\n';
  }
  write_reports(dir, result.aggregate);
  nlohmann::ordered_json s;
  s["runs"] = result.runs.size();
  s["failures"] = result.failures;
  s["complete"] = result.failures == 0;
  s["optimizers"] = plan.optimizers;
  std::vector<std::string> targets;
  for (auto t : plan.targets) targets.emplace_back(to_string(t));
  s["targets"] = targets;
  s["repeats"] = plan.repeats;
  s["pool"] = plan.pool_size;
  s["seed"] = plan.global_seed;
  s["incomplete_blocks"] = result.aggregate.incomplete;
  std::ofstream(dir / "summary.json") << s.dump(2) << '\n';
}

/// Re-aggregates an existing runs.jsonl into report files.
inline Aggregate report_from_runs(const std::filesystem::path& dir) {
  std::ifstream in(dir / "runs.jsonl");
  if (!in) throw std::invalid_argument("no runs.jsonl in " + dir.string());
  std::vector<RunRecord> runs;
  std::vector<std::string> optimizers, targets;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto r = run_from_json(nlohmann::json::parse(line));
    if (std::find(optimizers.begin(), optimizers.end(), r.optimizer) == optimizers.end())
      optimizers.push_back(r.optimizer);
    if (std::find(targets.begin(), targets.end(), r.target) == targets.end())
      targets.push_back(r.target);
    runs.push_back(std::move(r));
  }
  auto agg = aggregate(runs, optimizers, targets);
  write_reports(dir, agg);
  return agg;
}

}  // namespace hpo
