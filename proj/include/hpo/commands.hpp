#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpo/experiment.hpp"

namespace hpo {

struct TuneArgs {
  std::string optimizer;
  std::string dataset;
  std::string target = "commits";
  std::uint64_t seed = 1;
  std::size_t repeat = 0;
  std::size_t pool = 10000;
  std::optional<std::filesystem::path> cache_dir;  // none = in-memory
  std::optional<std::filesystem::path> space_file;
};

namespace detail {

inline ConfigSpace space_from(const std::optional<std::filesystem::path>& file) {
  return file ? load_space(*file) : default_space();
}

inline std::unique_ptr<EvalCache> open_cache(const std::optional<std::filesystem::path>& dir) {
  if (!dir) return std::make_unique<EvalCache>();
  return std::make_unique<EvalCache>(cache_file(*dir));
}

}  // namespace detail

/// One optimizer, dataset, target and repeat. Prints the run record as JSON.
inline int cmd_tune(const TuneArgs& a, std::ostream& out, std::ostream& err) {
  try {
    find_optimizer(a.optimizer);
    const auto space = detail::space_from(a.space_file);
    const auto series = load_series(a.dataset);
    auto task = std::make_shared<const EvalTask>(make_task(series, parse_target(a.target), a.seed));
    auto cache = detail::open_cache(a.cache_dir);
    const auto rep = repeat_seed(a.seed, a.repeat);
    const auto pool = sample(space, a.pool, pool_seed(rep));
    const auto rec = run_once(a.optimizer, space, task, cache.get(), pool, a.repeat, rep);
    out << to_json(rec).dump(2) << '\n';
    if (!rec.ok) {
      err << "tune failed: " << rec.error << '\n';
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

struct BenchArgs {
  std::optional<std::filesystem::path> plan_file;
  ExperimentPlan overrides;
  bool has_optimizers = false, has_targets = false, has_repeats = false, has_seed = false,
       has_pool = false, has_jobs = false, has_datasets = false;
  std::filesystem::path out_dir = "bench-out";
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> space_file;
};

inline ExperimentPlan resolve_plan(const BenchArgs& a) {
  ExperimentPlan plan = a.plan_file ? load_plan(*a.plan_file) : ExperimentPlan{};
  const auto& o = a.overrides;
  if (a.has_datasets) plan.datasets = o.datasets;
  if (a.has_optimizers) plan.optimizers = o.optimizers;
  if (a.has_targets) plan.targets = o.targets;
  if (a.has_repeats) plan.repeats = o.repeats;
  if (a.has_seed) plan.global_seed = o.global_seed;
  if (a.has_pool) plan.pool_size = o.pool_size;
  if (a.has_jobs) plan.jobs = o.jobs;
  return plan;
}

/// Exit 0 iff every run completed. summary.json is written either way.
inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentPlan plan;
  BenchResult result;
  try {
    plan = resolve_plan(a);
    const auto space = detail::space_from(a.space_file);
    auto cache = detail::open_cache(a.cache_dir);
    result = bench(plan, space, cache.get());
    write_bench(a.out_dir, plan, result);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    std::filesystem::create_directories(a.out_dir);
    nlohmann::ordered_json s;
    s["runs"] = 0;
    s["failures"] = 0;
    s["complete"] = false;
    s["error"] = e.what();
    std::ofstream(a.out_dir / "summary.json") << s.dump(2) << '\n';
    return 2;
  }
  out << result.runs.size() << " runs, " << result.failures << " failed; reports in "
      << a.out_dir.string() << '\n';
  for (const auto& r : result.runs)
    if (!r.ok)
      err << "failed: " << r.optimizer << ' ' << r.dataset << ' ' << r.target << " repeat "
          << r.repeat << ": " << r.error << '\n';
  return result.failures == 0 ? 0 : 1;
}

inline int cmd_fixture(std::size_t months, std::uint64_t seed, const std::filesystem::path& path,
                       std::ostream& err, std::string id = {}) {
  try {
    if (id.empty()) id = path.stem().string();
    const auto s = synthetic_series(months, seed, id);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    write_series(f, s);
    if (!f) throw std::runtime_error("write failed for " + path.string());
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

inline int cmd_report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
  try {
    const auto agg = report_from_runs(dir);
    out << agg.reports.size() << " tables written to " << dir.string() << '\n';
    return agg.incomplete.empty() ? 0 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

inline int cmd_cache(const std::string& action, const std::filesystem::path& dir,
                     std::ostream& out, std::ostream& err) {
  try {
    EvalCache cache(cache_file(dir));
    if (action == "inspect") {
      std::map<std::pair<std::string, std::string>, std::size_t> counts;
      for (const auto& r : cache.records()) ++counts[{r.dataset_id, r.target}];
      out << cache_file(dir).string() << ": " << cache.size() << " records";
      if (cache.truncated_lines()) out << " (" << cache.truncated_lines() << " corrupt lines dropped)";
      out << '\n';
      for (const auto& [k, n] : counts) out << "  " << k.first << ' ' << k.second << ' ' << n << '\n';
      return 0;
    }
    if (action == "clear") {
      cache.clear();
      out << "cleared " << cache_file(dir).string() << '\n';
      return 0;
    }
    err << "unknown cache action '" << action << "' (inspect, clear)\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace hpo
