#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hpo/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hyperparameter optimizers for project-health forecasting"};
  app.require_subcommand(1);

  std::optional<std::string> cache_opt;
  bool no_cache = false;
  std::optional<std::string> space_opt;
  auto cache_dir = [&]() -> std::optional<std::filesystem::path> {
    if (no_cache) return std::nullopt;
    return cache_opt ? std::filesystem::path(*cache_opt) : hpo::default_cache_dir();
  };
  auto space_file = [&]() -> std::optional<std::filesystem::path> {
    if (space_opt) return std::filesystem::path(*space_opt);
    return std::nullopt;
  };

  // tune
  hpo::TuneArgs tune;
  auto* t = app.add_subcommand("tune", "run one optimizer on one dataset and target");
  t->add_option("--optimizer,-o", tune.optimizer, "registry name")->required();
  t->add_option("--dataset,-d", tune.dataset, "project-health CSV")->required();
  t->add_option("--target,-t", tune.target, "commits, closed_prs or closed_issues");
  t->add_option("--seed,-s", tune.seed, "global seed");
  t->add_option("--repeat", tune.repeat, "repeat index");
  t->add_option("--pool", tune.pool, "candidate pool size");
  t->add_option("--cache", cache_opt, "cache directory (default $HPO_CACHE_DIR or .hpo-cache)");
  t->add_flag("--no-cache", no_cache, "keep evaluations in memory only");
  t->add_option("--space", space_opt, "parameter space file");

  // bench
  hpo::BenchArgs bench;
  std::optional<std::string> plan_opt;
  std::vector<std::string> b_datasets, b_optimizers, b_targets;
  std::optional<std::size_t> b_repeats, b_pool, b_jobs;
  std::optional<std::uint64_t> b_seed;
  std::string b_out = "bench-out";
  auto* b = app.add_subcommand("bench", "run the full comparison and write ranked reports");
  b->add_option("--plan,-p", plan_opt, "key = value plan file");
  b->add_option("--dataset,-d", b_datasets, "dataset CSVs")->delimiter(',');
  b->add_option("--optimizer,-o", b_optimizers, "registry names")->delimiter(',');
  b->add_option("--target,-t", b_targets, "targets")->delimiter(',');
  b->add_option("--repeats,-r", b_repeats, "repeats");
  b->add_option("--seed,-s", b_seed, "global seed");
  b->add_option("--pool", b_pool, "candidate pool size");
  b->add_option("--jobs,-j", b_jobs, "worker threads");
  b->add_option("--out", b_out, "output directory");
  b->add_option("--cache", cache_opt, "cache directory (default $HPO_CACHE_DIR or .hpo-cache)");
  b->add_flag("--no-cache", no_cache, "keep evaluations in memory only");
  b->add_option("--space", space_opt, "parameter space file");

  // fixture
  std::size_t f_months = 40;
  std::uint64_t f_seed = 1;
  std::string f_out, f_id;
  auto* f = app.add_subcommand("fixture", "write a synthetic project-health CSV");
  f->add_option("--months,-m", f_months, "series length (>= 24)");
  f->add_option("--seed,-s", f_seed, "generator seed");
  f->add_option("--out", f_out, "output CSV path")->required();
  f->add_option("--id", f_id, "project id (default: file stem)");

  // report
  std::string r_dir = "bench-out";
  auto* r = app.add_subcommand("report", "re-aggregate runs.jsonl into report tables");
  r->add_option("--out", r_dir, "bench output directory");

  // cache
  std::string c_action;
  auto* c = app.add_subcommand("cache", "inspect or clear the evaluation cache");
  c->add_option("action", c_action, "inspect or clear")->required();
  c->add_option("--cache", cache_opt, "cache directory (default $HPO_CACHE_DIR or .hpo-cache)");

  CLI11_PARSE(app, argc, argv);

  if (*t) {
    tune.cache_dir = cache_dir();
    tune.space_file = space_file();
    return hpo::cmd_tune(tune, std::cout, std::cerr);
  }
  if (*b) {
    try {
      if (plan_opt) bench.plan_file = *plan_opt;
      auto& o = bench.overrides;
      if ((bench.has_datasets = !b_datasets.empty())) o.datasets = b_datasets;
      if ((bench.has_optimizers = !b_optimizers.empty())) o.optimizers = b_optimizers;
      if ((bench.has_targets = !b_targets.empty())) {
        o.targets.clear();
        for (const auto& s : b_targets) o.targets.push_back(hpo::parse_target(s));
      }
      if ((bench.has_repeats = b_repeats.has_value())) o.repeats = *b_repeats;
      if ((bench.has_pool = b_pool.has_value())) o.pool_size = *b_pool;
      if ((bench.has_jobs = b_jobs.has_value())) o.jobs = *b_jobs;
      if ((bench.has_seed = b_seed.has_value())) o.global_seed = *b_seed;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
    bench.out_dir = b_out;
    bench.cache_dir = cache_dir();
    bench.space_file = space_file();
    return hpo::cmd_bench(bench, std::cout, std::cerr);
  }
  if (*f) return hpo::cmd_fixture(f_months, f_seed, f_out, std::cerr, f_id);
  if (*r) return hpo::cmd_report(r_dir, std::cout, std::cerr);
  if (*c) {
    const auto dir = cache_opt ? std::filesystem::path(*cache_opt) : hpo::default_cache_dir();
    return hpo::cmd_cache(c_action, dir, std::cout, std::cerr);
  }
  return 0;
}
