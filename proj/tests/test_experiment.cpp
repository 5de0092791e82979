#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hpo/commands.hpp"

using namespace hpo;
namespace fs = std::filesystem;

namespace {

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("hpo_exp_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path fixture(const std::string& name, std::size_t months, std::uint64_t seed) {
    const auto p = dir_ / (name + ".csv");
    std::ostringstream err;
    EXPECT_EQ(cmd_fixture(months, seed, p, err), 0) << err.str();
    return p;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

struct Proc {
  int status;
  std::string out;
};

Proc run_cli(const std::string& args) {
  const std::string cmd = std::string(HPO_CLI_PATH) + " " + args + " 2>&1";
  Proc p{0, {}};
  FILE* f = popen(cmd.c_str(), "r");
  if (!f) return {-1, {}};
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), f)) > 0) p.out.append(buf.data(), n);
  const int st = pclose(f);
  p.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return p;
}

RunRecord fake_run(std::string opt, std::string dataset, std::size_t repeat, double mre) {
  RunRecord r;
  r.optimizer = std::move(opt);
  r.dataset = std::move(dataset);
  r.target = "commits";
  r.repeat = repeat;
  r.ok = true;
  r.objectives = {mre, 1.0 - mre, 100.0 * (1.0 - mre)};
  return r;
}

}  // namespace

TEST(Registry, NamesAndLookup) {
  const std::vector<std::string> want{"de",           "default",      "flash",        "gs",
                                      "nisneak+all",  "nisneak+any",  "nisneak+sall", "nisneak+sany",
                                      "rs",           "sway"};
  EXPECT_EQ(optimizer_names(), want);
  try {
    find_optimizer("foo");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("nisneak+sall"), std::string::npos);
  }
}

TEST(Seeds, IndependentStreams) {
  EXPECT_NE(repeat_seed(1, 0), repeat_seed(1, 1));
  EXPECT_NE(pool_seed(repeat_seed(1, 0)), repeat_seed(1, 0));
  EXPECT_NE(optimizer_seed(5, "rs"), optimizer_seed(5, "de"));
  EXPECT_EQ(optimizer_seed(5, "rs"), optimizer_seed(5, "rs"));
}

TEST(Plan, ParsesKeysAndResolvesPaths) {
  std::istringstream in(
      "datasets = a.csv, /abs/b.csv\ntargets = commits, closed_issues\n"
      "optimizers = rs,sway\nrepeats = 3\npool = 500\nseed = 9\njobs = 2\n");
  const auto p = parse_plan(in, "/base");
  EXPECT_EQ(p.datasets, (std::vector<std::string>{"/base/a.csv", "/abs/b.csv"}));
  EXPECT_EQ(p.targets, (std::vector<Target>{Target::commits, Target::closed_issues}));
  EXPECT_EQ(p.optimizers, (std::vector<std::string>{"rs", "sway"}));
  EXPECT_EQ(p.repeats, 3u);
  EXPECT_EQ(p.pool_size, 500u);
  EXPECT_EQ(p.global_seed, 9u);
  EXPECT_EQ(p.jobs, 2u);
  p.validate();
}

TEST(Plan, RejectsUnknownKeysAndOptimizers) {
  std::istringstream bad_key("colour = red\n");
  EXPECT_THROW(parse_plan(bad_key), std::invalid_argument);
  std::istringstream bad_opt("datasets = a.csv\noptimizers = foo\n");
  EXPECT_THROW(parse_plan(bad_opt).validate(), std::invalid_argument);
  ExperimentPlan empty;
  EXPECT_THROW(empty.validate(), std::invalid_argument);
}

TEST(RunRecordJson, RoundTrip) {
  auto r = fake_run("rs", "d", 2, 0.25);
  r.candidate_id = 77;
  r.config = "x=1";
  r.objectives.d2h = 0.5;
  r.e = 120;
  r.requests = 121;
  const auto back = run_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.objectives, r.objectives);
  EXPECT_EQ(back.e, 120u);
  EXPECT_EQ(back.candidate_id, 77u);
  EXPECT_EQ(to_json(r).dump().find("wall_time"), std::string::npos);
}

TEST(Aggregate, RanksAndDropsIncompleteBlocks) {
  std::vector<RunRecord> runs;
  for (std::size_t rep = 0; rep < 10; ++rep) {
    runs.push_back(fake_run("good", "d", rep, 0.1 + rep * 0.001));
    runs.push_back(fake_run("bad", "d", rep, 0.8));
  }
  runs.push_back(fake_run("good", "d", 99, 0.1));
  auto failed = fake_run("bad", "d", 99, 0.0);
  failed.ok = false;
  runs.push_back(failed);
  const auto agg = aggregate(runs, {"good", "bad"}, {"commits"});
  ASSERT_EQ(agg.reports.size(), 4u);
  ASSERT_EQ(agg.incomplete.size(), 1u);
  const auto& mre = agg.reports[0];
  EXPECT_EQ(mre.metric, "mre");
  EXPECT_LT(mre.p_value, 0.05);
  EXPECT_EQ(mre.rows[0].tier, 1);
  EXPECT_EQ(mre.rows[1].tier, 2);
  const auto& d2h = agg.reports[3];
  EXPECT_EQ(d2h.metric, "d2h");
  EXPECT_DOUBLE_EQ(d2h.rows[0].median, 0.0);
  EXPECT_DOUBLE_EQ(d2h.rows[1].median, 0.5);
}

TEST_F(Workdir, FixtureIsDeterministicAndValidated) {
  const auto a = fixture("a", 30, 5);
  const auto b = dir_ / "b.csv";
  std::ostringstream err;
  ASSERT_EQ(cmd_fixture(30, 5, b, err, "a"), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(cmd_fixture(23, 5, dir_ / "c.csv", err), 2);
  EXPECT_NE(err.str().find("24"), std::string::npos);
  EXPECT_EQ(load_series(a).length(), 30u);
}

TEST_F(Workdir, BenchWritesRecordsAndTables) {
  const auto d1 = fixture("p1", 26, 1), d2 = fixture("p2", 26, 2);
  BenchArgs args;
  args.overrides.datasets = {d1.string(), d2.string()};
  args.overrides.optimizers = {"rs", "sway", "nisneak+sall"};
  args.overrides.targets = {Target::commits};
  args.overrides.repeats = 2;
  args.overrides.pool_size = 300;
  args.has_datasets = args.has_optimizers = args.has_targets = args.has_repeats = args.has_pool = true;
  args.out_dir = dir_ / "out";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_bench(args, out, err), 0) << err.str();

  std::ifstream runs(args.out_dir / "runs.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(runs, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.at("ok").get<bool>());
    if (j.at("optimizer") == "rs") EXPECT_EQ(j.at("e").get<int>(), 120);
    ++n;
  }
  EXPECT_EQ(n, 12u);
  const auto summary = nlohmann::json::parse(slurp(args.out_dir / "summary.json"));
  EXPECT_EQ(summary.at("runs").get<int>(), 12);
  EXPECT_TRUE(summary.at("complete").get<bool>());
  const auto md = slurp(args.out_dir / "report.md");
  for (const char* m : {"## mre", "## pred40", "## sa", "## d2h"})
    EXPECT_NE(md.find(m), std::string::npos) << m;

  const auto before = slurp(args.out_dir / "report.csv");
  std::ostringstream rout;
  EXPECT_EQ(cmd_report(args.out_dir, rout, err), 0);
  EXPECT_EQ(slurp(args.out_dir / "report.csv"), before);
}

TEST_F(Workdir, BenchFailureStillWritesSummary) {
  BenchArgs args;
  args.overrides.datasets = {(dir_ / "missing.csv").string()};
  args.overrides.optimizers = {"rs"};
  args.has_datasets = args.has_optimizers = true;
  args.out_dir = dir_ / "out";
  std::ostringstream out, err;
  EXPECT_NE(cmd_bench(args, out, err), 0);
  const auto summary = nlohmann::json::parse(slurp(args.out_dir / "summary.json"));
  EXPECT_FALSE(summary.at("complete").get<bool>());
}

TEST_F(Workdir, CacheInspectAndClear) {
  const auto d = fixture("p", 26, 3);
  TuneArgs t;
  t.optimizer = "default";
  t.dataset = d.string();
  t.cache_dir = dir_ / "cache";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_tune(t, out, err), 0) << err.str();
  std::ostringstream ins;
  EXPECT_EQ(cmd_cache("inspect", dir_ / "cache", ins, err), 0);
  EXPECT_NE(ins.str().find("1 records"), std::string::npos) << ins.str();
  std::ostringstream cl;
  EXPECT_EQ(cmd_cache("clear", dir_ / "cache", cl, err), 0);
  EvalCache reopened(cache_file(dir_ / "cache"));
  EXPECT_EQ(reopened.size(), 0u);
  EXPECT_EQ(cmd_cache("shred", dir_ / "cache", cl, err), 2);
}

TEST_F(Workdir, CliTuneDefaultCostsNoInference) {
  const auto d = fixture("p", 26, 4);
  const auto p = run_cli("tune -o default -d " + d.string() + " --no-cache");
  ASSERT_EQ(p.status, 0) << p.out;
  const auto j = nlohmann::json::parse(p.out);
  EXPECT_EQ(j.at("e").get<int>(), 0);
  EXPECT_EQ(j.at("e_plus").get<int>(), 1);
}

TEST_F(Workdir, CliUnknownOptimizerListsRegistry) {
  const auto d = fixture("p", 26, 4);
  const auto p = run_cli("tune -o foo -d " + d.string() + " --no-cache");
  EXPECT_NE(p.status, 0);
  for (const auto& name : optimizer_names()) EXPECT_NE(p.out.find(name), std::string::npos) << name;
}

TEST_F(Workdir, CliFixtureTwiceIsByteIdentical) {
  const auto a = dir_ / "x" / "f.csv", b = dir_ / "y" / "f.csv";
  ASSERT_EQ(run_cli("fixture --months 40 --seed 3 --out " + a.string()).status, 0);
  ASSERT_EQ(run_cli("fixture --months 40 --seed 3 --out " + b.string()).status, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(run_cli("fixture --months 23 --seed 3 --out " + (dir_ / "z.csv").string()).status, 0);
}
