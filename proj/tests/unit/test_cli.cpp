#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "pipeline/experiment.hpp"
#include "pipeline/pipeline.hpp"
#include "support/oracles.hpp"

namespace gnice {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code = -1;
  std::string out, err;
};

Outcome run_cli(const fs::path& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd =
      std::string("\"") + GNICE_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = testing::slurp(out);
  o.err = testing::slurp(err);
  return o;
}

json error_record(const std::string& err) {
  const auto at = err.find("gnice-error: ");
  if (at == std::string::npos) return {};
  const auto end = err.find('\n', at);
  return json::parse(err.substr(at + 13, end - at - 13));
}

json smoke_config(const fs::path& out_dir, const std::string& name) {
  return {{"name", name},
          {"scenario", "simple"},
          {"sample_sizes", {100}},
          {"horizon", 10},
          {"seeds", {{"simulation", 1}, {"truth", 2}, {"training", 3}, {"monte_carlo", 4}}},
          {"truth_n", 2000},
          {"methods", {"parametric:lag1", "dl"}},
          {"network",
           {{"covariate", {{"feature_dim", 4}, {"hidden_size", 4}, {"max_epochs", 3}}},
            {"outcome", {{"feature_dim", 4}, {"hidden_size", 4}, {"max_epochs", 3}}}}},
          {"monte_carlo", {{"n_samples", 500}}},
          {"output_dir", out_dir.string()}};
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

TEST(Cli, UnknownMethodIsAConfigError) {
  const auto dir = testing::scratch_dir("cli_bad_method");
  auto cfg = smoke_config(dir, "bad");
  cfg["methods"] = {"parametric:lag1", "forest"};
  const auto o = run_cli(dir, "run -c \"" + write_config(dir, cfg).string() + "\"");
  EXPECT_EQ(o.code, 2) << o.err;
  const auto e = error_record(o.err);
  EXPECT_EQ(e.value("kind", ""), "config");
  EXPECT_EQ(e.value("field", ""), "/methods/1");
  EXPECT_EQ(e.value("code", 0), 2);
}

TEST(Cli, MissingSeedsAreAConfigError) {
  const auto dir = testing::scratch_dir("cli_no_seeds");
  auto cfg = smoke_config(dir, "noseeds");
  cfg.erase("seeds");
  const auto o = run_cli(dir, "simulate -c \"" + write_config(dir, cfg).string() + "\"");
  EXPECT_EQ(o.code, 2) << o.err;
  EXPECT_EQ(error_record(o.err).value("field", ""), "/seeds");
}

TEST(Cli, FlagsAloneCanDescribeARun) {
  const auto dir = testing::scratch_dir("cli_flags_only");
  const auto o = run_cli(dir, "simulate --name f --scenario complex -n 20 -k 5 --sim-seed 1 --truth-seed 2 "
                              "--train-seed 3 --mc-seed 4 -m parametric:lag1 -o \"" + dir.string() + "\"");
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::exists(dir / "f" / "data"));
}

TEST(Cli, MissingCohortIsAMissingInputError) {
  const auto dir = testing::scratch_dir("cli_missing_cohort");
  const auto o = run_cli(dir, "fit-parametric -c \"" + write_config(dir, smoke_config(dir, "empty")).string() + "\"");
  EXPECT_EQ(o.code, 1) << o.err;
  EXPECT_EQ(error_record(o.err).value("kind", ""), "missing_input");
}

TEST(Cli, UnreadableConfigIsAMissingInputError) {
  const auto dir = testing::scratch_dir("cli_missing_config");
  const auto o = run_cli(dir, "run -c \"" + (dir / "nope.json").string() + "\"");
  EXPECT_EQ(o.code, 1) << o.err;
}

std::map<fs::path, fs::file_time_type> artifact_times(const fs::path& root) {
  std::map<fs::path, fs::file_time_type> t;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") t[e.path()] = e.last_write_time();
  return t;
}

TEST(Cli, SmokeRunIsCompleteDeterministicAndResumable) {
  const auto dir = testing::scratch_dir("cli_smoke");
  const auto cfg_path = write_config(dir, smoke_config(dir, "smoke"));
  const auto start = std::chrono::steady_clock::now();
  const auto o = run_cli(dir, "run -c \"" + cfg_path.string() + "\"");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_LT(seconds, 60.0);

  const pipeline::RunPaths paths{dir / "smoke"};
  EXPECT_EQ(o.out, paths.manifest().string() + "\n");
  ASSERT_TRUE(fs::exists(paths.manifest()));
  for (const char* f : {"bias_summary.csv", "evaluation.json", "table_simple_100.csv", "table_simple_100.md",
                        "fig_simple_100_natural_course.csv", "fig_simple_100_rr.csv"})
    EXPECT_TRUE(fs::exists(paths.report() / f)) << f;
  for (const auto s : {Strategy::NaturalCourse, Strategy::AlwaysTreat, Strategy::NeverTreat}) {
    EXPECT_TRUE(fs::exists(paths.truth(s)));
    EXPECT_TRUE(fs::exists(paths.risk(100, pipeline::parse_method("dl"), s)));
    EXPECT_TRUE(fs::exists(paths.risk(100, pipeline::parse_method("parametric:lag1"), s)));
  }
  const auto first = json::parse(testing::slurp(paths.manifest()));
  EXPECT_EQ(first["config_hash"], pipeline::config_hash(pipeline::load_config(cfg_path)));

  // A second run reuses every stage and rewrites nothing but the manifest.
  const auto before = artifact_times(paths.root);
  const auto again = run_cli(dir, "run -c \"" + cfg_path.string() + "\"");
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(artifact_times(paths.root), before);
  const auto second = json::parse(testing::slurp(paths.manifest()));
  EXPECT_EQ(second["config_hash"], first["config_hash"]);
  for (const auto& s : second["stages"]) EXPECT_TRUE(s["reused"].get<bool>()) << s["stage"];

  // A fresh directory reproduces every artifact byte for byte.
  const auto dir2 = testing::scratch_dir("cli_smoke_again");
  const auto cfg2 = write_config(dir2, smoke_config(dir2, "smoke"));
  ASSERT_EQ(run_cli(dir2, "run -c \"" + cfg2.string() + "\"").code, 0);
  for (const auto& [path, time] : before) {
    if (path.parent_path().filename() == ".stamps") continue;
    const auto twin = dir2 / "smoke" / fs::relative(path, paths.root);
    EXPECT_EQ(testing::slurp(path), testing::slurp(twin)) << path;
  }
}

}  // namespace
}  // namespace gnice
