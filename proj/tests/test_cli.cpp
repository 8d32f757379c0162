#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "support/oracles.hpp"
#include "support/scenario.hpp"

namespace cli = cadaug::cli;
namespace surfaces = cadaug::surfaces;
using cadaug::testing::fixture_path;
using cadaug::testing::read_text;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "cadaug");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cadaug_cli_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::vector<std::string> scenario_args(const std::filesystem::path& out, const std::string& run_id) {
  return {"augment",    "--descriptions", cadaug::testing::scenario_descriptions().string(),
          "--mode",     "full",           "--family",
          "gaussian",   "--seed",         "7",
          "--backend",  "replay",         "--cassette",
          cadaug::testing::scenario_cassette().string(), "--runner", "mock",
          "--out",      out.string(),     "--run-id",
          run_id};
}

std::vector<nlohmann::json> manifest(const std::filesystem::path& run_dir) {
  std::vector<nlohmann::json> rows;
  std::istringstream in(read_text(run_dir / "manifest.jsonl"));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  }
  return rows;
}

}  // namespace

TEST(CliUsage, HelpExitsZero) {
  auto r = invoke({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("augment"), std::string::npos);
}

TEST(CliUsage, MissingSubcommandIsUsageError) { EXPECT_EQ(invoke({}).code, 2); }

TEST(CliUsage, UnknownOptionIsUsageError) {
  auto r = invoke({"analyze", "x", "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(CliConfig, OverrideParsesJsonThenFallsBackToString) {
  auto c = cli::default_config();
  cli::apply_override(c, "generation_orchestrator.max_iterations=3");
  cli::apply_override(c, "llm_gateway.model_id=gpt-x");
  cli::apply_override(c, "cad_runner.command=[\"a\",\"b\"]");
  cli::apply_override(c, "llm_gateway.http.read_timeout_s=5");
  EXPECT_EQ(c["generation_orchestrator"]["max_iterations"], 3);
  EXPECT_EQ(c["llm_gateway"]["model_id"], "gpt-x");
  EXPECT_EQ(c["cad_runner"]["command"], nlohmann::json::array({"a", "b"}));
  EXPECT_EQ(c["llm_gateway"]["http"]["read_timeout_s"], 5);
}

TEST(CliConfig, UnknownKeysAreRejected) {
  auto c = cli::default_config();
  EXPECT_THROW(cli::apply_override(c, "llm_gateway.modle_id=x"), cli::ConfigError);
  EXPECT_THROW(cli::apply_override(c, "nosection.key=1"), cli::ConfigError);
  EXPECT_THROW(cli::apply_override(c, "no_equals_sign"), cli::ConfigError);
  EXPECT_THROW(cli::merge_config(c, {{"dataset_reporter", {{"binz", 3}}}}), cli::ConfigError);
}

TEST(CliSurfaces, WritesDeterministicProgramsWithSidecars) {
  auto a = scratch("surf_a");
  auto b = scratch("surf_b");
  for (const auto& dir : {a, b}) {
    auto r = invoke({"surfaces", "--family", "ripple", "--count", "3", "--seed", "11", "--out-dir", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (int i = 0; i < 3; ++i) {
    const std::string stem = surfaces::spec_file_stem(surfaces::Family::Ripple, 11, i);
    EXPECT_EQ(read_text(a / (stem + ".py")), read_text(b / (stem + ".py")));
    auto meta = nlohmann::json::parse(read_text(a / (stem + ".json")));
    EXPECT_EQ(meta["family"], "ripple");
    EXPECT_EQ(meta["index"], i);
    const auto specs = surfaces::sample_specs(surfaces::Family::Ripple, 3, 11);
    EXPECT_EQ(read_text(a / (stem + ".py")), specs[i].script_text);
  }
}

TEST(CliSurfaces, UnknownFamilyNamesTheValidOnes) {
  auto r = invoke({"surfaces", "--family", "torus", "--out-dir", scratch("surf_bad").string()});
  EXPECT_EQ(r.code, 2);
  for (const char* f : {"gaussian", "saddle", "wave", "ripple"}) EXPECT_NE(r.err.find(f), std::string::npos) << f;
}

TEST(CliAugment, ScenarioReplayReproducesStatsAndStdout) {
  auto out = scratch("aug");
  auto r1 = invoke(scenario_args(out, "r1"));
  auto r2 = invoke(scenario_args(out, "r2"));
  ASSERT_EQ(r1.code, 0) << r1.err;
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_NE(r1.out.find("exceeded_5: 20.0%"), std::string::npos) << r1.out;
  EXPECT_NE(r1.out.find("accepted: 9 (90.0%)"), std::string::npos) << r1.out;
  EXPECT_NE(r1.out.find("gateway_calls: 33"), std::string::npos) << r1.out;
  EXPECT_EQ(r1.out, r2.out);

  const auto rows = manifest(out / "r1");
  ASSERT_EQ(rows.size(), 10u);
  for (const auto& row : rows) {
    EXPECT_EQ(row["mode"], "full");
    EXPECT_EQ(row["family"], "gaussian");
    if (row["status"] == "Accepted") {
      EXPECT_TRUE(std::filesystem::exists(out / "r1" / row["step_path"].get<std::string>()));
    }
  }
  EXPECT_TRUE(std::filesystem::exists(out / "r1" / "manifest.csv"));
  auto config = nlohmann::json::parse(read_text(out / "r1" / "config.json"));
  EXPECT_EQ(config["llm_gateway"]["backend"], "replay");
  EXPECT_EQ(config["cad_runner"]["kind"], "mock");
}

TEST(CliAugment, ReusedRunIdRejectsDuplicateSamples) {
  auto out = scratch("aug_dup");
  ASSERT_EQ(invoke(scenario_args(out, "same")).code, 0);
  auto again = invoke(scenario_args(out, "same"));
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.err.find("b01"), std::string::npos) << again.err;
  EXPECT_EQ(manifest(out / "same").size(), 10u);
}

TEST(CliAugment, SetOverridesTheIterationCap) {
  auto out = scratch("aug_cap");
  auto args = scenario_args(out, "r");
  args.insert(args.end(), {"--set", "generation_orchestrator.max_iterations=1"});
  auto r = invoke(args);
  ASSERT_EQ(r.code, 0) << r.err;
  // Samples that pass on the first attempt: three in the scenario.
  EXPECT_NE(r.out.find("accepted: 3 (30.0%)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("exceeded_5: 0.0%"), std::string::npos) << r.out;
}

TEST(CliAugment, AblationModeIsRecordedInTheManifest) {
  auto out = scratch("aug_rt");
  auto args = scenario_args(out, "rt");
  args[4] = "minus-rt";
  auto r = invoke(args);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& row : manifest(out / "rt")) {
    EXPECT_EQ(row["mode"], "minus-rt");
    EXPECT_EQ(row["params"], nlohmann::json::object());
  }
}

TEST(CliAugment, ConfigFileFeedsTheRun) {
  auto out = scratch("aug_cfg");
  auto cfg_path = out / "cfg.json";
  std::ofstream(cfg_path) << R"({"generation_orchestrator": {"max_iterations": 2}})";
  auto args = scenario_args(out, "c");
  args.insert(args.end(), {"--config", cfg_path.string()});
  auto r = invoke(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accepted: 5 (50.0%)"), std::string::npos) << r.out;

  std::ofstream(cfg_path) << R"({"generation_orchestrator": {"max_iteration": 2}})";
  auto bad = invoke(args);
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("max_iteration"), std::string::npos);
}

TEST(CliAugment, MissingInputsAreUsageErrors) {
  auto out = scratch("aug_missing");
  auto args = scenario_args(out, "m");
  args[2] = (out / "nope.csv").string();
  EXPECT_EQ(invoke(args).code, 2);

  args = scenario_args(out, "m2");
  args[12] = (out / "nope.jsonl").string();
  EXPECT_EQ(invoke(args).code, 2);

  args = scenario_args(out, "m3");
  args[4] = "half";
  EXPECT_EQ(invoke(args).code, 2);
}

TEST(CliAugment, MissingCredentialIsEnvironmentError) {
  auto out = scratch("aug_key");
  ::unsetenv("CADAUG_TEST_UNSET_KEY");
  auto args = scenario_args(out, "k");
  args[10] = "live";
  args.insert(args.end(), {"--set", "llm_gateway.http.api_key_env=CADAUG_TEST_UNSET_KEY"});
  auto r = invoke(args);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("CADAUG_TEST_UNSET_KEY"), std::string::npos) << r.err;
}

TEST(CliAugment, UnreachableRunnerIsEnvironmentError) {
  auto out = scratch("aug_runner");
  auto args = scenario_args(out, "u");
  args[14] = "subprocess";
  args.insert(args.end(), {"--set", "cad_runner.command=[\"/nonexistent/cad-runner\"]"});
  auto r = invoke(args);
  EXPECT_EQ(r.code, 3) << r.out << r.err;
}

TEST(CliAugment, NothingAcceptedIsDomainFailure) {
  auto out = scratch("aug_none");
  auto csv = out / "d.csv";
  std::ofstream(csv) << "sample_id,description\nz1,\"A bracket. plan: ok\"\n";
  auto args = scenario_args(out, "n");
  args[2] = csv.string();
  // z1 is on neither the digest nor the tag index of the cassette.
  auto r = invoke(args);
  EXPECT_EQ(r.code, 1) << r.err;
  EXPECT_NE(r.out.find("hard_failures: 1"), std::string::npos) << r.out;
}

TEST(CliAnalyze, ReportsOnTheFixtureCorpus) {
  auto out = scratch("ana");
  auto r = invoke({"analyze", std::string(CADAUG_FIXTURE_DIR) + "/step", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, read_text(out / "report.txt"));
  EXPECT_TRUE(std::filesystem::exists(out / "report.csv"));
  EXPECT_TRUE(std::filesystem::exists(out / "hist.csv"));
  EXPECT_EQ(r.out.rfind("n", 0), 0u);
}

TEST(CliAnalyze, EmptyOrMissingDirectoryIsUsageError) {
  auto empty = scratch("ana_empty");
  EXPECT_EQ(invoke({"analyze", empty.string(), "--out", (empty / "o").string()}).code, 2);
  EXPECT_EQ(invoke({"analyze", (empty / "missing").string(), "--out", (empty / "o").string()}).code, 2);
}

TEST(CliValidate, ExitCodesFollowTheVerdict) {
  auto ok = invoke({"validate", fixture_path("cube")});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_EQ(invoke({"validate", fixture_path("cube"), "--kernel-valid", "false"}).code, 1);

  auto dir = scratch("val");
  std::ofstream(dir / "bad.step") << "not a step file";
  auto bad = invoke({"validate", (dir / "bad.step").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_FALSE(bad.out.empty());
  EXPECT_EQ(invoke({"validate", (dir / "missing.step").string()}).code, 2);
}
