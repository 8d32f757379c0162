#include <gtest/gtest.h>

#include <thread>

#include "cadaug/runner.hpp"
#include "cadaug/step.hpp"
#include "cadaug/topology.hpp"
#include "support/oracles.hpp"

using namespace cadaug::runner;
using cadaug::testing::fixture_path;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cadaug_runner_" + name);
  std::filesystem::remove_all(p);
  return p;
}

SubprocessConfig fake_config(std::size_t pool = 1) {
  SubprocessConfig c;
  c.command = {"python3", std::string(CADAUG_FIXTURE_DIR) + "/tools/fake_runner.py", fixture_path("cube")};
  c.pool_size = pool;
  c.grace_s = 2.0;
  return c;
}

ExecRequest request(std::string program, const std::filesystem::path& workdir, double timeout = 5.0) {
  return {std::move(program), timeout, workdir, true};
}

cadaug::topology::ValidationReport validate_file(const std::filesystem::path& p) {
  return cadaug::topology::validate_structure(cadaug::step::read_step_file(p));
}

}  // namespace

TEST(Wire, RequestFieldNamesAreFixed) {
  const auto j = request_to_json({"print(1)", 2.5, "/tmp/w", true});
  EXPECT_EQ(j.size(), 4u);
  EXPECT_EQ(j.at("program_text"), "print(1)");
  EXPECT_EQ(j.at("timeout_s"), 2.5);
  EXPECT_EQ(j.at("workdir"), "/tmp/w");
  EXPECT_EQ(j.at("want_kernel_check"), true);
  const auto back = request_from_json(j);
  EXPECT_EQ(back.program_text, "print(1)");
  EXPECT_EQ(back.workdir, "/tmp/w");
}

TEST(Wire, ResultRoundTrip) {
  ExecResult r;
  r.status = ExecStatus::Ok;
  r.step_path = "/w/output.step";
  r.kernel_valid = false;
  r.wall_time = 1.5;
  const auto j = result_to_json(r);
  for (const char* key : {"status", "step_path", "stl_path", "stderr_tail", "kernel_valid", "wall_time"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_TRUE(j["stl_path"].is_null());
  const auto back = result_from_json(j);
  EXPECT_EQ(back.status, ExecStatus::Ok);
  EXPECT_EQ(back.step_path, std::filesystem::path("/w/output.step"));
  EXPECT_FALSE(back.stl_path);
  EXPECT_EQ(back.kernel_valid, std::optional<bool>(false));
  EXPECT_DOUBLE_EQ(back.wall_time, 1.5);
}

TEST(Wire, BadResultsAreProtocolErrors) {
  EXPECT_THROW(result_from_json(nlohmann::json::array()), ProtocolError);
  EXPECT_THROW(result_from_json({{"status", "weird"}}), ProtocolError);
  EXPECT_THROW(result_from_json({{"status", "protocol_error"}, {"error", "x"}}), ProtocolError);
  EXPECT_THROW(result_from_json({{"status", "ok"}, {"kernel_valid", "yes"}}), ProtocolError);
}

TEST(Wire, RequestChecks) {
  EXPECT_THROW(check_request({"", 1.0, "/tmp", false}), std::invalid_argument);
  EXPECT_THROW(check_request({"x", 0.0, "/tmp", false}), std::invalid_argument);
}

TEST(Subprocess, OutcomesOverThePipe) {
  SubprocessRunner runner(fake_config());
  const auto dir = scratch("sub");
  const auto ok = runner.execute(request("ok", dir));
  EXPECT_EQ(ok.status, ExecStatus::Ok);
  ASSERT_TRUE(ok.step_path);
  EXPECT_TRUE(std::filesystem::exists(*ok.step_path));
  EXPECT_EQ(ok.kernel_valid, std::optional<bool>(true));
  EXPECT_DOUBLE_EQ(ok.wall_time, 0.25);

  const auto err = runner.execute(request("raise ValueError: no wire", dir));
  EXPECT_EQ(err.status, ExecStatus::ExecError);
  EXPECT_NE(err.stderr_tail.find("ValueError: no wire"), std::string::npos);
  EXPECT_EQ(runner.execute(request("timeout", dir)).status, ExecStatus::Timeout);

  // the request reaches the runner with the fixed field names
  const auto echo = runner.execute(request("echo\nsecond line \"quoted\"", dir, 7.0));
  const auto seen = nlohmann::json::parse(echo.stderr_tail);
  EXPECT_EQ(seen["program_text"], "echo\nsecond line \"quoted\"");
  EXPECT_EQ(seen["timeout_s"], 7.0);
  EXPECT_EQ(seen["workdir"], dir.string());
  EXPECT_EQ(seen["want_kernel_check"], true);
  // one long-lived process served everything
  EXPECT_EQ(runner.spawned(), 1u);
}

TEST(Subprocess, BrokenRunnersAreUnavailable) {
  SubprocessRunner runner(fake_config());
  const auto dir = scratch("broken");
  EXPECT_THROW(runner.execute(request("die", dir)), RunnerUnavailable);
  EXPECT_THROW(runner.execute(request("garbage", dir)), ProtocolError);
  EXPECT_THROW(runner.execute(request("reject", dir)), ProtocolError);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(runner.execute(request("hang", dir, 0.5)), RunnerUnavailable);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
  // a fresh worker replaces the dead ones
  EXPECT_EQ(runner.execute(request("ok", dir)).status, ExecStatus::Ok);
}

TEST(Subprocess, MissingExecutable) {
  SubprocessConfig c;
  c.command = {"/nonexistent/cad-runner"};
  SubprocessRunner runner(c);
  EXPECT_THROW(runner.execute(request("ok", scratch("missing"))), RunnerUnavailable);
}

TEST(Subprocess, PoolServesConcurrentRequests) {
  SubprocessRunner runner(fake_config(3));
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 6; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 5; ++i) {
        const auto r = runner.execute(request("ok", scratch("pool_" + std::to_string(t))));
        ok += r.status == ExecStatus::Ok ? 1 : 0;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 30);
  EXPECT_LE(runner.spawned(), 3u);
}

TEST(CubeText, ValidatesAndMutatesAsIntended) {
  using namespace cadaug::topology;
  const auto parse = [](const std::string& t) { return cadaug::step::parse_step(t); };
  const auto good = validate_structure(parse(cube_step_text()));
  EXPECT_TRUE(good.passed()) << format_report(good);
  const auto missing = validate_structure(parse(cube_step_text(10, CubeDefect::MissingFace)));
  EXPECT_TRUE(missing.failed_check(checks::kEdgeManifold));
  EXPECT_FALSE(missing.failed_check(checks::kOrientationConsistency));
  const auto flipped = validate_structure(parse(cube_step_text(10, CubeDefect::FlippedEdge)));
  EXPECT_EQ(flipped.failures.size(), 1u) << format_report(flipped);
  EXPECT_TRUE(flipped.failed_check(checks::kOrientationConsistency));
}

TEST(Mock, Directives) {
  MockRunner mock;
  const auto dir = scratch("mock");
  const auto ok = mock.execute(request("# mock-runner: ok\nimport cadquery as cq", dir));
  ASSERT_EQ(ok.status, ExecStatus::Ok);
  EXPECT_TRUE(validate_file(*ok.step_path).passed());
  EXPECT_EQ(ok.kernel_valid, std::optional<bool>(true));

  const auto err = mock.execute(request("# mock-runner: exec_error ValueError: bad fillet\n", dir));
  EXPECT_EQ(err.status, ExecStatus::ExecError);
  EXPECT_NE(err.stderr_tail.find("ValueError: bad fillet"), std::string::npos);
  EXPECT_EQ(err.stderr_tail.find(dir.string()), std::string::npos);

  EXPECT_EQ(mock.execute(request("# mock-runner: timeout", dir, 3)).status, ExecStatus::Timeout);
  const auto bad = mock.execute(request("# mock-runner: missing_face", dir));
  EXPECT_TRUE(validate_file(*bad.step_path).failed_check(cadaug::topology::checks::kEdgeManifold));
  EXPECT_EQ(mock.execute(request("# mock-runner: kernel_invalid", dir)).kernel_valid, std::optional<bool>(false));
  EXPECT_THROW(cadaug::step::read_step_file(*mock.execute(request("# mock-runner: garbage_step", dir)).step_path),
               cadaug::step::StepError);
  EXPECT_THROW(mock.execute(request("# mock-runner: unreachable", dir)), RunnerUnavailable);
  EXPECT_EQ(mock.execute(request("# mock-runner: bogus", dir)).status, ExecStatus::ExecError);
  // default applies without a directive
  EXPECT_EQ(MockRunner("timeout").execute(request("import cadquery", dir)).status, ExecStatus::Timeout);
  auto no_check = request("# mock-runner: ok", dir);
  no_check.want_kernel_check = false;
  EXPECT_FALSE(mock.execute(no_check).kernel_valid);
}
