// Client side of the CAD runner: request/result types, the line-delimited
// JSON wire format, a pool of runner subprocesses and an offline mock.

#pragma once

#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace cadaug::runner {

struct ExecRequest {
  std::string program_text;
  double timeout_s = 120.0;
  std::filesystem::path workdir;
  bool want_kernel_check = true;
};

enum class ExecStatus { Ok, ExecError, Timeout };

std::string_view status_name(ExecStatus s);

struct ExecResult {
  ExecStatus status = ExecStatus::ExecError;
  std::optional<std::filesystem::path> step_path;
  std::optional<std::filesystem::path> stl_path;
  std::string stderr_tail;
  std::optional<bool> kernel_valid;
  double wall_time = 0.0;
};

// The runner process is missing, died, or broke the protocol. Distinct from
// a program failing inside a healthy runner.
class RunnerUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ProtocolError : public RunnerUnavailable {
 public:
  using RunnerUnavailable::RunnerUnavailable;
};

// Throws std::invalid_argument on empty program_text or timeout_s <= 0.
void check_request(const ExecRequest& request);

nlohmann::json request_to_json(const ExecRequest& request);
ExecRequest request_from_json(const nlohmann::json& j);
nlohmann::json result_to_json(const ExecResult& result);
// Throws ProtocolError on `protocol_error` results and malformed objects.
ExecResult result_from_json(const nlohmann::json& j);

class CadRunner {
 public:
  virtual ~CadRunner() = default;
  // Safe to call from many threads.
  virtual ExecResult execute(const ExecRequest& request) = 0;
};

struct SubprocessConfig {
  // argv of the serve loop, e.g. {"python3", "-m", "cad_runner", "serve"}
  std::vector<std::string> command;
  std::size_t pool_size = 1;
  // Extra wait on top of timeout_s before the runner itself is declared hung.
  double grace_s = 30.0;
};

// Up to pool_size long-lived runner processes, one in-flight request each.
// A worker that dies, hangs or answers garbage is killed and replaced on the
// next request.
class SubprocessRunner : public CadRunner {
 public:
  explicit SubprocessRunner(SubprocessConfig config);
  ~SubprocessRunner() override;
  SubprocessRunner(const SubprocessRunner&) = delete;
  SubprocessRunner& operator=(const SubprocessRunner&) = delete;

  ExecResult execute(const ExecRequest& request) override;

  std::size_t spawned() const;

 private:
  struct Worker;
  std::unique_ptr<Worker> acquire();
  void release(std::unique_ptr<Worker> worker);
  std::unique_ptr<Worker> spawn();

  SubprocessConfig config_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<Worker>> idle_;
  std::size_t live_ = 0;
  std::size_t spawned_ = 0;
};

enum class CubeDefect { None, MissingFace, FlippedEdge };

// Closed axis-aligned cube as a STEP file; defects break watertightness or
// orientation on purpose.
std::string cube_step_text(double size = 10.0, CubeDefect defect = CubeDefect::None);

// Outcome chosen by the first `# mock-runner: <directive> [detail]` line of
// the program:
//   ok                   cube exported, kernel_valid=true when asked
//   exec_error [msg]     traceback ending in msg
//   timeout              status timeout
//   missing_face         cube with one face left out of the shell
//   flipped_edge         cube with one edge traversed the wrong way
//   kernel_invalid       cube exported, kernel_valid=false when asked
//   garbage_step         output.step that is not Part 21
//   unreachable          throws RunnerUnavailable
// Programs without a directive use `default_directive`.
class MockRunner : public CadRunner {
 public:
  explicit MockRunner(std::string default_directive = "ok") : default_(std::move(default_directive)) {}
  ExecResult execute(const ExecRequest& request) override;

 private:
  std::string default_;
};

}  // namespace cadaug::runner
