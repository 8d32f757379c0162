// Generate, execute, validate and repair, per sample, until a program yields
// a valid solid or the iteration cap is hit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cadaug/llm.hpp"
#include "cadaug/metrics.hpp"
#include "cadaug/prompt.hpp"
#include "cadaug/runner.hpp"
#include "cadaug/surfaces.hpp"
#include "cadaug/topology.hpp"

namespace cadaug::orchestrator {

enum class FinalStatus { Accepted, ExhaustedRetries, HardFailure };

std::string_view status_name(FinalStatus s);

struct IterationOutcome {
  int index = 0;  // 1-based
  std::string program_text;
  llm::Usage usage;
  // Absent when generation itself failed.
  std::optional<runner::ExecResult> exec;
  // Present iff exec reported ok.
  std::optional<topology::ValidationReport> structure_report;
  bool passed = false;
  // One-line failure summary; empty on pass.
  std::string reason;
};

struct Sample {
  std::string sample_id;
  prompt::Mode mode = prompt::Mode::Full;
  std::string description;
  std::optional<surfaces::SurfaceSpec> surface;
};

struct GenerationRecord {
  std::string sample_id;
  prompt::Mode mode = prompt::Mode::Full;
  std::optional<surfaces::Family> family;
  surfaces::Params params;
  prompt::PromptBundle prompt;
  std::vector<IterationOutcome> iterations;
  FinalStatus final_status = FinalStatus::HardFailure;
  std::string hard_failure_reason;
  std::optional<std::filesystem::path> step_path;
  std::optional<std::filesystem::path> stl_path;
  std::optional<metrics::BRepStats> stats;

  std::size_t iteration_count() const { return iterations.size(); }
  bool exceeded_five() const { return iterations.size() > 5; }
  const std::string& final_program() const;
};

struct OrchestratorConfig {
  int max_iterations = 8;
  double timeout_s = 120.0;
  bool want_kernel_check = true;
  std::string model_id = "o3-2025-04-16";
  std::string system_text;
  llm::ReasoningEffort reasoning_effort = llm::ReasoningEffort::High;
  int max_output_tokens = 32768;
  prompt::CategoryConfig category = prompt::CategoryConfig::bracket();
  prompt::RepairBudget repair_budget;
  // Runner workdirs: <work_root>/<sample_id>/iter_<k>
  std::filesystem::path work_root = std::filesystem::temp_directory_path() / "cadaug-work";
};

struct BatchStats {
  std::size_t n = 0;
  std::size_t accepted = 0;
  std::size_t exhausted = 0;
  std::size_t hard_failures = 0;
  std::size_t exceeded_five = 0;
  std::size_t exceeded_five_accepted = 0;
  std::size_t gateway_calls = 0;

  double acceptance_rate() const;
  // Over all records.
  double exceeded_five_rate() const;
  // Over accepted records only.
  double exceeded_five_accepted_rate() const;
};

BatchStats batch_stats(const std::vector<GenerationRecord>& records);
// Fixed layout, one `key: value` per line, percentages with one decimal.
std::string format_batch_stats(const BatchStats& stats);

struct BatchResult {
  std::vector<GenerationRecord> records;  // input order
  BatchStats stats;
  // Sink exceptions, "<sample_id>: <what>"; the batch keeps going.
  std::vector<std::string> sink_errors;
};

// One sample per description, in order. Full mode pairs description i with
// surface i of sample_specs(family, n, seed); other modes carry no surface.
std::vector<Sample> make_samples(const std::vector<prompt::Description>& descriptions, prompt::Mode mode,
                                 std::optional<surfaces::Family> family, std::uint64_t seed,
                                 const surfaces::SamplingRanges& ranges = {});

// Sample ids become directory names: [A-Za-z0-9._-]+, not "." or "..".
bool valid_sample_id(std::string_view id);

class Orchestrator {
 public:
  Orchestrator(llm::Gateway& gateway, runner::CadRunner& runner, OrchestratorConfig config);

  // Throws std::invalid_argument (bad sample id, prompt errors) before any
  // gateway call; every later failure ends up in the record.
  GenerationRecord run_sample(const Sample& sample) const;

  // Checks every sample up front, then runs up to `parallelism` samples at
  // once. `sink` sees each finished record, one call at a time.
  BatchResult run_batch(const std::vector<Sample>& samples, std::size_t parallelism,
                        const std::function<void(const GenerationRecord&)>& sink = {}) const;

  const OrchestratorConfig& config() const { return config_; }

 private:
  prompt::PromptBundle base_prompt(const Sample& sample) const;

  llm::Gateway& gateway_;
  runner::CadRunner& runner_;
  OrchestratorConfig config_;
};

}  // namespace cadaug::orchestrator
