#include "cadaug/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

namespace cadaug::orchestrator {

namespace {

double percent(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

std::string last_line(std::string_view text) {
  const auto e = text.find_last_not_of(" \t\r\n");
  if (e == std::string_view::npos) return {};
  text = text.substr(0, e + 1);
  const auto nl = text.rfind('\n');
  return std::string(nl == std::string_view::npos ? text : text.substr(nl + 1));
}

}  // namespace

std::string_view status_name(FinalStatus s) {
  switch (s) {
    case FinalStatus::Accepted:
      return "Accepted";
    case FinalStatus::ExhaustedRetries:
      return "ExhaustedRetries";
    case FinalStatus::HardFailure:
      return "HardFailure";
  }
  return "HardFailure";
}

const std::string& GenerationRecord::final_program() const {
  static const std::string empty;
  return iterations.empty() ? empty : iterations.back().program_text;
}

double BatchStats::acceptance_rate() const { return percent(accepted, n); }
double BatchStats::exceeded_five_rate() const { return percent(exceeded_five, n); }
double BatchStats::exceeded_five_accepted_rate() const { return percent(exceeded_five_accepted, accepted); }

BatchStats batch_stats(const std::vector<GenerationRecord>& records) {
  BatchStats s;
  s.n = records.size();
  for (const auto& r : records) {
    s.gateway_calls += r.iteration_count();
    if (r.exceeded_five()) ++s.exceeded_five;
    switch (r.final_status) {
      case FinalStatus::Accepted:
        ++s.accepted;
        if (r.exceeded_five()) ++s.exceeded_five_accepted;
        break;
      case FinalStatus::ExhaustedRetries:
        ++s.exhausted;
        break;
      case FinalStatus::HardFailure:
        ++s.hard_failures;
        break;
    }
  }
  return s;
}

std::string format_batch_stats(const BatchStats& s) {
  return fmt::format(
      "samples: {}\n"
      "accepted: {} ({:.1f}%)\n"
      "exhausted_retries: {}\n"
      "hard_failures: {}\n"
      "gateway_calls: {}\n"
      "exceeded_5: {:.1f}%\n"
      "exceeded_5_of_accepted: {:.1f}%\n",
      s.n, s.accepted, s.acceptance_rate(), s.exhausted, s.hard_failures, s.gateway_calls, s.exceeded_five_rate(),
      s.exceeded_five_accepted_rate());
}

std::vector<Sample> make_samples(const std::vector<prompt::Description>& descriptions, prompt::Mode mode,
                                 std::optional<surfaces::Family> family, std::uint64_t seed,
                                 const surfaces::SamplingRanges& ranges) {
  if (descriptions.empty()) throw std::invalid_argument("no descriptions");
  std::vector<surfaces::SurfaceSpec> specs;
  if (mode == prompt::Mode::Full) {
    if (!family) throw std::invalid_argument("full mode needs a surface family");
    specs = surfaces::sample_specs(*family, descriptions.size(), seed, ranges);
  }
  std::vector<Sample> out;
  for (std::size_t i = 0; i < descriptions.size(); ++i) {
    Sample s{descriptions[i].id, mode, descriptions[i].text, std::nullopt};
    if (!specs.empty()) s.surface = std::move(specs[i]);
    out.push_back(std::move(s));
  }
  return out;
}

bool valid_sample_id(std::string_view id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

Orchestrator::Orchestrator(llm::Gateway& gateway, runner::CadRunner& runner, OrchestratorConfig config)
    : gateway_(gateway), runner_(runner), config_(std::move(config)) {
  if (config_.max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
  if (!(config_.timeout_s > 0.0)) throw std::invalid_argument("timeout_s must be positive");
}

prompt::PromptBundle Orchestrator::base_prompt(const Sample& sample) const {
  if (!valid_sample_id(sample.sample_id)) throw std::invalid_argument("invalid sample id '" + sample.sample_id + "'");
  std::optional<std::string> script;
  if (sample.surface) script = sample.surface->script_text;
  return prompt::compose(sample.mode, config_.category, sample.description, std::move(script));
}

GenerationRecord Orchestrator::run_sample(const Sample& sample) const {
  GenerationRecord rec;
  rec.sample_id = sample.sample_id;
  rec.mode = sample.mode;
  rec.prompt = base_prompt(sample);
  if (sample.surface) {
    rec.family = sample.surface->family;
    rec.params = sample.surface->params;
  }

  prompt::PromptBundle current = rec.prompt;
  for (int k = 1; k <= config_.max_iterations; ++k) {
    IterationOutcome it;
    it.index = k;
    std::string feedback;

    llm::LlmRequest req;
    req.model_id = config_.model_id;
    req.system_text = config_.system_text;
    req.user_text = current.rendered;
    req.reasoning_effort = config_.reasoning_effort;
    req.max_output_tokens = config_.max_output_tokens;
    req.request_tag = fmt::format("{}/iter_{}", sample.sample_id, k);

    try {
      auto resp = gateway_.generate(req);
      it.program_text = std::move(resp.program_text);
      it.usage = resp.usage;
      if (resp.empty_program) {
        it.reason = "empty program";
        feedback = "The response did not contain a program.";
      }
    } catch (const llm::EmptyCompletion&) {
      it.reason = "empty completion";
      feedback = "The response did not contain a program.";
    } catch (const llm::LlmError& e) {
      // transport exhausted, auth, cassette miss: nothing to repair
      it.reason = std::string("gateway: ") + e.what();
      rec.iterations.push_back(std::move(it));
      rec.final_status = FinalStatus::HardFailure;
      rec.hard_failure_reason = rec.iterations.back().reason;
      return rec;
    }

    std::optional<step::StepFile> model;
    if (it.reason.empty()) {
      runner::ExecRequest ex;
      ex.program_text = it.program_text;
      ex.timeout_s = config_.timeout_s;
      ex.workdir = config_.work_root / sample.sample_id / fmt::format("iter_{}", k);
      ex.want_kernel_check = config_.want_kernel_check;
      try {
        std::filesystem::remove_all(ex.workdir);
        std::filesystem::create_directories(ex.workdir);
        it.exec = runner_.execute(ex);
      } catch (const runner::RunnerUnavailable& e) {
        it.reason = std::string("runner: ") + e.what();
        rec.iterations.push_back(std::move(it));
        rec.final_status = FinalStatus::HardFailure;
        rec.hard_failure_reason = rec.iterations.back().reason;
        return rec;
      } catch (const std::filesystem::filesystem_error& e) {
        it.reason = std::string("workdir: ") + e.what();
        rec.iterations.push_back(std::move(it));
        rec.final_status = FinalStatus::HardFailure;
        rec.hard_failure_reason = rec.iterations.back().reason;
        return rec;
      }

      switch (it.exec->status) {
        case runner::ExecStatus::ExecError:
          it.reason = "exec_error: " + last_line(it.exec->stderr_tail);
          feedback = it.exec->stderr_tail.empty() ? "The program failed without diagnostics." : it.exec->stderr_tail;
          break;
        case runner::ExecStatus::Timeout:
          it.reason = "timeout";
          feedback = fmt::format("The program did not finish within {} seconds.", config_.timeout_s);
          break;
        case runner::ExecStatus::Ok: {
          try {
            if (!it.exec->step_path) throw step::StepError("the program exported no STEP file");
            model = step::read_step_file(*it.exec->step_path);
            it.structure_report = topology::validate_structure(*model, it.exec->kernel_valid);
          } catch (const step::StepError& e) {
            it.structure_report = topology::parse_failure_report(e.what());
            model.reset();
          }
          it.passed = it.structure_report->passed();
          if (!it.passed) {
            it.reason = "structure: " + it.structure_report->failures.front().check;
            feedback = topology::format_report(*it.structure_report);
          }
          break;
        }
      }
    }

    rec.iterations.push_back(std::move(it));
    const auto& done = rec.iterations.back();
    if (done.passed) {
      rec.final_status = FinalStatus::Accepted;
      rec.step_path = done.exec->step_path;
      rec.stl_path = done.exec->stl_path;
      try {
        rec.stats = metrics::compute_stats(*model);
      } catch (const metrics::MetricsError&) {
        rec.stats.reset();
      }
      return rec;
    }
    current = prompt::repair_prompt(rec.prompt, done.program_text, feedback, config_.repair_budget);
  }
  rec.final_status = FinalStatus::ExhaustedRetries;
  return rec;
}

BatchResult Orchestrator::run_batch(const std::vector<Sample>& samples, std::size_t parallelism,
                                    const std::function<void(const GenerationRecord&)>& sink) const {
  if (samples.empty()) throw std::invalid_argument("batch needs at least one sample");
  std::set<std::string, std::less<>> ids;
  for (const auto& s : samples) {
    base_prompt(s);
    if (!ids.insert(s.sample_id).second) throw std::invalid_argument("duplicate sample id '" + s.sample_id + "'");
  }

  BatchResult out;
  out.records.resize(samples.size());
  std::atomic<std::size_t> next{0};
  std::mutex sink_mutex;
  const auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      GenerationRecord rec;
      try {
        rec = run_sample(samples[i]);
      } catch (const std::exception& e) {
        rec = GenerationRecord{};
        rec.sample_id = samples[i].sample_id;
        rec.mode = samples[i].mode;
        rec.final_status = FinalStatus::HardFailure;
        rec.hard_failure_reason = e.what();
      }
      if (sink) {
        std::lock_guard lock(sink_mutex);
        try {
          sink(rec);
        } catch (const std::exception& e) {
          out.sink_errors.push_back(rec.sample_id + ": " + e.what());
        }
      }
      out.records[i] = std::move(rec);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(parallelism, 1, samples.size());
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  out.stats = batch_stats(out.records);
  return out;
}

}  // namespace cadaug::orchestrator
