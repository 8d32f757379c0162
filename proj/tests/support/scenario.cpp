#include "support/scenario.hpp"

#include <fmt/format.h>

#include "cadaug/runner.hpp"

namespace cadaug::testing {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

std::string scripted_program(int attempt, const std::string& directive) {
  return fmt::format(
      "# attempt {}\n"
      "# mock-runner: {}\n"
      "import cadquery as cq\n"
      "result = cq.Workplane(\"XY\").box(10, 10, 10)\n"
      "cq.exporters.export(result, \"output.step\")\n"
      "cq.exporters.export(result, \"output.stl\")",
      attempt, directive);
}

llm::Completion ScriptedBackend::complete(const llm::LlmRequest& request) {
  const std::string& text = request.user_text;
  const auto at = text.find("plan: ");
  if (at == std::string::npos) throw llm::LlmError("scripted backend: prompt has no plan");
  const auto eol = text.find('\n', at);
  const std::string plan = text.substr(at + 6, eol == std::string::npos ? eol : eol - at - 6);
  std::vector<std::string> steps;
  std::size_t pos = 0;
  for (;;) {
    const auto semi = plan.find(';', pos);
    steps.push_back(trim(plan.substr(pos, semi == std::string::npos ? semi : semi - pos)));
    if (semi == std::string::npos) break;
    pos = semi + 1;
  }

  int attempt = 1;
  if (const auto prev = text.rfind("# attempt "); prev != std::string::npos) {
    attempt = std::stoi(text.substr(prev + 10)) + 1;
  }
  const auto& directive = steps[std::min<std::size_t>(attempt - 1, steps.size() - 1)];
  llm::Completion c;
  c.raw_text = "Here is the program.\n```python\n" + scripted_program(attempt, directive) + "\n```\n";
  c.usage = {static_cast<long>(text.size() / 4), static_cast<long>(c.raw_text.size() / 4),
             static_cast<long>(text.size() / 4 + c.raw_text.size() / 4)};
  return c;
}

std::filesystem::path scenario_descriptions() {
  return std::filesystem::path(CADAUG_FIXTURE_DIR) / "scenario" / "descriptions.csv";
}

std::filesystem::path scenario_cassette() {
  return std::filesystem::path(CADAUG_FIXTURE_DIR) / "scenario" / "cassette.jsonl";
}

std::vector<orchestrator::Sample> scenario_samples() {
  return orchestrator::make_samples(prompt::load_descriptions(scenario_descriptions().string()), prompt::Mode::Full,
                                    kScenarioFamily, kScenarioSeed);
}

orchestrator::OrchestratorConfig scenario_config(const std::filesystem::path& work_root) {
  orchestrator::OrchestratorConfig cfg;
  cfg.work_root = work_root;
  return cfg;
}

orchestrator::BatchResult run_scenario(std::shared_ptr<llm::Backend> backend, const std::filesystem::path& work_root,
                                       std::size_t* gateway_calls) {
  llm::Gateway gateway(std::move(backend), {}, [](auto) {});
  runner::MockRunner mock;
  orchestrator::Orchestrator orch(gateway, mock, scenario_config(work_root));
  auto result = orch.run_batch(scenario_samples(), 1);
  if (gateway_calls != nullptr) *gateway_calls = gateway.calls();
  return result;
}

}  // namespace cadaug::testing
