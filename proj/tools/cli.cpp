#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>
#include <set>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "cadaug/llm.hpp"
#include "cadaug/orchestrator.hpp"
#include "cadaug/prompt.hpp"
#include "cadaug/reporter.hpp"
#include "cadaug/runner.hpp"
#include "cadaug/step.hpp"
#include "cadaug/surfaces.hpp"
#include "cadaug/topology.hpp"

namespace cadaug::cli {

namespace {

using nlohmann::json;

// Thrown where an error must map to a specific exit code.
struct ExitError : std::runtime_error {
  ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
  int code;
};

template <typename T>
T get(const json& config, const std::string& section, const std::string& key) {
  try {
    return config.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}.{}: {}", section, key, e.what()));
  }
}

json range(double lo, double hi) { return json::array({lo, hi}); }

surfaces::Range get_range(const json& config, const std::string& key) {
  const auto v = get<std::vector<double>>(config, "surface_catalog", key);
  if (v.size() != 2) throw ConfigError("surface_catalog." + key + " must be [lo, hi]");
  return {v[0], v[1]};
}

surfaces::SamplingRanges sampling_ranges(const json& c) {
  surfaces::SamplingRanges r;
  r.span = get_range(c, "span");
  r.resolutions = get<std::vector<int>>(c, "surface_catalog", "resolutions");
  r.saddle_curv = get_range(c, "saddle_curv");
  r.gaussian_h = get_range(c, "gaussian_h");
  r.wave_a = get_range(c, "wave_a");
  r.wave_lambda = get_range(c, "wave_lambda");
  r.ripple_a = get_range(c, "ripple_a");
  r.ripple_k = get_range(c, "ripple_k");
  r.ripple_d = get_range(c, "ripple_d");
  return r;
}

std::string family_list() {
  std::string s;
  for (auto f : surfaces::all_families()) s += (s.empty() ? "" : ", ") + std::string(surfaces::family_name(f));
  return s;
}

surfaces::Family family_or_throw(const std::string& name) {
  auto f = surfaces::parse_family(name);
  if (!f) throw ExitError(kUsage, "unknown family '" + name + "' (valid families: " + family_list() + ")");
  return *f;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

std::string default_run_id() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "run-%Y%m%d-%H%M%S", &tm);
  return buf;
}

// Settings shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  int verbosity = 1;

  json build() const {
    json c = default_config();
    if (!config_path.empty()) merge_config(c, load_json_file(config_path));
    for (const auto& o : overrides) apply_override(c, o);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "JSON config file with module sections");
  cmd->add_option("--set", common.overrides, "Override a config value: section.key=value")->take_all();
  cmd->add_flag_callback("-q,--quiet", [&common] { common.verbosity = 0; }, "Only errors on stderr");
  cmd->add_flag_callback("-v,--verbose", [&common] { common.verbosity = 2; }, "Per-sample progress on stderr");
}

int cmd_surfaces(json config, const std::optional<std::string>& family_flag, std::optional<std::size_t> count_flag,
                 std::optional<std::uint64_t> seed_flag, const std::string& out_dir, std::ostream& out) {
  if (family_flag) config["surface_catalog"]["family"] = *family_flag;
  if (count_flag) config["surface_catalog"]["count"] = *count_flag;
  if (seed_flag) config["surface_catalog"]["seed"] = *seed_flag;
  const auto family = family_or_throw(get<std::string>(config, "surface_catalog", "family"));
  const auto count = get<std::size_t>(config, "surface_catalog", "count");
  const auto seed = get<std::uint64_t>(config, "surface_catalog", "seed");

  std::vector<surfaces::SurfaceSpec> specs;
  try {
    specs = surfaces::sample_specs(family, count, seed, sampling_ranges(config));
  } catch (const surfaces::BadParamsError& e) {
    throw ExitError(kUsage, e.what());
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ExitError(kEnvironment, "cannot create " + out_dir + ": " + ec.message());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto stem = surfaces::spec_file_stem(family, seed, i);
    const auto base = std::filesystem::path(out_dir) / stem;
    std::ofstream(base.string() + ".py", std::ios::binary) << specs[i].script_text;
    nlohmann::ordered_json meta;
    meta["family"] = surfaces::family_name(family);
    meta["seed"] = seed;
    meta["index"] = i;
    meta["params"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : specs[i].params) meta["params"][k] = v;
    meta["script"] = stem + ".py";
    std::ofstream meta_out(base.string() + ".json", std::ios::binary);
    meta_out << meta.dump(2) << "\n";
    if (!meta_out) throw ExitError(kEnvironment, "cannot write " + base.string() + ".json");
    out << stem << ".py\n";
  }
  return kOk;
}

struct AugmentFlags {
  std::string descriptions;
  std::optional<std::string> category;
  std::optional<std::string> mode;
  std::optional<std::string> backend;
  std::optional<std::string> cassette;
  std::optional<std::string> runner;
  std::optional<std::size_t> parallelism;
  std::optional<int> max_iterations;
  std::optional<std::string> family;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  std::string run_id;
};

std::shared_ptr<llm::Backend> make_backend(const json& c) {
  const auto kind = get<std::string>(c, "llm_gateway", "backend");
  const auto cassette = get<std::string>(c, "llm_gateway", "cassette");
  const auto http = [&] {
    llm::HttpConfig h;
    const json& j = c.at("llm_gateway").at("http");
    h.base_url = j.at("base_url").get<std::string>();
    h.path = j.at("path").get<std::string>();
    h.auth_header = j.at("auth_header").get<std::string>();
    h.auth_scheme = j.at("auth_scheme").get<std::string>();
    h.api_key_env = j.at("api_key_env").get<std::string>();
    h.connect_timeout_s = j.at("connect_timeout_s").get<int>();
    h.read_timeout_s = j.at("read_timeout_s").get<int>();
    try {
      return std::make_shared<llm::HttpBackend>(h);
    } catch (const llm::AuthError& e) {
      throw ExitError(kEnvironment, e.what());
    }
  };
  if (kind == "replay") {
    if (cassette.empty()) throw ConfigError("replay backend needs llm_gateway.cassette (or --cassette)");
    try {
      return std::make_shared<llm::ReplayBackend>(std::filesystem::path(cassette));
    } catch (const llm::LlmError& e) {
      throw ConfigError(e.what());
    }
  }
  if (kind == "live") return http();
  if (kind == "record") {
    if (cassette.empty()) throw ConfigError("record backend needs llm_gateway.cassette (or --cassette)");
    return std::make_shared<llm::RecordingBackend>(http(), cassette);
  }
  throw ConfigError("llm_gateway.backend must be live, replay or record, got '" + kind + "'");
}

std::unique_ptr<runner::CadRunner> make_runner(const json& c) {
  const auto kind = get<std::string>(c, "cad_runner", "kind");
  if (kind == "mock") return std::make_unique<runner::MockRunner>(get<std::string>(c, "cad_runner", "mock_default"));
  if (kind == "subprocess") {
    runner::SubprocessConfig s;
    s.command = get<std::vector<std::string>>(c, "cad_runner", "command");
    s.pool_size = get<std::size_t>(c, "cad_runner", "pool_size");
    s.grace_s = get<double>(c, "cad_runner", "grace_s");
    if (s.command.empty()) throw ConfigError("cad_runner.command is empty");
    return std::make_unique<runner::SubprocessRunner>(s);
  }
  throw ConfigError("cad_runner.kind must be subprocess or mock, got '" + kind + "'");
}

int cmd_augment(json config, const AugmentFlags& f, int verbosity, std::ostream& out, std::ostream& err) {
  if (f.category) config["prompt_engine"]["category"] = *f.category;
  if (f.mode) config["prompt_engine"]["mode"] = *f.mode;
  if (f.backend) config["llm_gateway"]["backend"] = *f.backend;
  if (f.cassette) config["llm_gateway"]["cassette"] = *f.cassette;
  if (f.runner) config["cad_runner"]["kind"] = *f.runner;
  if (f.parallelism) config["generation_orchestrator"]["parallelism"] = *f.parallelism;
  if (f.max_iterations) config["generation_orchestrator"]["max_iterations"] = *f.max_iterations;
  if (f.family) config["surface_catalog"]["family"] = *f.family;
  if (f.seed) config["surface_catalog"]["seed"] = *f.seed;

  const auto mode_name = get<std::string>(config, "prompt_engine", "mode");
  const auto mode = prompt::parse_mode(mode_name);
  if (!mode) throw ConfigError("mode must be full, minus-rt or minus-r, got '" + mode_name + "'");
  std::optional<surfaces::Family> family;
  if (*mode == prompt::Mode::Full) family = family_or_throw(get<std::string>(config, "surface_catalog", "family"));

  std::vector<orchestrator::Sample> samples;
  prompt::CategoryConfig category;
  try {
    category = prompt::load_category(get<std::string>(config, "prompt_engine", "category"));
    const auto descriptions = prompt::load_descriptions(f.descriptions);
    samples = orchestrator::make_samples(descriptions, *mode, family, get<std::uint64_t>(config, "surface_catalog", "seed"),
                                         sampling_ranges(config));
  } catch (const prompt::PromptError& e) {
    throw ExitError(kUsage, e.what());
  } catch (const std::invalid_argument& e) {
    throw ExitError(kUsage, e.what());
  }

  const std::string run_id = f.run_id.empty() ? default_run_id() : f.run_id;
  orchestrator::OrchestratorConfig oc;
  oc.max_iterations = get<int>(config, "generation_orchestrator", "max_iterations");
  oc.timeout_s = get<double>(config, "generation_orchestrator", "timeout_s");
  oc.want_kernel_check = get<bool>(config, "generation_orchestrator", "want_kernel_check");
  oc.model_id = get<std::string>(config, "llm_gateway", "model_id");
  oc.system_text = get<std::string>(config, "llm_gateway", "system_text");
  const auto effort = llm::parse_effort(get<std::string>(config, "llm_gateway", "reasoning_effort"));
  if (!effort) throw ConfigError("llm_gateway.reasoning_effort must be low, medium or high");
  oc.reasoning_effort = *effort;
  oc.max_output_tokens = get<int>(config, "llm_gateway", "max_output_tokens");
  oc.category = category;
  oc.repair_budget.error_bytes = get<std::size_t>(config, "prompt_engine", "error_bytes");
  oc.repair_budget.program_bytes = get<std::size_t>(config, "prompt_engine", "program_bytes");
  const auto work_root = get<std::string>(config, "generation_orchestrator", "work_root");
  const auto parallelism = get<std::size_t>(config, "generation_orchestrator", "parallelism");

  llm::GatewayConfig gc;
  gc.max_retries = get<int>(config, "llm_gateway", "max_retries");
  gc.backoff_base = std::chrono::milliseconds(get<long>(config, "llm_gateway", "backoff_base_ms"));
  gc.max_in_flight = get<int>(config, "llm_gateway", "max_in_flight");

  auto backend = make_backend(config);
  auto cad = make_runner(config);
  llm::Gateway gateway(backend, gc);

  std::unique_ptr<reporter::RunStore> store;
  try {
    store = std::make_unique<reporter::RunStore>(f.out, run_id);
  } catch (const reporter::IoError& e) {
    throw ExitError(kEnvironment, e.what());
  } catch (const reporter::ReporterError& e) {
    throw ExitError(kUsage, e.what());
  }
  std::set<std::string> existing;
  for (const auto& row : store->rows()) existing.insert(row.sample_id);
  for (const auto& s : samples) {
    if (existing.count(s.sample_id)) throw ExitError(kUsage, "run " + run_id + " already holds sample '" + s.sample_id + "'");
  }
  oc.work_root = work_root.empty() ? store->dir() / "work" : std::filesystem::path(work_root);
  store->write_config(config);

  orchestrator::Orchestrator orch(gateway, *cad, oc);
  orchestrator::BatchResult result;
  try {
    result = orch.run_batch(samples, parallelism, [&](const orchestrator::GenerationRecord& rec) {
      store->persist_record(rec);
      if (verbosity >= 2) {
        err << fmt::format("{}: {} after {} iteration(s)\n", rec.sample_id, orchestrator::status_name(rec.final_status),
                           rec.iteration_count());
      }
    });
  } catch (const std::invalid_argument& e) {
    throw ExitError(kUsage, e.what());
  }
  store->write_summary();
  const std::string summary = orchestrator::format_batch_stats(result.stats);
  std::ofstream(store->dir() / "batch_stats.txt", std::ios::binary) << summary;
  out << summary;
  for (const auto& e : result.sink_errors) err << "cadaug: could not persist " << e << "\n";
  if (verbosity >= 1) err << "cadaug: run written to " << store->dir().string() << "\n";

  if (!result.sink_errors.empty()) return kEnvironment;
  if (result.stats.accepted > 0) return kOk;
  for (const auto& r : result.records) {
    const auto& why = r.hard_failure_reason;
    if (why.rfind("runner:", 0) == 0 || why.rfind("workdir:", 0) == 0) return kEnvironment;
  }
  return kDomainFailure;
}

int cmd_analyze(const json& config, const std::string& step_dir, const std::string& out_dir,
                std::optional<std::size_t> parallelism, std::ostream& out) {
  const auto bins = get<std::size_t>(config, "dataset_reporter", "bins");
  const auto par = parallelism ? *parallelism : get<std::size_t>(config, "dataset_reporter", "parallelism");
  if (bins == 0) throw ConfigError("dataset_reporter.bins must be positive");
  reporter::CorpusReport report;
  try {
    report = reporter::analyze_corpus(step_dir, par, bins);
  } catch (const reporter::EmptyCorpus& e) {
    throw ExitError(kUsage, std::string(e.what()) + ": " + step_dir);
  } catch (const reporter::IoError& e) {
    throw ExitError(kUsage, e.what());
  }
  try {
    reporter::emit_report(report, out_dir);
  } catch (const reporter::IoError& e) {
    throw ExitError(kEnvironment, e.what());
  }
  out << reporter::format_text(report);
  return kOk;
}

int cmd_validate(const std::string& path, std::optional<bool> kernel_valid, std::ostream& out) {
  if (!std::filesystem::is_regular_file(path)) throw ExitError(kUsage, "no such file: " + path);
  topology::ValidationReport report;
  try {
    report = topology::validate_structure(step::read_step_file(path), kernel_valid);
  } catch (const step::StepError& e) {
    report = topology::parse_failure_report(e.what());
  }
  out << topology::format_report(report);
  return report.passed() ? kOk : kDomainFailure;
}

}  // namespace

json default_config() {
  return {
      {"llm_gateway",
       {{"backend", "replay"},
        {"cassette", ""},
        {"model_id", "o3-2025-04-16"},
        {"system_text", ""},
        {"reasoning_effort", "high"},
        {"max_output_tokens", 32768},
        {"max_retries", 3},
        {"backoff_base_ms", 2000},
        {"max_in_flight", 4},
        {"http",
         {{"base_url", "https://api.openai.com"},
          {"path", "/v1/chat/completions"},
          {"auth_header", "Authorization"},
          {"auth_scheme", "Bearer "},
          {"api_key_env", "OPENAI_API_KEY"},
          {"connect_timeout_s", 30},
          {"read_timeout_s", 600}}}}},
      {"generation_orchestrator",
       {{"max_iterations", 8},
        {"timeout_s", 120.0},
        {"want_kernel_check", true},
        {"parallelism", 1},
        {"work_root", ""}}},
      {"cad_runner",
       {{"kind", "subprocess"},
        {"command", json::array({"python3", "-m", "cad_runner", "serve"})},
        {"pool_size", 1},
        {"grace_s", 30.0},
        {"mock_default", "ok"}}},
      {"prompt_engine", {{"category", "bracket"}, {"mode", "full"}, {"error_bytes", 4096}, {"program_bytes", 65536}}},
      {"surface_catalog",
       {{"family", "gaussian"},
        {"count", 1},
        {"seed", 0},
        {"span", range(50.0, 300.0)},
        {"resolutions", json::array({50, 100, 300})},
        {"saddle_curv", range(0.001, 0.01)},
        {"gaussian_h", range(2.0, 15.0)},
        {"wave_a", range(1.0, 8.0)},
        {"wave_lambda", range(1.0 / 6.0, 0.5)},
        {"ripple_a", range(1.0, 6.0)},
        {"ripple_k", range(0.1, 0.5)},
        {"ripple_d", range(0.0, 0.05)}}},
      {"dataset_reporter", {{"bins", 10}, {"parallelism", 0}}},
  };
}

void merge_config(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key " + path);
    if (base[key].is_object()) {
      merge_config(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like section.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  // build a nested patch so merge_config checks the key
  json patch = value;
  std::size_t end = path.size();
  for (;;) {
    const auto dot = path.rfind('.', end - 1);
    const std::string key = path.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    if (key.empty()) throw ConfigError("empty key in override " + assignment);
    patch = json{{key, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_config(config, patch);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reference-surface guided CAD data augmentation", "cadaug"};
  app.require_subcommand(1);
  Common common;

  auto* surf = app.add_subcommand("surfaces", "Write sampled reference-surface programs");
  add_common(surf, common);
  std::optional<std::string> s_family;
  std::optional<std::size_t> s_count;
  std::optional<std::uint64_t> s_seed;
  std::string s_out = "surfaces";
  surf->add_option("--family", s_family, "gaussian, saddle, wave or ripple");
  surf->add_option("--count", s_count, "Number of programs");
  surf->add_option("--seed", s_seed, "Sampling seed");
  surf->add_option("--out-dir", s_out, "Output directory");

  auto* aug = app.add_subcommand("augment", "Generate CAD programs for a batch of descriptions");
  add_common(aug, common);
  AugmentFlags af;
  aug->add_option("--descriptions", af.descriptions, "Descriptions file (.csv, .tsv or one per line)")->required();
  aug->add_option("--category", af.category, "Built-in category name or JSON file");
  aug->add_option("--mode", af.mode, "full, minus-rt or minus-r");
  aug->add_option("--backend", af.backend, "live, replay or record");
  aug->add_option("--cassette", af.cassette, "Cassette file for replay/record");
  aug->add_option("--runner", af.runner, "subprocess or mock");
  aug->add_option("--parallelism", af.parallelism, "Samples in flight");
  aug->add_option("--max-iterations", af.max_iterations, "Generation attempts per sample");
  aug->add_option("--family", af.family, "Reference-surface family for full mode");
  aug->add_option("--seed", af.seed, "Reference-surface sampling seed");
  aug->add_option("--out", af.out, "Runs directory");
  aug->add_option("--run-id", af.run_id, "Run directory name (default: UTC timestamp)");

  auto* ana = app.add_subcommand("analyze", "Corpus statistics over a directory of STEP files");
  add_common(ana, common);
  std::string a_dir;
  std::string a_out = "report";
  std::optional<std::size_t> a_par;
  ana->add_option("STEP_DIR", a_dir, "Corpus directory")->required();
  ana->add_option("--out", a_out, "Report directory");
  ana->add_option("--parallelism", a_par, "Files parsed in parallel (0: all cores)");

  auto* val = app.add_subcommand("validate", "Structure checks on one STEP file");
  add_common(val, common);
  std::string v_file;
  std::optional<bool> v_kernel;
  val->add_option("STEP_FILE", v_file, "STEP file")->required();
  val->add_option("--kernel-valid", v_kernel, "Kernel verdict to fold into the checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "cadaug: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kUsage;
  }

  try {
    const json config = common.build();
    if (surf->parsed()) return cmd_surfaces(config, s_family, s_count, s_seed, s_out, out);
    if (aug->parsed()) return cmd_augment(config, af, common.verbosity, out, err);
    if (ana->parsed()) return cmd_analyze(config, a_dir, a_out, a_par, out);
    if (val->parsed()) return cmd_validate(v_file, v_kernel, out);
  } catch (const ExitError& e) {
    err << "cadaug: " << e.what() << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    err << "cadaug: config: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "cadaug: " << e.what() << "\n";
    return kEnvironment;
  }
  return kUsage;
}

}  // namespace cadaug::cli
