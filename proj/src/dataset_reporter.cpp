#include "cadaug/reporter.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "cadaug/step.hpp"

namespace cadaug::reporter {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string relative_name(const std::filesystem::path& file, const std::filesystem::path& root) {
  if (root.empty()) return file.generic_string();
  std::error_code ec;
  auto rel = std::filesystem::relative(file, root, ec);
  return ec || rel.empty() ? file.generic_string() : rel.generic_string();
}

std::size_t workers(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(jobs, 1));
}

}  // namespace

std::size_t bin_index(double beta, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  if (!(beta >= 0.0)) return 0;
  const auto i = static_cast<std::size_t>(std::floor(beta * static_cast<double>(bins)));
  return std::min(i, bins - 1);
}

std::vector<HistBin> histogram(const std::vector<double>& betas, std::size_t bins) {
  std::vector<HistBin> out(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].lo = static_cast<double>(i) / static_cast<double>(bins);
    out[i].hi = static_cast<double>(i + 1) / static_cast<double>(bins);
  }
  for (double b : betas) ++out[bin_index(b, bins)].count;
  for (auto& bin : out) {
    bin.percent = betas.empty() ? 0.0 : 100.0 * static_cast<double>(bin.count) / static_cast<double>(betas.size());
  }
  return out;
}

CorpusReport aggregate(std::vector<FileStats> files, std::vector<Skipped> skipped, std::size_t bins) {
  if (files.empty()) throw EmptyCorpus();
  const auto by_path = [](const auto& a, const auto& b) { return a.path < b.path; };
  std::sort(files.begin(), files.end(), by_path);
  std::sort(skipped.begin(), skipped.end(), by_path);

  CorpusReport r;
  r.n = files.size();
  double lines = 0;
  double faces = 0;
  double curves = 0;
  double beta = 0;
  std::size_t with_bface = 0;
  std::size_t with_bcurve = 0;
  std::vector<double> betas;
  for (const auto& f : files) {
    lines += static_cast<double>(f.stats.lines);
    faces += static_cast<double>(f.stats.f);
    curves += static_cast<double>(f.stats.e);
    beta += f.stats.beta;
    with_bface += f.stats.f_b >= 1 ? 1 : 0;
    with_bcurve += f.stats.e_b >= 1 ? 1 : 0;
    betas.push_back(f.stats.beta);
  }
  const double n = static_cast<double>(r.n);
  r.avg_lines = lines / n;
  r.avg_faces = faces / n;
  r.avg_curves = curves / n;
  r.mean_beta = beta / n;
  r.pct_with_bspline_faces = 100.0 * static_cast<double>(with_bface) / n;
  r.pct_with_bspline_curves = 100.0 * static_cast<double>(with_bcurve) / n;
  r.histogram = histogram(betas, bins);
  r.files = std::move(files);
  r.skipped = std::move(skipped);
  return r;
}

std::vector<std::filesystem::path> find_step_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (auto it = std::filesystem::recursive_directory_iterator(dir, ec); !ec && it != decltype(it){};
       it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const auto ext = lower(it->path().extension().string());
    if (ext == ".step" || ext == ".stp") out.push_back(it->path());
  }
  if (ec) throw IoError("cannot walk " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

CorpusReport analyze_files(const std::vector<std::filesystem::path>& files, const std::filesystem::path& root,
                           std::size_t parallelism, std::size_t bins) {
  struct Slot {
    std::optional<FileStats> ok;
    std::optional<Skipped> skip;
  };
  std::vector<Slot> slots(files.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      const std::string name = relative_name(files[i], root);
      try {
        slots[i].ok = FileStats{name, metrics::compute_stats(step::read_step_file(files[i]))};
      } catch (const std::exception& e) {
        slots[i].skip = Skipped{name, e.what()};
      }
    }
  };
  const std::size_t n = workers(parallelism, files.size());
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<FileStats> ok;
  std::vector<Skipped> skipped;
  for (auto& s : slots) {
    if (s.ok) ok.push_back(std::move(*s.ok));
    if (s.skip) skipped.push_back(std::move(*s.skip));
  }
  return aggregate(std::move(ok), std::move(skipped), bins);
}

CorpusReport analyze_corpus(const std::filesystem::path& dir, std::size_t parallelism, std::size_t bins) {
  return analyze_files(find_step_files(dir), dir, parallelism, bins);
}

std::string format_text(const CorpusReport& r) {
  std::string out;
  out += fmt::format("{:<26}{}\n", "n", r.n);
  out += fmt::format("{:<26}{:.2f}\n", "avg_lines", r.avg_lines);
  out += fmt::format("{:<26}{:.2f}\n", "avg_faces", r.avg_faces);
  out += fmt::format("{:<26}{:.2f}\n", "avg_curves", r.avg_curves);
  out += fmt::format("{:<26}{:.2f}\n", "pct_with_bspline_faces", r.pct_with_bspline_faces);
  out += fmt::format("{:<26}{:.2f}\n", "pct_with_bspline_curves", r.pct_with_bspline_curves);
  out += fmt::format("{:<26}{:.4f}\n", "mean_beta", r.mean_beta);
  if (!r.skipped.empty()) {
    out += fmt::format("# skipped: {}\n", r.skipped.size());
    for (const auto& s : r.skipped) {
      std::string reason = s.reason;
      std::replace(reason.begin(), reason.end(), '\n', ' ');
      out += fmt::format("# skipped {}: {}\n", s.path, reason);
    }
  }
  return out;
}

std::string format_csv(const CorpusReport& r) {
  return fmt::format(
      "metric,value\n"
      "n,{}\n"
      "avg_lines,{:.6f}\n"
      "avg_faces,{:.6f}\n"
      "avg_curves,{:.6f}\n"
      "pct_with_bspline_faces,{:.6f}\n"
      "pct_with_bspline_curves,{:.6f}\n"
      "mean_beta,{:.6f}\n"
      "skipped,{}\n",
      r.n, r.avg_lines, r.avg_faces, r.avg_curves, r.pct_with_bspline_faces, r.pct_with_bspline_curves, r.mean_beta,
      r.skipped.size());
}

std::string format_histogram(const CorpusReport& r) {
  std::string out = "bin_lo,bin_hi,count,percent\n";
  for (const auto& b : r.histogram) out += fmt::format("{:.2f},{:.2f},{},{:.4f}\n", b.lo, b.hi, b.count, b.percent);
  return out;
}

void emit_report(const CorpusReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "report.txt", format_text(report));
  write_file(out_dir / "report.csv", format_csv(report));
  write_file(out_dir / "hist.csv", format_histogram(report));
}

nlohmann::ordered_json row_to_json(const ManifestRow& row) {
  nlohmann::ordered_json j;
  j["sample_id"] = row.sample_id;
  j["mode"] = row.mode;
  j["family"] = row.family;
  j["status"] = row.status;
  j["iterations"] = row.iterations;
  j["beta"] = row.stats ? nlohmann::ordered_json(row.stats->beta) : nlohmann::ordered_json(nullptr);
  const auto count = [&](std::size_t metrics::BRepStats::*field) {
    return row.stats ? nlohmann::ordered_json((*row.stats).*field) : nlohmann::ordered_json(nullptr);
  };
  j["f"] = count(&metrics::BRepStats::f);
  j["fb"] = count(&metrics::BRepStats::f_b);
  j["e"] = count(&metrics::BRepStats::e);
  j["eb"] = count(&metrics::BRepStats::e_b);
  j["lines"] = count(&metrics::BRepStats::lines);
  j["step_path"] = row.step_path;
  j["stl_path"] = row.stl_path;
  j["exceeded_five"] = row.exceeded_five;
  j["params"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : row.params) j["params"][k] = v;
  if (!row.hard_failure_reason.empty()) j["hard_failure_reason"] = row.hard_failure_reason;
  return j;
}

ManifestRow row_from_json(const nlohmann::json& j) {
  ManifestRow r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.mode = j.value("mode", "");
  r.family = j.value("family", "");
  r.status = j.value("status", "");
  r.iterations = j.value("iterations", std::size_t{0});
  r.exceeded_five = j.value("exceeded_five", false);
  if (j.contains("beta") && !j["beta"].is_null()) {
    metrics::BRepStats s;
    s.beta = j["beta"].get<double>();
    s.f = j.value("f", std::size_t{0});
    s.f_b = j.value("fb", std::size_t{0});
    s.e = j.value("e", std::size_t{0});
    s.e_b = j.value("eb", std::size_t{0});
    s.lines = j.value("lines", std::size_t{0});
    r.stats = s;
  }
  r.step_path = j.value("step_path", "");
  r.stl_path = j.value("stl_path", "");
  if (j.contains("params")) {
    for (const auto& [k, v] : j["params"].items()) r.params[k] = v.get<double>();
  }
  r.hard_failure_reason = j.value("hard_failure_reason", "");
  return r;
}

RunStore::RunStore(const std::filesystem::path& runs_root, const std::string& run_id) {
  if (!orchestrator::valid_sample_id(run_id)) throw ReporterError("invalid run id '" + run_id + "'");
  dir_ = runs_root / run_id;
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
  for (const auto& row : rows()) ids_.insert(row.sample_id);
}

void RunStore::write_config(const nlohmann::json& config) {
  std::lock_guard lock(mutex_);
  write_file(dir_ / "config.json", config.dump(2) + "\n");
}

ManifestRow RunStore::persist_record(const orchestrator::GenerationRecord& rec) {
  std::lock_guard lock(mutex_);
  if (!orchestrator::valid_sample_id(rec.sample_id)) throw ReporterError("invalid sample id '" + rec.sample_id + "'");
  if (ids_.count(rec.sample_id) != 0) throw DuplicateSample(rec.sample_id);

  const auto sample_dir = dir_ / rec.sample_id;
  std::error_code ec;
  std::filesystem::create_directories(sample_dir, ec);
  if (ec) throw IoError("cannot create " + sample_dir.string() + ": " + ec.message());

  write_file(sample_dir / "prompt.txt", rec.prompt.rendered + "\n");
  std::string outcomes;
  for (const auto& it : rec.iterations) {
    write_file(sample_dir / fmt::format("iter_{:02}.py", it.index), it.program_text + "\n");
    nlohmann::ordered_json j;
    j["iteration"] = it.index;
    j["passed"] = it.passed;
    j["exec_status"] = it.exec ? nlohmann::ordered_json(runner::status_name(it.exec->status))
                               : nlohmann::ordered_json(nullptr);
    j["reason"] = it.reason;
    if (it.exec && !it.exec->stderr_tail.empty()) j["stderr_tail"] = it.exec->stderr_tail;
    if (it.structure_report) j["structure_report"] = topology::format_report(*it.structure_report);
    j["usage"] = llm::usage_to_json(it.usage);
    outcomes += j.dump() + "\n";
  }
  write_file(sample_dir / "iterations.jsonl", outcomes);

  ManifestRow row;
  row.sample_id = rec.sample_id;
  row.mode = std::string(prompt::mode_name(rec.mode));
  row.family = rec.family ? std::string(surfaces::family_name(*rec.family)) : "";
  row.params = rec.params;
  row.status = std::string(orchestrator::status_name(rec.final_status));
  row.iterations = rec.iteration_count();
  row.exceeded_five = rec.exceeded_five();
  row.hard_failure_reason = rec.hard_failure_reason;
  if (rec.final_status == orchestrator::FinalStatus::Accepted) {
    row.stats = rec.stats;
    const auto copy = [&](const std::optional<std::filesystem::path>& from, const char* name) -> std::string {
      if (!from) return "";
      std::error_code cec;
      std::filesystem::copy_file(*from, sample_dir / name, std::filesystem::copy_options::overwrite_existing, cec);
      if (cec) throw IoError("cannot copy " + from->string() + ": " + cec.message());
      return rec.sample_id + "/" + name;
    };
    row.step_path = copy(rec.step_path, "final.step");
    row.stl_path = copy(rec.stl_path, "final.stl");
  }

  std::ofstream out(dir_ / "manifest.jsonl", std::ios::app | std::ios::binary);
  out << row_to_json(row).dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to " + (dir_ / "manifest.jsonl").string());
  ids_.insert(rec.sample_id);
  return row;
}

std::vector<ManifestRow> RunStore::rows() const {
  std::vector<ManifestRow> out;
  std::ifstream in(dir_ / "manifest.jsonl");
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(row_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad manifest line in " + (dir_ / "manifest.jsonl").string() + ": " + e.what());
    }
  }
  return out;
}

void RunStore::write_summary() const {
  std::lock_guard lock(mutex_);
  auto all = rows();
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  std::string out = "sample_id,mode,family,status,iterations,exceeded_five,beta,f,fb,e,eb,lines,step_path\n";
  for (const auto& r : all) {
    const auto num = [&](auto v) { return r.stats ? fmt::format("{}", v) : std::string(); };
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.sample_id), r.mode, r.family, r.status,
                       r.iterations, r.exceeded_five ? "true" : "false",
                       r.stats ? fmt::format("{:.6f}", r.stats->beta) : "", num(r.stats ? r.stats->f : 0),
                       num(r.stats ? r.stats->f_b : 0), num(r.stats ? r.stats->e : 0), num(r.stats ? r.stats->e_b : 0),
                       num(r.stats ? r.stats->lines : 0), csv_field(r.step_path));
  }
  write_file(dir_ / "manifest.csv", out);
}

}  // namespace cadaug::reporter
