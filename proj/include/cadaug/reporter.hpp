// Corpus statistics over STEP files and run artifacts on disk.

#pragma once

#include <cstddef>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cadaug/metrics.hpp"
#include "cadaug/orchestrator.hpp"
#include "json.hpp"

namespace cadaug::reporter {

class ReporterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class EmptyCorpus : public ReporterError {
 public:
  EmptyCorpus() : ReporterError("no parseable STEP files in corpus") {}
};
class IoError : public ReporterError {
 public:
  using ReporterError::ReporterError;
};
class DuplicateSample : public ReporterError {
 public:
  explicit DuplicateSample(const std::string& id) : ReporterError("sample '" + id + "' is already in the manifest") {}
};

struct FileStats {
  std::string path;  // relative to the corpus root, '/' separated
  metrics::BRepStats stats;
};

struct Skipped {
  std::string path;
  std::string reason;
};

struct HistBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double percent = 0.0;
};

struct CorpusReport {
  std::size_t n = 0;
  double avg_lines = 0.0;
  double avg_faces = 0.0;
  double avg_curves = 0.0;
  double pct_with_bspline_faces = 0.0;
  double pct_with_bspline_curves = 0.0;
  double mean_beta = 0.0;
  std::vector<HistBin> histogram;
  std::vector<FileStats> files;  // sorted by path
  std::vector<Skipped> skipped;  // sorted by path
};

// Equal-width bins on [0, 1], left-closed; 1.0 lands in the last bin.
std::size_t bin_index(double beta, std::size_t bins);
std::vector<HistBin> histogram(const std::vector<double>& betas, std::size_t bins = 10);

// Pure fold; input order does not matter. Throws EmptyCorpus when `files` is empty.
CorpusReport aggregate(std::vector<FileStats> files, std::vector<Skipped> skipped, std::size_t bins = 10);

// Regular `.step` / `.stp` files below `dir` (any case), sorted.
std::vector<std::filesystem::path> find_step_files(const std::filesystem::path& dir);

// Files that fail to parse or hold no faces and curves are skipped, with the reason.
CorpusReport analyze_files(const std::vector<std::filesystem::path>& files, const std::filesystem::path& root,
                           std::size_t parallelism = 0, std::size_t bins = 10);
CorpusReport analyze_corpus(const std::filesystem::path& dir, std::size_t parallelism = 0, std::size_t bins = 10);

// n plus six metric rows; skipped files follow as `#` comments.
std::string format_text(const CorpusReport& report);
std::string format_csv(const CorpusReport& report);
// bin_lo,bin_hi,count,percent
std::string format_histogram(const CorpusReport& report);

// Writes report.txt, report.csv and hist.csv into `out_dir`.
void emit_report(const CorpusReport& report, const std::filesystem::path& out_dir);

struct ManifestRow {
  std::string sample_id;
  std::string mode;
  std::string family;
  surfaces::Params params;
  std::string status;
  std::size_t iterations = 0;
  bool exceeded_five = false;
  std::optional<metrics::BRepStats> stats;
  std::string step_path;  // relative to the run directory; empty unless accepted
  std::string stl_path;
  std::string hard_failure_reason;
};

nlohmann::ordered_json row_to_json(const ManifestRow& row);
ManifestRow row_from_json(const nlohmann::json& j);

// runs/<run_id>/ with config.json, manifest.jsonl, manifest.csv and one
// directory per sample (iter_<k>.py, iterations.jsonl, prompt.txt,
// final.step, final.stl). Appends are serialized; rows already in an
// existing manifest count as persisted.
class RunStore {
 public:
  RunStore(const std::filesystem::path& runs_root, const std::string& run_id);

  const std::filesystem::path& dir() const { return dir_; }
  void write_config(const nlohmann::json& config);
  ManifestRow persist_record(const orchestrator::GenerationRecord& record);
  std::vector<ManifestRow> rows() const;
  // Rewrites manifest.csv from manifest.jsonl, sorted by sample_id.
  void write_summary() const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::set<std::string, std::less<>> ids_;
};

}  // namespace cadaug::reporter
