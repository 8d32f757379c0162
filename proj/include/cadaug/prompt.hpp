// Design-procedure prompts: prefix, design description, design context and
// postfix, followed by the reference-surface program in full mode. Repair
// prompts append the failed program and its error text.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cadaug::prompt {

enum class Mode {
  Full,     // context + reference program
  MinusRT,  // no context, no reference program
  MinusR,   // context replaced by a one-line shape guidance, no reference program
};

std::string_view mode_name(Mode mode);
std::optional<Mode> parse_mode(std::string_view name);

// Text templates for one design target. `{noun}` is substituted on compose.
struct CategoryConfig {
  std::string name;
  std::string noun;
  std::string prefix;
  std::string context;
  std::string guidance;
  std::string postfix;

  static CategoryConfig bracket();
  static CategoryConfig wheel();
};

// Missing keys fall back to the bracket texts; `name` defaults to `noun`.
CategoryConfig category_from_json(const nlohmann::json& j);
nlohmann::json category_to_json(const CategoryConfig& c);
// Built-in name ("bracket", "wheel") or path to a JSON file holding one category.
CategoryConfig load_category(const std::string& name_or_path);

struct Repair {
  std::string program;
  std::string error;
};

struct PromptBundle {
  Mode mode = Mode::Full;
  std::string prefix;
  std::string description;
  std::string context;  // empty in MinusRT
  std::string postfix;
  std::optional<std::string> reference_script;
  std::optional<Repair> repair;
  std::string rendered;
};

class PromptError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class MissingReferenceError : public PromptError {
 public:
  MissingReferenceError() : PromptError("full mode needs a reference-surface program") {}
};
class EmptyDescriptionError : public PromptError {
 public:
  EmptyDescriptionError() : PromptError("design description is empty") {}
};

inline constexpr std::string_view kRepairPreamble =
    "The previous program failed. Fix the errors and output the complete corrected program.";
inline constexpr std::string_view kTruncationMarker = "[...truncated...]\n";

struct RepairBudget {
  std::size_t error_bytes = 4096;
  std::size_t program_bytes = 65536;
};

PromptBundle compose(Mode mode, const CategoryConfig& category, std::string_view description,
                     std::optional<std::string> reference_script = std::nullopt);

// Parts joined by newlines, without any repair section.
std::string render_base(const PromptBundle& bundle);

// Replaces any earlier repair section, so the prompt never grows past
// base + preamble + program budget + error budget.
PromptBundle repair_prompt(const PromptBundle& bundle, std::string_view prior_program, std::string_view error_report,
                           const RepairBudget& budget = {});

// Last `budget` bytes, moved forward to a UTF-8 boundary; marked when cut.
std::string tail_truncate(std::string_view text, std::size_t budget);
// First `budget` bytes, moved back to a UTF-8 boundary; marked when cut.
std::string head_truncate(std::string_view text, std::size_t budget);

struct Description {
  std::string id;
  std::string text;
};

// `.csv` / `.tsv`: header row with a `description` column and optional
// `sample_id` or `id` column. Anything else: one description per non-blank
// line, `#` lines skipped. Ids default to `s0001`, `s0002`, ...
std::vector<Description> load_descriptions(const std::string& path);
std::vector<Description> parse_descriptions(std::string_view text, char delimiter);

}  // namespace cadaug::prompt
