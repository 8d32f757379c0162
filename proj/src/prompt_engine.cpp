#include "cadaug/prompt.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace cadaug::prompt {

namespace {

constexpr std::string_view kBracketPrefix =
    "Use Python CadQuery library to write a CAD program of a {noun} that is described as follows.";
constexpr std::string_view kBracketContext =
    "The shapes of the {noun} look smooth. The {noun} should conform to the curvature of the reference surface in "
    "the CAD program below. After the {noun} is created, the reference surface should be removed.";
constexpr std::string_view kBracketGuidance = "The shapes of the {noun} look smooth and organic.";
constexpr std::string_view kPostfix =
    "Make sure the generated CAD model is watertight solid. Please export the generated CAD model to output.stl "
    "file and output.step file. Please do not visualize it. Here is the document of CadQuery for your reference "
    "(https://cadquery.readthedocs.io/en/latest/index.html). Do not output explanation.";

std::string substitute_noun(std::string_view text, std::string_view noun) {
  std::string out;
  constexpr std::string_view key = "{noun}";
  std::size_t pos = 0;
  for (;;) {
    const std::size_t hit = text.find(key, pos);
    out.append(text.substr(pos, hit - pos));
    if (hit == std::string_view::npos) break;
    out.append(noun);
    pos = hit + key.size();
  }
  return out;
}

bool is_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// RFC 4180 style rows: quoted fields may hold delimiters, "" and newlines.
std::vector<std::vector<std::string>> split_rows(std::string_view text, char delim) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == delim) {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else if (c != '\r') {
      field.push_back(c);
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string default_id(std::size_t index) { return fmt::format("s{:04}", index + 1); }

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::Full:
      return "full";
    case Mode::MinusRT:
      return "minus-rt";
    case Mode::MinusR:
      return "minus-r";
  }
  return "unknown";
}

std::optional<Mode> parse_mode(std::string_view name) {
  for (Mode m : {Mode::Full, Mode::MinusRT, Mode::MinusR}) {
    if (mode_name(m) == name) return m;
  }
  return std::nullopt;
}

CategoryConfig CategoryConfig::bracket() {
  return {"bracket",
          "bracket",
          std::string(kBracketPrefix),
          std::string(kBracketContext),
          std::string(kBracketGuidance),
          std::string(kPostfix)};
}

CategoryConfig CategoryConfig::wheel() {
  CategoryConfig c = bracket();
  c.name = "wheel";
  c.noun = "car wheel";
  c.context =
      "The spokes of the {noun} look smooth. The spokes should conform to the curvature of the reference surface in "
      "the CAD program below. After the {noun} is created, the reference surface should be removed.";
  return c;
}

CategoryConfig category_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw PromptError("category config must be a JSON object");
  CategoryConfig c = CategoryConfig::bracket();
  c.noun = j.value("noun", c.noun);
  c.name = j.value("name", c.noun);
  c.prefix = j.value("prefix", c.prefix);
  c.context = j.value("context", c.context);
  c.guidance = j.value("guidance", c.guidance);
  c.postfix = j.value("postfix", c.postfix);
  return c;
}

nlohmann::json category_to_json(const CategoryConfig& c) {
  return {{"name", c.name},         {"noun", c.noun},        {"prefix", c.prefix},
          {"context", c.context},   {"guidance", c.guidance}, {"postfix", c.postfix}};
}

CategoryConfig load_category(const std::string& name_or_path) {
  if (name_or_path == "bracket") return CategoryConfig::bracket();
  if (name_or_path == "wheel") return CategoryConfig::wheel();
  std::ifstream in(name_or_path);
  if (!in) throw PromptError("unknown category '" + name_or_path + "' (not a built-in and not a readable file)");
  try {
    return category_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw PromptError("invalid category file " + name_or_path + ": " + e.what());
  }
}

std::string render_base(const PromptBundle& b) {
  std::string out = b.prefix;
  for (const std::string* part : {&b.description, &b.context, &b.postfix}) {
    if (part->empty()) continue;
    out += '\n';
    out += *part;
  }
  if (b.reference_script) {
    out += '\n';
    out += *b.reference_script;
  }
  return out;
}

PromptBundle compose(Mode mode, const CategoryConfig& category, std::string_view description,
                     std::optional<std::string> reference_script) {
  if (blank(description)) throw EmptyDescriptionError();
  if (mode == Mode::Full && (!reference_script || blank(*reference_script))) throw MissingReferenceError();

  PromptBundle b;
  b.mode = mode;
  b.prefix = substitute_noun(category.prefix, category.noun);
  b.description = trim(description);
  b.postfix = substitute_noun(category.postfix, category.noun);
  switch (mode) {
    case Mode::Full:
      b.context = substitute_noun(category.context, category.noun);
      b.reference_script = std::move(reference_script);
      break;
    case Mode::MinusR:
      b.context = substitute_noun(category.guidance, category.noun);
      break;
    case Mode::MinusRT:
      break;
  }
  b.rendered = render_base(b);
  return b;
}

std::string tail_truncate(std::string_view text, std::size_t budget) {
  if (text.size() <= budget) return std::string(text);
  std::size_t start = text.size() - budget;
  while (start < text.size() && is_continuation(text[start])) ++start;
  return std::string(kTruncationMarker) + std::string(text.substr(start));
}

std::string head_truncate(std::string_view text, std::size_t budget) {
  if (text.size() <= budget) return std::string(text);
  std::size_t end = budget;
  while (end > 0 && is_continuation(text[end])) --end;
  return std::string(text.substr(0, end)) + "\n" + std::string(kTruncationMarker);
}

PromptBundle repair_prompt(const PromptBundle& bundle, std::string_view prior_program, std::string_view error_report,
                           const RepairBudget& budget) {
  PromptBundle out = bundle;
  out.repair = Repair{head_truncate(prior_program, budget.program_bytes), tail_truncate(error_report, budget.error_bytes)};
  out.rendered = render_base(out) + '\n' + std::string(kRepairPreamble) + '\n' + out.repair->program + '\n' +
                 out.repair->error;
  return out;
}

std::vector<Description> parse_descriptions(std::string_view text, char delimiter) {
  std::vector<Description> out;
  if (delimiter == '\n') {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      std::string t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      out.push_back({default_id(out.size()), std::move(t)});
    }
    return out;
  }
  const auto rows = split_rows(text, delimiter);
  if (rows.empty()) return out;
  std::optional<std::size_t> desc_col;
  std::optional<std::size_t> id_col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    const std::string h = trim(rows[0][i]);
    if (h == "description") desc_col = i;
    if (h == "sample_id" || (h == "id" && !id_col)) id_col = i;
  }
  if (!desc_col) throw PromptError("descriptions table has no 'description' column");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (*desc_col >= row.size() || blank(row[*desc_col])) continue;
    std::string id = id_col && *id_col < row.size() ? trim(row[*id_col]) : std::string();
    if (id.empty()) id = default_id(out.size());
    out.push_back({std::move(id), trim(row[*desc_col])});
  }
  return out;
}

std::vector<Description> load_descriptions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PromptError("cannot read descriptions file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string ext = std::filesystem::path(path).extension().string();
  const char delim = ext == ".csv" ? ',' : ext == ".tsv" ? '\t' : '\n';
  return parse_descriptions(ss.str(), delim);
}

}  // namespace cadaug::prompt
