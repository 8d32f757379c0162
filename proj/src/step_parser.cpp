#include "cadaug/step.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace cadaug::step {

SyntaxError::SyntaxError(std::size_t position, const std::string& message)
    : StepError("syntax error at byte " + std::to_string(position) + ": " + message),
      position_(position) {}

MissingSectionError::MissingSectionError(const std::string& section)
    : StepError("missing " + section + " section") {}

DuplicateIdError::DuplicateIdError(EntityId id)
    : StepError("duplicate entity id #" + std::to_string(id)), id_(id) {}

bool Entity::has_keyword(std::string_view kw) const {
  return std::any_of(parts.begin(), parts.end(),
                     [&](const SimpleRecord& p) { return p.keyword == kw; });
}

const ArgList* Entity::args_of(std::string_view kw) const {
  for (const auto& p : parts) {
    if (p.keyword == kw) return &p.args;
  }
  return nullptr;
}

void EntityGraph::add(Entity entity) {
  const EntityId id = entity.id;
  if (!index_.emplace(id, entities_.size()).second) throw DuplicateIdError(id);
  entities_.push_back(std::move(entity));
}

const Entity* EntityGraph::find(EntityId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &entities_[it->second];
}

std::optional<EntityId> ref_at(const ArgList& args, std::size_t index) {
  if (index >= args.size()) return std::nullopt;
  if (const auto* r = args[index].as_ref()) return r->id;
  return std::nullopt;
}

std::vector<EntityId> refs_in_list_at(const ArgList& args, std::size_t index) {
  std::vector<EntityId> out;
  if (index >= args.size()) return out;
  const auto* list = args[index].as_list();
  if (!list) return out;
  for (const auto& item : list->items) {
    if (const auto* r = item.as_ref()) out.push_back(r->id);
  }
  return out;
}

std::optional<bool> logical_at(const ArgList& args, std::size_t index) {
  if (index >= args.size()) return std::nullopt;
  const auto* e = args[index].as_enum();
  if (!e) return std::nullopt;
  if (e->token == "T") return true;
  if (e->token == "F") return false;
  return std::nullopt;
}

namespace {

bool is_keyword_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '!';
}
bool is_keyword_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  StepFile parse() {
    StepFile file;
    skip_ws();
    expect_word("ISO-10303-21");
    expect(';');

    bool saw_header = false;
    bool saw_data = false;
    for (;;) {
      skip_ws();
      if (at_end()) throw SyntaxError(pos_, "unexpected end of input, expected END-ISO-10303-21");
      const std::size_t start = pos_;
      std::string word = read_word();
      if (word == "END-ISO-10303-21") {
        expect(';');
        break;
      }
      if (word == "HEADER") {
        expect(';');
        parse_header(file);
        saw_header = true;
      } else if (word == "DATA") {
        skip_ws();
        if (peek() == '(') {
          // Edition 3 data section parameters; not needed downstream.
          ArgList ignored;
          parse_param_list(ignored);
        }
        expect(';');
        parse_data(file);
        saw_data = true;
      } else {
        throw SyntaxError(start, "unexpected section keyword '" + word + "'");
      }
    }
    if (!saw_header) throw MissingSectionError("HEADER");
    if (!saw_data) throw MissingSectionError("DATA");
    file.line_count = count_content_lines(text_);
    return file;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void skip_ws() {
    while (!at_end()) {
      char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '*') {
        const std::size_t close = text_.find("*/", pos_ + 2);
        if (close == std::string_view::npos) throw SyntaxError(pos_, "unterminated comment");
        pos_ = close + 2;
      } else {
        break;
      }
    }
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) {
      throw SyntaxError(pos_, std::string("expected '") + c + "'" +
                                  (at_end() ? " before end of input" : ", found '" + std::string(1, peek()) + "'"));
    }
    ++pos_;
  }

  void expect_word(std::string_view word) {
    skip_ws();
    const std::size_t start = pos_;
    if (read_word() != word) throw SyntaxError(start, "expected '" + std::string(word) + "'");
  }

  std::string read_word() {
    const std::size_t start = pos_;
    if (!is_keyword_start(peek())) throw SyntaxError(pos_, "expected keyword");
    while (!at_end() && is_keyword_char(text_[pos_])) ++pos_;
    std::string word(text_.substr(start, pos_ - start));
    for (auto& c : word) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return word;
  }

  std::string read_keyword() {
    const std::size_t start = pos_;
    if (!is_keyword_start(peek())) throw SyntaxError(pos_, "expected keyword");
    ++pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    std::string kw(text_.substr(start, pos_ - start));
    for (auto& c : kw) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return kw;
  }

  void parse_header(StepFile& file) {
    for (;;) {
      skip_ws();
      const std::size_t start = pos_;
      std::string kw = read_keyword();
      if (kw == "ENDSEC") {
        expect(';');
        return;
      }
      if (at_end()) throw SyntaxError(start, "unterminated HEADER section");
      SimpleRecord rec{std::move(kw), {}};
      parse_param_list(rec.args);
      expect(';');
      file.header.push_back(std::move(rec));
    }
  }

  void parse_data(StepFile& file) {
    for (;;) {
      skip_ws();
      if (at_end()) throw SyntaxError(pos_, "unterminated DATA section");
      if (peek() != '#') {
        const std::size_t start = pos_;
        std::string kw = read_keyword();
        if (kw != "ENDSEC") throw SyntaxError(start, "expected entity instance or ENDSEC");
        expect(';');
        return;
      }
      file.data.add(parse_entity());
    }
  }

  Entity parse_entity() {
    Entity entity;
    entity.source_span.begin = pos_;
    ++pos_;  // '#'
    entity.id = read_id();
    expect('=');
    skip_ws();
    if (peek() == '(') {
      ++pos_;
      entity.complex = true;
      for (;;) {
        skip_ws();
        if (peek() == ')') {
          ++pos_;
          break;
        }
        SimpleRecord part{read_keyword(), {}};
        parse_param_list(part.args);
        entity.parts.push_back(std::move(part));
      }
      if (entity.parts.size() < 2) {
        throw SyntaxError(entity.source_span.begin, "complex entity needs at least two parts");
      }
    } else {
      SimpleRecord rec{read_keyword(), {}};
      parse_param_list(rec.args);
      entity.parts.push_back(std::move(rec));
    }
    expect(';');
    entity.source_span.end = pos_;
    return entity;
  }

  EntityId read_id() {
    const std::size_t start = pos_;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) throw SyntaxError(start, "expected entity id digits after '#'");
    EntityId id = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, id);
    if (ec != std::errc{} || id == 0) throw SyntaxError(start, "invalid entity id");
    return id;
  }

  void parse_param_list(ArgList& out) {
    expect('(');
    skip_ws();
    if (peek() == ')') {
      ++pos_;
      return;
    }
    for (;;) {
      out.push_back(parse_param());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == ')') {
        ++pos_;
        return;
      }
      throw SyntaxError(pos_, at_end() ? "unterminated parameter list" : "expected ',' or ')'");
    }
  }

  Arg parse_param() {
    skip_ws();
    const char c = peek();
    if (c == '$') {
      ++pos_;
      return Arg{Dollar{}};
    }
    if (c == '*') {
      ++pos_;
      return Arg{Star{}};
    }
    if (c == '#') {
      ++pos_;
      return Arg{Ref{read_id()}};
    }
    if (c == '\'') return Arg{parse_string()};
    if (c == '"') return Arg{parse_binary()};
    if (c == '(') {
      List list;
      parse_param_list(list.items);
      return Arg{std::move(list)};
    }
    if (c == '.' && pos_ + 1 < text_.size() && !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
      return Arg{parse_enum()};
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.') return parse_number();
    if (is_keyword_start(c)) {
      Typed typed{read_keyword(), {}};
      parse_param_list(typed.args);
      return Arg{std::move(typed)};
    }
    throw SyntaxError(pos_, at_end() ? "unexpected end of input in parameter" : "unexpected character '" + std::string(1, c) + "'");
  }

  String parse_string() {
    const std::size_t start = pos_;
    ++pos_;
    String s;
    for (;;) {
      if (at_end()) throw SyntaxError(start, "unterminated string");
      const char c = text_[pos_++];
      if (c == '\'') {
        if (peek() == '\'') {
          s.value.push_back('\'');
          ++pos_;
          continue;
        }
        return s;
      }
      s.value.push_back(c);
    }
  }

  Binary parse_binary() {
    const std::size_t start = pos_;
    ++pos_;
    Binary b;
    while (!at_end() && text_[pos_] != '"') {
      const char c = text_[pos_++];
      if (!std::isxdigit(static_cast<unsigned char>(c))) throw SyntaxError(pos_ - 1, "invalid binary digit");
      b.digits.push_back(c);
    }
    if (at_end()) throw SyntaxError(start, "unterminated binary literal");
    ++pos_;
    return b;
  }

  Enum parse_enum() {
    const std::size_t start = pos_;
    ++pos_;
    Enum e;
    while (!at_end() && text_[pos_] != '.') {
      const char c = text_[pos_++];
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
        throw SyntaxError(pos_ - 1, "invalid character in enumeration");
      }
      e.token.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    if (at_end() || e.token.empty()) throw SyntaxError(start, "malformed enumeration");
    ++pos_;
    return e;
  }

  Arg parse_number() {
    const std::size_t start = pos_;
    if (peek() == '+' || peek() == '-') ++pos_;
    bool digits = false;
    bool real = false;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
      digits = true;
    }
    if (peek() == '.') {
      real = true;
      ++pos_;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        digits = true;
      }
    }
    if (!digits) throw SyntaxError(start, "malformed number");
    if (peek() == 'E' || peek() == 'e') {
      real = true;
      ++pos_;
      if (peek() == '+' || peek() == '-') ++pos_;
      const std::size_t exp_start = pos_;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (exp_start == pos_) throw SyntaxError(start, "malformed exponent");
    }
    std::string token(text_.substr(start, pos_ - start));
    // from_chars rejects a leading '+'.
    const char* first = token.data() + (token.front() == '+' ? 1 : 0);
    const char* last = token.data() + token.size();
    if (real) {
      Real r{0.0, token};
      auto [ptr, ec] = std::from_chars(first, last, r.value);
      if (ec != std::errc{} && ec != std::errc::result_out_of_range) throw SyntaxError(start, "invalid real");
      return Arg{std::move(r)};
    }
    Integer i{0, token};
    auto [ptr, ec] = std::from_chars(first, last, i.value);
    if (ec != std::errc{}) throw SyntaxError(start, "integer out of range");
    return Arg{std::move(i)};
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void write_args(std::string& out, const ArgList& args);

void write_arg(std::string& out, const Arg& arg) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Real> || std::is_same_v<T, Integer>) {
          out += n.text;
        } else if constexpr (std::is_same_v<T, String>) {
          out.push_back('\'');
          for (char c : n.value) {
            if (c == '\'') out.push_back('\'');
            out.push_back(c);
          }
          out.push_back('\'');
        } else if constexpr (std::is_same_v<T, Enum>) {
          out += '.' + n.token + '.';
        } else if constexpr (std::is_same_v<T, Ref>) {
          out += '#' + std::to_string(n.id);
        } else if constexpr (std::is_same_v<T, Binary>) {
          out += '"' + n.digits + '"';
        } else if constexpr (std::is_same_v<T, Star>) {
          out.push_back('*');
        } else if constexpr (std::is_same_v<T, Dollar>) {
          out.push_back('$');
        } else if constexpr (std::is_same_v<T, List>) {
          write_args(out, n.items);
        } else if constexpr (std::is_same_v<T, Typed>) {
          out += n.keyword;
          write_args(out, n.args);
        }
      },
      arg.node);
}

void write_args(std::string& out, const ArgList& args) {
  out.push_back('(');
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out.push_back(',');
    write_arg(out, args[i]);
  }
  out.push_back(')');
}

bool equal_lists(const ArgList& a, const ArgList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!structurally_equal(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace

StepFile parse_step(std::string_view text) { return Parser(text).parse(); }

StepFile read_step_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StepError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_step(buf.str());
}

std::string serialize_args(const ArgList& args) {
  std::string out;
  write_args(out, args);
  return out;
}

std::string serialize_step(const StepFile& file) {
  std::string out = "ISO-10303-21;\nHEADER;\n";
  for (const auto& rec : file.header) {
    out += rec.keyword;
    write_args(out, rec.args);
    out += ";\n";
  }
  out += "ENDSEC;\nDATA;\n";
  for (const auto& e : file.data.entities()) {
    out += '#' + std::to_string(e.id) + '=';
    if (e.complex) out.push_back('(');
    for (const auto& part : e.parts) {
      out += part.keyword;
      write_args(out, part.args);
    }
    if (e.complex) out.push_back(')');
    out += ";\n";
  }
  out += "ENDSEC;\nEND-ISO-10303-21;\n";
  return out;
}

std::vector<UnresolvedRef> resolve_refs(const StepFile& file) {
  std::vector<UnresolvedRef> out;
  std::set<std::pair<EntityId, EntityId>> seen;
  for (const auto& e : file.data.entities()) {
    for (const auto& part : e.parts) {
      for_each_ref(part.args, [&](EntityId target) {
        if (!file.data.contains(target) && seen.emplace(e.id, target).second) {
          out.push_back({e.id, target});
        }
      });
    }
  }
  return out;
}

std::size_t count_content_lines(std::string_view text) {
  std::size_t count = 0;
  bool content = false;
  for (char c : text) {
    if (c == '\n') {
      count += content ? 1 : 0;
      content = false;
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      content = true;
    }
  }
  return count + (content ? 1 : 0);
}

bool structurally_equal(const Arg& a, const Arg& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Real> || std::is_same_v<T, Integer>) {
          return x.text == y.text;
        } else if constexpr (std::is_same_v<T, String>) {
          return x.value == y.value;
        } else if constexpr (std::is_same_v<T, Enum>) {
          return x.token == y.token;
        } else if constexpr (std::is_same_v<T, Ref>) {
          return x.id == y.id;
        } else if constexpr (std::is_same_v<T, Binary>) {
          return x.digits == y.digits;
        } else if constexpr (std::is_same_v<T, List>) {
          return equal_lists(x.items, y.items);
        } else if constexpr (std::is_same_v<T, Typed>) {
          return x.keyword == y.keyword && equal_lists(x.args, y.args);
        } else {
          return true;
        }
      },
      a.node);
}

bool structurally_equal(const EntityGraph& a, const EntityGraph& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entities()[i];
    const auto& y = b.entities()[i];
    if (x.id != y.id || x.complex != y.complex || x.parts.size() != y.parts.size()) return false;
    for (std::size_t p = 0; p < x.parts.size(); ++p) {
      if (x.parts[p].keyword != y.parts[p].keyword) return false;
      if (!equal_lists(x.parts[p].args, y.parts[p].args)) return false;
    }
  }
  return true;
}

}  // namespace cadaug::step
