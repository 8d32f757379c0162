// ISO 10303-21 ("Part 21") exchange files: tokenizer, parser, writer.
//
// The parser is schema-agnostic. Header records and DATA entities are kept as
// keyword + argument trees; numbers keep their exact source text so that a
// parse -> serialize -> parse cycle is structurally lossless.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace cadaug::step {

using EntityId = std::uint64_t;

struct Arg;
using ArgList = std::vector<Arg>;

struct Real {
  double value = 0.0;
  std::string text;
};
struct Integer {
  std::int64_t value = 0;
  std::string text;
};
// Raw bytes between the quotes with the '' escape already collapsed.
struct String {
  std::string value;
};
// `.TOKEN.` without the dots.
struct Enum {
  std::string token;
};
struct Ref {
  EntityId id = 0;
};
// `"0ABC"` hex binary literal, digits kept verbatim.
struct Binary {
  std::string digits;
};
struct Star {};
struct Dollar {};
struct List {
  ArgList items;
};
// Typed parameter such as LENGTH_MEASURE(1.E-07).
struct Typed {
  std::string keyword;
  ArgList args;
};

struct Arg {
  std::variant<Real, Integer, String, Enum, Ref, Binary, Star, Dollar, List, Typed> node;

  bool is_ref() const { return std::holds_alternative<Ref>(node); }
  const Ref* as_ref() const { return std::get_if<Ref>(&node); }
  const List* as_list() const { return std::get_if<List>(&node); }
  const Enum* as_enum() const { return std::get_if<Enum>(&node); }
  const String* as_string() const { return std::get_if<String>(&node); }
};

struct SimpleRecord {
  std::string keyword;
  ArgList args;
};

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Entity {
  EntityId id = 0;
  // One part for a simple entity, two or more for the external-mapping form.
  std::vector<SimpleRecord> parts;
  bool complex = false;
  Span source_span;

  const std::string& keyword() const { return parts.front().keyword; }
  bool has_keyword(std::string_view kw) const;
  // Arguments of the part carrying `kw`, or nullptr.
  const ArgList* args_of(std::string_view kw) const;
};

class EntityGraph {
 public:
  EntityGraph() = default;

  // Throws DuplicateIdError when the id is already present.
  void add(Entity entity);
  const Entity* find(EntityId id) const;
  bool contains(EntityId id) const { return index_.count(id) != 0; }
  std::size_t size() const { return entities_.size(); }
  bool empty() const { return entities_.empty(); }

  // Entities in source order.
  const std::vector<Entity>& entities() const { return entities_; }

 private:
  std::vector<Entity> entities_;
  std::unordered_map<EntityId, std::size_t> index_;
};

struct StepFile {
  std::vector<SimpleRecord> header;
  EntityGraph data;
  std::size_t line_count = 0;
};

struct UnresolvedRef {
  EntityId from = 0;
  EntityId missing = 0;
  bool operator==(const UnresolvedRef&) const = default;
};

class StepError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public StepError {
 public:
  SyntaxError(std::size_t position, const std::string& message);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class MissingSectionError : public StepError {
 public:
  explicit MissingSectionError(const std::string& section);
};

class DuplicateIdError : public StepError {
 public:
  explicit DuplicateIdError(EntityId id);
  EntityId id() const { return id_; }

 private:
  EntityId id_;
};

StepFile parse_step(std::string_view text);
StepFile read_step_file(const std::string& path);

std::string serialize_step(const StepFile& file);
std::string serialize_args(const ArgList& args);

// Every Ref target that is not defined in the graph, in source order.
std::vector<UnresolvedRef> resolve_refs(const StepFile& file);

// Non-whitespace-only lines, counted over the raw text.
std::size_t count_content_lines(std::string_view text);

// Structural equality: ids, keywords, argument trees. Spans are ignored and
// numbers compare by source text.
bool structurally_equal(const Arg& a, const Arg& b);
bool structurally_equal(const EntityGraph& a, const EntityGraph& b);

// Calls fn(ref_id) for every reference in the tree, depth first.
template <typename Fn>
void for_each_ref(const ArgList& args, Fn&& fn) {
  for (const auto& arg : args) {
    if (const auto* r = std::get_if<Ref>(&arg.node)) {
      fn(r->id);
    } else if (const auto* l = std::get_if<List>(&arg.node)) {
      for_each_ref(l->items, fn);
    } else if (const auto* t = std::get_if<Typed>(&arg.node)) {
      for_each_ref(t->args, fn);
    }
  }
}

// Reference at args[index], if that argument is a Ref.
std::optional<EntityId> ref_at(const ArgList& args, std::size_t index);
// Ref ids inside the list at args[index]; empty when not a list.
std::vector<EntityId> refs_in_list_at(const ArgList& args, std::size_t index);
// `.T.` / `.F.` at args[index].
std::optional<bool> logical_at(const ArgList& args, std::size_t index);

}  // namespace cadaug::step
