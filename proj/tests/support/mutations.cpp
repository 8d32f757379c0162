#include "mutations.hpp"

#include <algorithm>
#include <stdexcept>

namespace cadaug::testing {

using namespace cadaug::step;

namespace {

void remap_args(ArgList& args, const std::function<EntityId(EntityId)>& map) {
  for (auto& arg : args) {
    if (auto* r = std::get_if<Ref>(&arg.node)) {
      r->id = map(r->id);
    } else if (auto* l = std::get_if<List>(&arg.node)) {
      remap_args(l->items, map);
    } else if (auto* t = std::get_if<Typed>(&arg.node)) {
      remap_args(t->args, map);
    }
  }
}

Entity* first_with(std::vector<Entity>& es, std::string_view kw) {
  for (auto& e : es) {
    if (e.has_keyword(kw)) return &e;
  }
  throw std::runtime_error("no entity with keyword " + std::string(kw));
}

EntityId max_id(const std::vector<Entity>& es) {
  EntityId m = 0;
  for (const auto& e : es) m = std::max(m, e.id);
  return m;
}

}  // namespace

StepFile rebuild(const StepFile& file, const std::function<void(std::vector<Entity>&)>& edit) {
  std::vector<Entity> entities = file.data.entities();
  edit(entities);
  StepFile out;
  out.header = file.header;
  out.line_count = file.line_count;
  for (auto& e : entities) out.data.add(std::move(e));
  return out;
}

StepFile delete_face(const StepFile& file, std::size_t index) {
  return rebuild(file, [&](std::vector<Entity>& es) {
    Entity* shell = first_with(es, "CLOSED_SHELL");
    auto& faces = std::get<List>(shell->parts[0].args.at(1).node).items;
    const EntityId face = std::get<Ref>(faces.at(index).node).id;
    faces.erase(faces.begin() + static_cast<std::ptrdiff_t>(index));
    es.erase(std::remove_if(es.begin(), es.end(), [&](const Entity& e) { return e.id == face; }), es.end());
  });
}

StepFile duplicate_oriented_edge(const StepFile& file) {
  return rebuild(file, [&](std::vector<Entity>& es) {
    const EntityId fresh = max_id(es) + 1;
    Entity* loop = first_with(es, "EDGE_LOOP");
    auto& edges = std::get<List>(loop->parts[0].args.at(1).node).items;
    const EntityId original = std::get<Ref>(edges.front().node).id;
    edges.push_back(Arg{Ref{fresh}});
    const auto it = std::find_if(es.begin(), es.end(), [&](const Entity& e) { return e.id == original; });
    Entity copy = *it;
    copy.id = fresh;
    es.push_back(std::move(copy));
  });
}

StepFile flip_sense(const StepFile& file) {
  return rebuild(file, [&](std::vector<Entity>& es) {
    Entity* oe = first_with(es, "ORIENTED_EDGE");
    auto& flag = std::get<Enum>(oe->parts[0].args.at(4).node);
    flag.token = flag.token == "T" ? "F" : "T";
  });
}

StepFile open_shell(const StepFile& file) {
  return rebuild(file, [&](std::vector<Entity>& es) {
    for (auto& e : es) {
      for (auto& p : e.parts) {
        if (p.keyword == "CLOSED_SHELL") p.keyword = "OPEN_SHELL";
      }
    }
  });
}

StepFile add_dangling_ref(const StepFile& file, EntityId missing) {
  return rebuild(file, [&](std::vector<Entity>& es) {
    Entity e;
    e.id = max_id(es) + 1;
    e.parts.push_back({"PRODUCT_DEFINITION_SHAPE", {Arg{String{""}}, Arg{String{""}}, Arg{Ref{missing}}}});
    es.push_back(std::move(e));
  });
}

StepFile renumber(const StepFile& file, std::uint64_t scale, std::uint64_t offset) {
  const auto map = [&](EntityId id) { return id * scale + offset; };
  return rebuild(file, [&](std::vector<Entity>& es) {
    for (auto& e : es) {
      e.id = map(e.id);
      for (auto& p : e.parts) remap_args(p.args, map);
    }
    std::reverse(es.begin(), es.end());
  });
}

}  // namespace cadaug::testing
