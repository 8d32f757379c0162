#include "cadaug/topology.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

namespace cadaug::topology {

using step::Entity;
using step::EntityGraph;
using step::EntityId;

namespace {

struct EdgeUse {
  EntityId edge = 0;
  bool sense = true;
};

struct ShellWalk {
  std::size_t faces = 0;
  bool holes = false;
  std::vector<EdgeUse> uses;
  std::set<EntityId> vertices;
};

const Entity* deref(const EntityGraph& g, const step::ArgList& args, std::size_t index) {
  const auto id = step::ref_at(args, index);
  return id ? g.find(*id) : nullptr;
}

// Faces, bounds and edge loops of one shell. Unresolvable references are
// skipped; the reference check reports them.
ShellWalk walk_shell(const EntityGraph& g, const step::ArgList& shell_args) {
  ShellWalk walk;
  for (EntityId face_id : step::refs_in_list_at(shell_args, 1)) {
    const Entity* face = g.find(face_id);
    if (!face) continue;
    bool face_sense = true;
    if (const auto* oriented = face->args_of("ORIENTED_FACE")) {
      face_sense = step::logical_at(*oriented, 3).value_or(true);
      face = deref(g, *oriented, 2);
      if (!face) continue;
    }
    const step::ArgList* face_args = face->args_of("ADVANCED_FACE");
    if (!face_args) face_args = face->args_of("FACE_SURFACE");
    if (!face_args) face_args = face->args_of("FACE");
    if (!face_args) continue;
    ++walk.faces;

    const auto bounds = step::refs_in_list_at(*face_args, 1);
    if (bounds.size() != 1) walk.holes = true;
    for (EntityId bound_id : bounds) {
      const Entity* bound = g.find(bound_id);
      if (!bound) continue;
      const step::ArgList* bound_args = bound->args_of("FACE_OUTER_BOUND");
      if (!bound_args) bound_args = bound->args_of("FACE_BOUND");
      if (!bound_args) continue;
      const bool bound_sense = step::logical_at(*bound_args, 2).value_or(true);
      const Entity* loop = deref(g, *bound_args, 1);
      if (!loop) continue;
      if (const auto* vloop = loop->args_of("VERTEX_LOOP")) {
        if (auto v = step::ref_at(*vloop, 1)) walk.vertices.insert(*v);
        continue;
      }
      const auto* loop_args = loop->args_of("EDGE_LOOP");
      if (!loop_args) continue;
      for (EntityId oe_id : step::refs_in_list_at(*loop_args, 1)) {
        const Entity* oe = g.find(oe_id);
        if (!oe) continue;
        const auto* oe_args = oe->args_of("ORIENTED_EDGE");
        if (!oe_args) continue;
        const auto edge_id = step::ref_at(*oe_args, 3);
        if (!edge_id) continue;
        const bool oe_sense = step::logical_at(*oe_args, 4).value_or(true);
        // A reversed bound or face traverses the loop backwards.
        const bool sense = oe_sense == bound_sense ? face_sense : !face_sense;
        walk.uses.push_back({*edge_id, sense});
        if (const Entity* edge = g.find(*edge_id)) {
          if (const auto* ec = edge->args_of("EDGE_CURVE")) {
            if (auto v = step::ref_at(*ec, 1)) walk.vertices.insert(*v);
            if (auto v = step::ref_at(*ec, 2)) walk.vertices.insert(*v);
          }
        }
      }
    }
  }
  return walk;
}

std::string id_list(const std::vector<EntityId>& ids) {
  std::string out;
  for (EntityId id : ids) {
    if (!out.empty()) out += ',';
    out += '#' + std::to_string(id);
  }
  return out;
}

}  // namespace

bool ValidationReport::failed_check(std::string_view check) const {
  return std::any_of(failures.begin(), failures.end(), [&](const CheckFailure& f) { return f.check == check; });
}

ValidationReport validate_structure(const step::StepFile& file, std::optional<bool> kernel_valid) {
  ValidationReport report;
  const EntityGraph& g = file.data;
  auto fail = [&](std::string_view check, std::vector<EntityId> ids, std::string message) {
    report.failures.push_back({std::string(check), std::move(ids), std::move(message)});
  };

  for (const auto& u : step::resolve_refs(file)) {
    fail(checks::kReferenceResolution, {u.from, u.missing},
         fmt::format("#{} references undefined entity #{}", u.from, u.missing));
  }

  std::vector<const Entity*> closed_shells;
  for (const auto& e : g.entities()) {
    if (e.has_keyword("OPEN_SHELL")) {
      fail(checks::kShellClosure, {e.id}, fmt::format("#{} is an OPEN_SHELL", e.id));
    } else if (e.has_keyword("CLOSED_SHELL")) {
      closed_shells.push_back(&e);
    }
    const step::ArgList* solid = e.args_of("MANIFOLD_SOLID_BREP");
    if (!solid) solid = e.args_of("BREP_WITH_VOIDS");
    if (solid) {
      const Entity* outer = deref(g, *solid, 1);
      if (outer && !outer->has_keyword("CLOSED_SHELL")) {
        fail(checks::kShellClosure, {e.id, outer->id},
             fmt::format("solid #{} is bounded by #{} ({}), not a CLOSED_SHELL", e.id, outer->id, outer->keyword()));
      }
    }
  }

  std::size_t total_faces = 0;
  std::vector<CheckFailure> orientation_failures;
  for (const Entity* shell : closed_shells) {
    const ShellWalk walk = walk_shell(g, *shell->args_of("CLOSED_SHELL"));
    total_faces += walk.faces;

    std::vector<EntityId> order;
    std::unordered_map<EntityId, std::vector<bool>> tally;
    for (const auto& use : walk.uses) {
      auto [it, inserted] = tally.try_emplace(use.edge);
      if (inserted) order.push_back(use.edge);
      it->second.push_back(use.sense);
    }
    for (EntityId edge : order) {
      const auto& senses = tally[edge];
      if (senses.size() != 2) {
        fail(checks::kEdgeManifold, {shell->id, edge},
             fmt::format("edge #{} in shell #{} is used {} time(s), expected 2", edge, shell->id, senses.size()));
      } else if (senses[0] == senses[1]) {
        orientation_failures.push_back(
            {std::string(checks::kOrientationConsistency), {shell->id, edge},
             fmt::format("edge #{} in shell #{} is traversed in the same direction by both uses", edge, shell->id)});
      }
    }

    if (!walk.holes && walk.faces > 0) {
      const long euler = static_cast<long>(walk.vertices.size()) - static_cast<long>(order.size()) +
                         static_cast<long>(walk.faces);
      if (euler != 2) {
        report.warnings.push_back(fmt::format("shell #{}: V - E + F = {} - {} + {} = {} (expected 2)", shell->id,
                                              walk.vertices.size(), order.size(), walk.faces, euler));
      }
    }
  }
  for (auto& f : orientation_failures) report.failures.push_back(std::move(f));

  if (closed_shells.empty()) {
    fail(checks::kNonEmpty, {}, "no CLOSED_SHELL in the model");
  } else if (total_faces < kMinFaces) {
    fail(checks::kNonEmpty, {}, fmt::format("closed shells hold {} face(s), expected at least {}", total_faces, kMinFaces));
  }

  if (kernel_valid && !*kernel_valid) {
    fail(checks::kKernelValidity, {}, "the CAD kernel reported the exported solid as invalid");
  }
  return report;
}

ValidationReport parse_failure_report(const std::string& message) {
  ValidationReport report;
  report.failures.push_back({std::string(checks::kStepParse), {}, message});
  return report;
}

std::string format_report(const ValidationReport& report) {
  std::string out = report.passed() ? "PASS\n" : "FAIL\n";
  for (const auto& f : report.failures) {
    out += fmt::format("[{}] {}", f.check, f.message);
    if (!f.entities.empty()) out += " (" + id_list(f.entities) + ")";
    out += '\n';
  }
  for (const auto& w : report.warnings) out += "warning: " + w + '\n';
  return out;
}

}  // namespace cadaug::topology
