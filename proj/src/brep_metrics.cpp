#include "cadaug/metrics.hpp"

#include <algorithm>
#include <unordered_set>

namespace cadaug::metrics {

using step::Entity;
using step::EntityGraph;
using step::EntityId;

namespace {

using KeywordSet = std::set<std::string, std::less<>>;

constexpr int kMaxIndirection = 16;

bool any_keyword_in(const Entity& e, const KeywordSet& set) {
  return std::any_of(e.parts.begin(), e.parts.end(),
                     [&](const step::SimpleRecord& p) { return set.count(p.keyword) != 0; });
}

// Arguments of the first part whose keyword is in `set`.
const step::ArgList* args_for(const Entity& e, const KeywordSet& set) {
  for (const auto& p : e.parts) {
    if (set.count(p.keyword)) return &p.args;
  }
  return nullptr;
}

const Entity& resolve(const EntityGraph& graph, EntityId from, const step::ArgList& args, std::size_t index) {
  const auto target = step::ref_at(args, index);
  if (!target) throw UnresolvedGeometryError(from, 0);
  const Entity* e = graph.find(*target);
  if (!e) throw UnresolvedGeometryError(from, *target);
  return *e;
}

bool curve_is_bspline(const Entity& curve, const EntityGraph& graph, int depth) {
  if (any_keyword_in(curve, bspline_curve_keywords())) return true;
  if (const auto* trimmed = curve.args_of("TRIMMED_CURVE")) {
    if (depth >= kMaxIndirection) return false;
    return curve_is_bspline(resolve(graph, curve.id, *trimmed, 1), graph, depth + 1);
  }
  return false;
}

}  // namespace

UnresolvedGeometryError::UnresolvedGeometryError(EntityId from, EntityId missing)
    : MetricsError(missing == 0 ? "entity #" + std::to_string(from) + " has no geometry reference"
                                : "entity #" + std::to_string(from) + " references missing geometry #" +
                                      std::to_string(missing)) {}

const KeywordSet& face_keywords() {
  static const KeywordSet s{"ADVANCED_FACE", "FACE_SURFACE"};
  return s;
}

const KeywordSet& curve_keywords() {
  static const KeywordSet s{"LINE",
                            "CIRCLE",
                            "ELLIPSE",
                            "HYPERBOLA",
                            "PARABOLA",
                            "B_SPLINE_CURVE",
                            "B_SPLINE_CURVE_WITH_KNOTS",
                            "RATIONAL_B_SPLINE_CURVE",
                            "BEZIER_CURVE",
                            "QUASI_UNIFORM_CURVE",
                            "UNIFORM_CURVE",
                            "TRIMMED_CURVE",
                            "POLYLINE"};
  return s;
}

const KeywordSet& bspline_surface_keywords() {
  static const KeywordSet s{"B_SPLINE_SURFACE",      "B_SPLINE_SURFACE_WITH_KNOTS", "RATIONAL_B_SPLINE_SURFACE",
                            "BEZIER_SURFACE",        "QUASI_UNIFORM_SURFACE",       "UNIFORM_SURFACE"};
  return s;
}

const KeywordSet& bspline_curve_keywords() {
  static const KeywordSet s{"B_SPLINE_CURVE", "B_SPLINE_CURVE_WITH_KNOTS", "RATIONAL_B_SPLINE_CURVE",
                            "BEZIER_CURVE",   "QUASI_UNIFORM_CURVE",       "UNIFORM_CURVE"};
  return s;
}

const KeywordSet& curve_wrapper_keywords() {
  static const KeywordSet s{"SURFACE_CURVE", "SEAM_CURVE", "INTERSECTION_CURVE"};
  return s;
}

EntityClass classify_entity(const Entity& entity, const EntityGraph& graph) {
  if (const auto* face = args_for(entity, face_keywords())) {
    const Entity& surface = resolve(graph, entity.id, *face, 2);
    return {EntityKind::Face, any_keyword_in(surface, bspline_surface_keywords())};
  }
  if (any_keyword_in(entity, curve_keywords())) {
    return {EntityKind::Curve, curve_is_bspline(entity, graph, 0)};
  }
  return {};
}

const Entity& edge_basis_curve(const Entity& edge_curve, const EntityGraph& graph) {
  const auto* args = edge_curve.args_of("EDGE_CURVE");
  if (!args) throw MetricsError("entity #" + std::to_string(edge_curve.id) + " is not an EDGE_CURVE");
  const Entity* curve = &resolve(graph, edge_curve.id, *args, 3);
  for (int depth = 0; depth < kMaxIndirection; ++depth) {
    const auto* wrapped = args_for(*curve, curve_wrapper_keywords());
    if (!wrapped) break;
    curve = &resolve(graph, curve->id, *wrapped, 1);
  }
  return *curve;
}

double bspline_ratio(std::size_t f, std::size_t f_b, std::size_t e, std::size_t e_b) {
  if (f == 0 && e == 0) throw EmptyModelError();
  const double face_term = f == 0 ? 0.0 : static_cast<double>(f_b) / static_cast<double>(f);
  const double curve_term = e == 0 ? 0.0 : static_cast<double>(e_b) / static_cast<double>(e);
  return (face_term + curve_term) / 2.0;
}

BRepStats compute_stats(const step::StepFile& file) {
  BRepStats stats;
  stats.lines = file.line_count;
  std::unordered_set<EntityId> curves;
  for (const auto& entity : file.data.entities()) {
    if (args_for(entity, face_keywords())) {
      ++stats.f;
      if (classify_entity(entity, file.data).is_bspline) ++stats.f_b;
    }
    if (entity.has_keyword("EDGE_CURVE")) {
      const Entity& basis = edge_basis_curve(entity, file.data);
      if (curves.insert(basis.id).second) {
        ++stats.e;
        if (curve_is_bspline(basis, file.data, 0)) ++stats.e_b;
      }
    }
  }
  stats.beta = bspline_ratio(stats.f, stats.f_b, stats.e, stats.e_b);
  return stats;
}

}  // namespace cadaug::metrics
