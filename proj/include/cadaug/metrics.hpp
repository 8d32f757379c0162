// Per-object B-rep geometry metrics: face/curve counts, B-spline counts and
// the B-spline ratio beta = ((fb / f) + (eb / e)) / 2.

#pragma once

#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cadaug/step.hpp"

namespace cadaug::metrics {

enum class EntityKind { Face, Curve, Other };

struct EntityClass {
  EntityKind kind = EntityKind::Other;
  bool is_bspline = false;
  bool operator==(const EntityClass&) const = default;
};

struct BRepStats {
  std::size_t f = 0;
  std::size_t f_b = 0;
  std::size_t e = 0;
  std::size_t e_b = 0;
  std::size_t lines = 0;
  double beta = 0.0;
};

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnresolvedGeometryError : public MetricsError {
 public:
  UnresolvedGeometryError(step::EntityId from, step::EntityId missing);
};

class EmptyModelError : public MetricsError {
 public:
  EmptyModelError() : MetricsError("model has no faces and no curves") {}
};

const std::set<std::string, std::less<>>& face_keywords();
const std::set<std::string, std::less<>>& curve_keywords();
const std::set<std::string, std::less<>>& bspline_surface_keywords();
const std::set<std::string, std::less<>>& bspline_curve_keywords();
// SURFACE_CURVE, SEAM_CURVE, INTERSECTION_CURVE: edge geometry wrappers whose
// first argument after the name is the 3D curve.
const std::set<std::string, std::less<>>& curve_wrapper_keywords();

// Faces look through to their surface; TRIMMED_CURVE looks through to its
// basis curve. Needs the graph for that resolution.
EntityClass classify_entity(const step::Entity& entity, const step::EntityGraph& graph);

// The geometry entity an EDGE_CURVE counts as, after unwrapping
// SURFACE_CURVE-style wrappers. Throws UnresolvedGeometryError.
const step::Entity& edge_basis_curve(const step::Entity& edge_curve, const step::EntityGraph& graph);

// Ratio with the degenerate-denominator rule: a zero denominator contributes
// a zero term; both zero is EmptyModelError.
double bspline_ratio(std::size_t f, std::size_t f_b, std::size_t e, std::size_t e_b);

BRepStats compute_stats(const step::StepFile& file);

}  // namespace cadaug::metrics
