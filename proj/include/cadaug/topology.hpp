// Structure validation of a parsed B-rep: is every shell closed, is every
// edge shared by exactly two oppositely oriented uses, is there a solid at all.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cadaug/step.hpp"

namespace cadaug::topology {

namespace checks {
inline constexpr std::string_view kReferenceResolution = "reference_resolution";
inline constexpr std::string_view kShellClosure = "shell_closure";
inline constexpr std::string_view kEdgeManifold = "edge_manifold";
inline constexpr std::string_view kOrientationConsistency = "orientation_consistency";
inline constexpr std::string_view kNonEmpty = "non_empty";
inline constexpr std::string_view kKernelValidity = "kernel_validity";
inline constexpr std::string_view kStepParse = "step_parse";
}  // namespace checks

struct CheckFailure {
  std::string check;
  std::vector<step::EntityId> entities;
  std::string message;
};

struct ValidationReport {
  std::vector<CheckFailure> failures;
  // Advisory only; never affects the verdict.
  std::vector<std::string> warnings;

  bool passed() const { return failures.empty(); }
  bool failed_check(std::string_view check) const;
};

inline constexpr std::size_t kMinFaces = 4;

// Runs all checks in order and collects every failure. When the kernel
// reported a validity flag it must also be true.
ValidationReport validate_structure(const step::StepFile& file, std::optional<bool> kernel_valid = std::nullopt);

// Report for text that could not be parsed at all.
ValidationReport parse_failure_report(const std::string& message);

// "PASS" / "FAIL" followed by one line per failure: "[check] message (#ids)".
std::string format_report(const ValidationReport& report);

}  // namespace cadaug::topology
