// Reference-surface catalog: four height-field families sampled on a uniform
// U x V lattice, plus the CadQuery script text that rebuilds each surface as a
// spline-approximated face.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cadaug::surfaces {

enum class Family { Gaussian, Saddle, Wave, Ripple };

std::string_view family_name(Family family);
std::optional<Family> parse_family(std::string_view name);
const std::vector<Family>& all_families();

// Upper-case names as they appear in the script: U, V, SPAN plus
// CURV (saddle), H (gaussian), A and LAMBDA (wave), A, K and D (ripple).
using Params = std::map<std::string, double, std::less<>>;

std::vector<std::string_view> required_params(Family family);

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Row-major: row i follows u, column j follows v, matching the scripts.
class ControlNet {
 public:
  ControlNet() = default;
  ControlNet(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), points_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Point3& at(std::size_t i, std::size_t j) { return points_[i * cols_ + j]; }
  const Point3& at(std::size_t i, std::size_t j) const { return points_[i * cols_ + j]; }
  const std::vector<Point3>& points() const { return points_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Point3> points_;
};

struct SurfaceSpec {
  Family family = Family::Saddle;
  Params params;
  ControlNet net;
  std::string script_text;
};

class BadParamsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws BadParamsError when a parameter is missing, SPAN <= 0, or U / V is
// not an integer >= 2. Wave additionally needs LAMBDA > 0.
void check_params(Family family, const Params& params);

double height(Family family, const Params& params, double x, double y);
ControlNet make_net(Family family, const Params& params);

// Deterministic CadQuery program; numbers use the shortest round-trip form.
std::string emit_script(Family family, const Params& params);
inline std::string emit_script(const SurfaceSpec& spec) { return emit_script(spec.family, spec.params); }

SurfaceSpec make_spec(Family family, Params params);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Defaults bracket the two published reference scripts.
struct SamplingRanges {
  Range span{50.0, 300.0};
  std::vector<int> resolutions{50, 100, 300};
  Range saddle_curv{0.001, 0.01};
  Range gaussian_h{2.0, 15.0};
  Range wave_a{1.0, 8.0};
  // As a fraction of SPAN.
  Range wave_lambda{1.0 / 6.0, 0.5};
  Range ripple_a{1.0, 6.0};
  Range ripple_k{0.1, 0.5};
  Range ripple_d{0.0, 0.05};
};

// Same (family, count, seed, ranges) always yields the same list.
std::vector<SurfaceSpec> sample_specs(Family family, std::size_t count, std::uint64_t seed,
                                      const SamplingRanges& ranges = {});

// `<family>_<seed>_<index>`
std::string spec_file_stem(Family family, std::uint64_t seed, std::size_t index);

std::string format_number(double value);

}  // namespace cadaug::surfaces
