#include "cadaug/surfaces.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

namespace cadaug::surfaces {

namespace {

double param(const Params& p, std::string_view name) {
  auto it = p.find(name);
  if (it == p.end()) throw BadParamsError("missing parameter " + std::string(name));
  return it->second;
}

std::size_t lattice_size(const Params& p, std::string_view name) {
  const double v = param(p, name);
  if (!(v >= 2.0) || std::floor(v) != v) {
    throw BadParamsError(std::string(name) + " must be an integer >= 2, got " + format_number(v));
  }
  return static_cast<std::size_t>(v);
}

// Shared lattice loop of every script; only the height line differs.
constexpr std::string_view kLatticeLoop = R"(
net = []
for i in range(U):
    u = i/(U-1);  x = (u-0.5)*SPAN
    row = []
    for j in range(V):
        v = j/(V-1);  y = (v-0.5)*SPAN
{height}
        row.append(cq.Vector(x, y, z))
    net.append(row)
)";

double draw(std::mt19937_64& rng, const Range& r, std::string_view what) {
  if (!(r.lo <= r.hi)) throw BadParamsError(fmt::format("empty sampling range for {}", what));
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

std::string_view family_name(Family family) {
  switch (family) {
    case Family::Gaussian:
      return "gaussian";
    case Family::Saddle:
      return "saddle";
    case Family::Wave:
      return "wave";
    case Family::Ripple:
      return "ripple";
  }
  return "unknown";
}

std::optional<Family> parse_family(std::string_view name) {
  for (Family f : all_families()) {
    if (family_name(f) == name) return f;
  }
  return std::nullopt;
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> families{Family::Gaussian, Family::Saddle, Family::Wave, Family::Ripple};
  return families;
}

std::vector<std::string_view> required_params(Family family) {
  switch (family) {
    case Family::Saddle:
      return {"U", "V", "SPAN", "CURV"};
    case Family::Gaussian:
      return {"U", "V", "SPAN", "H"};
    case Family::Wave:
      return {"U", "V", "SPAN", "A", "LAMBDA"};
    case Family::Ripple:
      return {"U", "V", "SPAN", "A", "K", "D"};
  }
  return {};
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void check_params(Family family, const Params& params) {
  for (auto name : required_params(family)) {
    const double v = param(params, name);
    if (!std::isfinite(v)) throw BadParamsError(std::string(name) + " is not finite");
  }
  lattice_size(params, "U");
  lattice_size(params, "V");
  if (!(param(params, "SPAN") > 0.0)) throw BadParamsError("SPAN must be positive");
  if (family == Family::Wave && !(param(params, "LAMBDA") > 0.0)) throw BadParamsError("LAMBDA must be positive");
}

double height(Family family, const Params& p, double x, double y) {
  switch (family) {
    case Family::Saddle:
      return param(p, "CURV") * (x * x - y * y);
    case Family::Gaussian: {
      const double s = param(p, "SPAN") / 3.0;
      const double r2 = (x * x + y * y) / (s * s);
      return param(p, "H") * std::exp(-r2);
    }
    case Family::Wave:
      return param(p, "A") * std::sin(2.0 * std::numbers::pi * x / param(p, "LAMBDA"));
    case Family::Ripple: {
      const double r = std::sqrt(x * x + y * y);
      return param(p, "A") * std::sin(param(p, "K") * r) * std::exp(-param(p, "D") * r);
    }
  }
  return 0.0;
}

ControlNet make_net(Family family, const Params& params) {
  check_params(family, params);
  const std::size_t rows = lattice_size(params, "U");
  const std::size_t cols = lattice_size(params, "V");
  const double span = param(params, "SPAN");
  ControlNet net(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(rows - 1);
    const double x = (u - 0.5) * span;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = static_cast<double>(j) / static_cast<double>(cols - 1);
      const double y = (v - 0.5) * span;
      net.at(i, j) = {x, y, height(family, params, x, y)};
    }
  }
  return net;
}

std::string emit_script(Family family, const Params& p) {
  check_params(family, p);
  const auto n = [&](std::string_view name) { return format_number(param(p, name)); };
  const std::string name(family_name(family));

  std::string constants;
  std::string height_lines;
  std::string build;
  switch (family) {
    case Family::Saddle:
      constants = fmt::format("U, V, SPAN, CURV = {}, {}, {}, {}", n("U"), n("V"), n("SPAN"), n("CURV"));
      height_lines = "        z = CURV*(x**2 - y**2)";
      build = "surf = cq.Face.makeSplineApprox(net)";
      break;
    case Family::Gaussian:
      constants = fmt::format("U, V, SPAN, H = {}, {}, {}, {}", n("U"), n("V"), n("SPAN"), n("H"));
      height_lines =
          "        r2 = (x**2 + y**2)/((SPAN/3)**2)\n"
          "        z = H * math.exp(-r2)                # Gaussian height";
      build = "surf = cq.Face.makeSplineApprox(net).thicken(2).translate((0,0,-1))";
      break;
    case Family::Wave:
      constants = fmt::format("U, V, SPAN, A, LAMBDA = {}, {}, {}, {}, {}", n("U"), n("V"), n("SPAN"), n("A"),
                              n("LAMBDA"));
      height_lines = "        z = A * math.sin(2*math.pi*x/LAMBDA)   # wave height";
      build = "surf = cq.Face.makeSplineApprox(net)";
      break;
    case Family::Ripple:
      constants = fmt::format("U, V, SPAN, A, K, D = {}, {}, {}, {}, {}, {}", n("U"), n("V"), n("SPAN"), n("A"),
                              n("K"), n("D"));
      height_lines =
          "        r = math.sqrt(x**2 + y**2)\n"
          "        z = A * math.sin(K*r) * math.exp(-D*r)   # damped ripple height";
      build = "surf = cq.Face.makeSplineApprox(net)";
      break;
  }
  return fmt::format("# {0}.py\nimport cadquery as cq, math\n{1}\n{2}\n{3}\ncq.exporters.export(surf, \"{0}.step\")\n",
                     name, constants, fmt::format(fmt::runtime(kLatticeLoop), fmt::arg("height", height_lines)), build);
}

SurfaceSpec make_spec(Family family, Params params) {
  SurfaceSpec spec;
  spec.family = family;
  spec.net = make_net(family, params);
  spec.script_text = emit_script(family, params);
  spec.params = std::move(params);
  return spec;
}

std::vector<SurfaceSpec> sample_specs(Family family, std::size_t count, std::uint64_t seed,
                                      const SamplingRanges& ranges) {
  if (count == 0) throw BadParamsError("count must be at least 1");
  if (ranges.resolutions.empty()) throw BadParamsError("empty resolution set");
  std::mt19937_64 rng(seed);
  std::vector<SurfaceSpec> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Params p;
    p["SPAN"] = draw(rng, ranges.span, "SPAN");
    const int res = ranges.resolutions[std::uniform_int_distribution<std::size_t>(0, ranges.resolutions.size() - 1)(rng)];
    p["U"] = res;
    p["V"] = res;
    switch (family) {
      case Family::Saddle:
        p["CURV"] = draw(rng, ranges.saddle_curv, "CURV");
        break;
      case Family::Gaussian:
        p["H"] = draw(rng, ranges.gaussian_h, "H");
        break;
      case Family::Wave:
        p["A"] = draw(rng, ranges.wave_a, "A");
        p["LAMBDA"] = draw(rng, ranges.wave_lambda, "LAMBDA") * p["SPAN"];
        break;
      case Family::Ripple:
        p["A"] = draw(rng, ranges.ripple_a, "A");
        p["K"] = draw(rng, ranges.ripple_k, "K");
        p["D"] = draw(rng, ranges.ripple_d, "D");
        break;
    }
    out.push_back(make_spec(family, std::move(p)));
  }
  return out;
}

std::string spec_file_stem(Family family, std::uint64_t seed, std::size_t index) {
  return fmt::format("{}_{}_{}", family_name(family), seed, index);
}

}  // namespace cadaug::surfaces
