#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cadaug/surfaces.hpp"

using namespace cadaug::surfaces;

namespace {

Params saddle_b() { return {{"U", 300}, {"V", 300}, {"SPAN", 50}, {"CURV", 0.004}}; }
Params gaussian_b() { return {{"U", 100}, {"V", 100}, {"SPAN", 100}, {"H", 7}}; }

std::vector<std::string> lines_trimmed(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line.erase(line.find_last_not_of(" \t") + 1);
    out.push_back(line);
  }
  return out;
}

// The published saddle reference script, verbatim.
constexpr const char* kPublishedSaddle = R"(# saddle.py
import cadquery as cq, math
U, V, SPAN, CURV = 300, 300, 50, 0.004

net = []
for i in range(U):
    u = i/(U-1);  x = (u-0.5)*SPAN
    row = []
    for j in range(V):
        v = j/(V-1);  y = (v-0.5)*SPAN
        z = CURV*(x**2 - y**2)        
        row.append(cq.Vector(x, y, z))
    net.append(row)

surf = cq.Face.makeSplineApprox(net)
cq.exporters.export(surf, "saddle.step")
)";

}  // namespace

TEST(SurfaceNet, SaddleCornerValue) {
  // 0.004 * 25^2
  EXPECT_NEAR(height(Family::Saddle, saddle_b(), 25.0, 0.0), 2.5, 1e-12);
  Params p = saddle_b();
  p["U"] = 301;
  p["V"] = 301;
  const auto net = make_net(Family::Saddle, p);
  EXPECT_EQ(net.at(300, 150).x, 25.0);
  EXPECT_EQ(net.at(300, 150).y, 0.0);
  EXPECT_NEAR(net.at(300, 150).z, 2.5, 1e-12);
}

TEST(SurfaceNet, GaussianCenterIsExactlyH) {
  EXPECT_EQ(height(Family::Gaussian, gaussian_b(), 0.0, 0.0), 7.0);
  for (double span : {1.0, 37.5, 100.0, 1e4}) {
    Params p{{"U", 101}, {"V", 101}, {"SPAN", span}, {"H", 7}};
    EXPECT_EQ(make_net(Family::Gaussian, p).at(50, 50).z, 7.0) << span;
  }
}

TEST(SurfaceNet, LatticeCoordinates) {
  const auto net = make_net(Family::Gaussian, gaussian_b());
  ASSERT_EQ(net.rows(), 100u);
  ASSERT_EQ(net.cols(), 100u);
  EXPECT_EQ(net.at(0, 0).x, -50.0);
  EXPECT_EQ(net.at(99, 99).y, 50.0);
  for (const auto& p : net.points()) {
    EXPECT_LE(std::abs(p.x), 50.0);
    EXPECT_LE(std::abs(p.y), 50.0);
  }
}

TEST(SurfaceNet, SaddleAntisymmetryAndCancellation) {
  for (auto [res, curv, span] : {std::tuple{300, 0.004, 50.0}, {51, 0.01, 300.0}, {2, 0.001, 77.0}}) {
    Params p{{"U", double(res)}, {"V", double(res)}, {"SPAN", span}, {"CURV", curv}};
    const auto net = make_net(Family::Saddle, p);
    double sum = 0.0;
    double bound = curv * (span / 2) * (span / 2);
    for (int i = 0; i < res; ++i) {
      for (int j = 0; j < res; ++j) {
        EXPECT_EQ(net.at(i, j).z, -net.at(j, i).z);
        EXPECT_LE(std::abs(net.at(i, j).z), bound * (1 + 1e-15));
        sum += net.at(i, j).z;
      }
    }
    EXPECT_LE(std::abs(sum), 1e-9 * curv * span * span * res * res);
  }
}

TEST(SurfaceNet, GaussianRadialSymmetryAndPeak) {
  Params p{{"U", 61}, {"V", 61}, {"SPAN", 90}, {"H", 4.5}};
  const auto net = make_net(Family::Gaussian, p);
  const std::size_t n = 61;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double z = net.at(i, j).z;
      EXPECT_NEAR(z, net.at(n - 1 - i, n - 1 - j).z, 1e-12);
      EXPECT_EQ(z, net.at(j, i).z);
      EXPECT_LE(z, net.at(30, 30).z);
      EXPECT_LE(z, 4.5);
    }
  }
}

TEST(SurfaceNet, WaveAndRippleBounds) {
  const auto wave = make_net(Family::Wave, {{"U", 40}, {"V", 40}, {"SPAN", 60}, {"A", 3}, {"LAMBDA", 17}});
  const auto ripple = make_net(Family::Ripple, {{"U", 40}, {"V", 40}, {"SPAN", 60}, {"A", 2}, {"K", 0.3}, {"D", 0.02}});
  for (const auto& p : wave.points()) EXPECT_LE(std::abs(p.z), 3.0);
  for (const auto& p : ripple.points()) EXPECT_LE(std::abs(p.z), 2.0);
  // wave varies along x only
  EXPECT_EQ(wave.at(7, 0).z, wave.at(7, 39).z);
}

TEST(SurfaceNet, BadParams) {
  EXPECT_THROW(make_net(Family::Saddle, {{"U", 3}, {"V", 3}, {"SPAN", 10}}), BadParamsError);
  EXPECT_THROW(make_net(Family::Saddle, {{"U", 3}, {"V", 3}, {"SPAN", 0}, {"CURV", 1}}), BadParamsError);
  EXPECT_THROW(make_net(Family::Saddle, {{"U", 1}, {"V", 3}, {"SPAN", 5}, {"CURV", 1}}), BadParamsError);
  EXPECT_THROW(make_net(Family::Saddle, {{"U", 2.5}, {"V", 3}, {"SPAN", 5}, {"CURV", 1}}), BadParamsError);
  EXPECT_THROW(make_net(Family::Wave, {{"U", 3}, {"V", 3}, {"SPAN", 5}, {"A", 1}, {"LAMBDA", 0}}), BadParamsError);
}

TEST(SurfaceScript, PublishedSaddleConstants) {
  const std::string script = emit_script(Family::Saddle, saddle_b());
  EXPECT_NE(script.find("U, V, SPAN, CURV = 300, 300, 50, 0.004"), std::string::npos);
  // identical to the published program up to trailing whitespace
  EXPECT_EQ(lines_trimmed(script), lines_trimmed(kPublishedSaddle));
}

TEST(SurfaceScript, PublishedGaussianConstants) {
  const std::string script = emit_script(Family::Gaussian, gaussian_b());
  EXPECT_NE(script.find("U, V, SPAN, H = 100, 100, 100, 7"), std::string::npos);
  EXPECT_NE(script.find(".thicken(2)"), std::string::npos);
  EXPECT_NE(script.find("z = H * math.exp(-r2)"), std::string::npos);
  EXPECT_NE(script.find("cq.exporters.export(surf, \"gaussian.step\")"), std::string::npos);
}

TEST(SurfaceScript, Deterministic) {
  for (Family f : all_families()) {
    const auto specs = sample_specs(f, 2, 99);
    EXPECT_EQ(emit_script(specs[0]), emit_script(specs[0]));
    EXPECT_EQ(specs[0].script_text, emit_script(specs[0].family, specs[0].params));
    EXPECT_NE(specs[0].script_text, specs[1].script_text);
  }
}

TEST(SurfaceSampling, SeededDeterminism) {
  const auto a = sample_specs(Family::Saddle, 3, 42);
  const auto b = sample_specs(Family::Saddle, 3, 42);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].params, b[i].params);
    EXPECT_EQ(a[i].script_text, b[i].script_text);
  }
  EXPECT_NE(sample_specs(Family::Saddle, 1, 43)[0].params, a[0].params);
}

TEST(SurfaceSampling, GaussianHeightsInRange) {
  SamplingRanges r;
  r.resolutions = {50};
  const auto specs = sample_specs(Family::Gaussian, 100, 7, r);
  ASSERT_EQ(specs.size(), 100u);
  for (const auto& s : specs) {
    EXPECT_GE(s.params.at("H"), 2.0);
    EXPECT_LE(s.params.at("H"), 15.0);
    EXPECT_GE(s.params.at("SPAN"), 50.0);
    EXPECT_LE(s.params.at("SPAN"), 300.0);
  }
}

TEST(SurfaceSampling, DefaultResolutionsAndRanges) {
  for (Family f : all_families()) {
    for (const auto& s : sample_specs(f, 12, 5)) {
      const double u = s.params.at("U");
      EXPECT_TRUE(u == 50 || u == 100 || u == 300);
      EXPECT_EQ(s.params.at("V"), u);
      EXPECT_EQ(s.net.rows(), static_cast<std::size_t>(u));
      if (f == Family::Saddle) {
        EXPECT_GE(s.params.at("CURV"), 0.001);
        EXPECT_LE(s.params.at("CURV"), 0.01);
      }
      if (f == Family::Wave) {
        EXPECT_GE(s.params.at("LAMBDA"), s.params.at("SPAN") / 6 - 1e-9);
        EXPECT_LE(s.params.at("LAMBDA"), s.params.at("SPAN") / 2 + 1e-9);
      }
    }
  }
}

TEST(SurfaceSampling, ZeroAmplitudeWaveIsFlat) {
  SamplingRanges r;
  r.wave_a = {0.0, 0.0};
  r.resolutions = {50};
  const auto specs = sample_specs(Family::Wave, 1, 3, r);
  for (const auto& p : specs[0].net.points()) EXPECT_EQ(p.z, 0.0);
}

TEST(SurfaceSampling, EmptyRangesRejected) {
  SamplingRanges r;
  r.saddle_curv = {0.5, 0.1};
  EXPECT_THROW(sample_specs(Family::Saddle, 1, 1, r), BadParamsError);
  SamplingRanges none;
  none.resolutions.clear();
  EXPECT_THROW(sample_specs(Family::Saddle, 1, 1, none), BadParamsError);
  EXPECT_THROW(sample_specs(Family::Saddle, 0, 1), BadParamsError);
}

TEST(SurfaceFamilies, NamesRoundTrip) {
  for (Family f : all_families()) EXPECT_EQ(parse_family(family_name(f)), f);
  EXPECT_FALSE(parse_family("torus"));
  EXPECT_EQ(spec_file_stem(Family::Saddle, 42, 2), "saddle_42_2");
}
