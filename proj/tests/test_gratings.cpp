#include <gtest/gtest.h>

#include "lowdose/config.hpp"
#include "lowdose/experiment.hpp"

using namespace lowdose;

namespace {

const GridSpec kGrid{1024, 1024, 2.5e-9};

std::size_t count_components(const RealMap& m) {
  std::vector<int> seen(m.size(), 0);
  std::size_t n = 0;
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (m[start] == 0.0 || seen[start])
      continue;
    ++n;
    std::vector<std::size_t> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t x = i % m.nx(), y = i / m.nx();
      const std::size_t nb[4] = {x > 0 ? i - 1 : i, x + 1 < m.nx() ? i + 1 : i, y > 0 ? i - m.nx() : i,
                                 y + 1 < m.ny() ? i + m.nx() : i};
      for (std::size_t j : nb)
        if (m[j] != 0.0 && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
    }
  }
  return n;
}

} // namespace

TEST(GratingEquation, DirectQuotient) {
  EXPECT_NEAR(1e3 * grating_equation(electron_wavelength(149.0), 100e-9), 1.00465, 1e-5);
  EXPECT_THROW(grating_equation(100e-9, 100e-9), GeometryError);
  EXPECT_THROW(grating_equation(-1.0, 100e-9), DomainError);
}

TEST(Mask, NoHolesIsOpaque) {
  GratingSpec s;
  s.rows = 0;
  s.cols = 0;
  EXPECT_EQ(open_fraction(build_grating_mask(s, GridSpec{256, 256, 2.5e-9})), 0.0);
}

TEST(Mask, SingleHoleArea) {
  GratingSpec s;
  s.rows = s.cols = 1;
  s.hole_diameter = 40e-9;
  const GridSpec g{256, 256, 1e-9};
  const double expect = M_PI * 20e-9 * 20e-9 / (g.width() * g.width());
  EXPECT_NEAR(open_fraction(build_grating_mask(s, g)) / expect, 1.0, 0.05);
}

TEST(Mask, DefaultIsSixteenDisjointHoles) {
  const auto m = build_grating_mask(GratingSpec{}, GridSpec{256, 256, 2.5e-9});
  EXPECT_EQ(count_components(m), 16u);
  // pitch: hole centres 40 px apart along x through the row nearest the axis
  std::vector<std::size_t> starts;
  const std::size_t row = 128 + 20;
  for (std::size_t ix = 1; ix < 256; ++ix)
    if (m(ix, row) == 1.0 && m(ix - 1, row) == 0.0)
      starts.push_back(ix);
  ASSERT_EQ(starts.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i)
    EXPECT_NEAR(static_cast<double>(starts[i] - starts[i - 1]), 40.0, 1.0);
}

TEST(Mask, ValidatesSpec) {
  GratingSpec s;
  s.hole_diameter = 150e-9;
  EXPECT_THROW(build_grating_mask(s, kGrid), DomainError);
  GratingSpec two;
  two.n_gratings = 2;
  two.separation = 200e-9;
  EXPECT_THROW(two.validate(), DomainError);
  EXPECT_THROW(build_grating_mask(GratingSpec{}, GridSpec{64, 64, 2.5e-9}), GeometryError);
  EXPECT_THROW(build_grating_mask(GratingSpec{}, GridSpec{1024, 1024, 10e-9}), GeometryError);
}

TEST(Peaks, ThreeDeltaFixtureGivesExactAngle) {
  const ProjectionGeometry geom;
  const GridSpec screen{512, 64, 2e-6};
  const double delta = 41.0;
  RealMap m(screen, 0.0);
  for (std::size_t iy = 0; iy < screen.ny; ++iy) {
    m(256, iy) = 2.0;
    m(256 - 41, iy) = 1.0;
    m(256 + 41, iy) = 1.0;
  }
  const auto r = extract_first_order_angle(ScreenDistribution(m, 1.0), GratingSpec{}, geom);
  ASSERT_FALSE(r.merged);
  EXPECT_NEAR(r.angle_mrad, 1e3 * delta * screen.pixel_size / geom.element_to_screen(), 1e-12);
  EXPECT_NEAR(r.asymmetry_px, 0.0, 1e-9);
  EXPECT_NEAR(r.zeroth_px.at(0), 256.0, 1e-9);
}

TEST(Peaks, FewerThanThreePeaksIsMerged) {
  RealMap m(GridSpec{128, 8, 1e-6}, 0.0);
  for (std::size_t iy = 0; iy < 8; ++iy) {
    m(60, iy) = 1.0;
    m(70, iy) = 1.0;
  }
  EXPECT_TRUE(extract_first_order_angle(ScreenDistribution(m, 1.0), GratingSpec{}, ProjectionGeometry{}).merged);
}

TEST(Pattern, SingleHoleHasOneLobe) {
  GratingSpec s;
  s.rows = s.cols = 1;
  s.hole_diameter = 60e-9;
  const auto d = simulate_pattern(s, ProjectionGeometry{}, 149.0, kGrid);
  EXPECT_EQ(find_peaks(dispersion_profile(d.intensity())).size(), 1u);
}

TEST(Pattern, DefaultAt149eVShowsThreeSymmetricSpots) {
  const GratingSpec s;
  const ProjectionGeometry geom;
  const auto d = simulate_pattern(s, geom, 149.0, kGrid);
  EXPECT_GT(d.detect_prob(), 0.0);
  EXPECT_LT(d.detect_prob(), 1.0);
  const auto r = extract_first_order_angle(d, s, geom);
  ASSERT_FALSE(r.merged);
  EXPECT_GE(r.peaks_px.size(), 3u);
  EXPECT_LE(r.asymmetry_px, 1.0);
  EXPECT_NEAR(r.zeroth_px.at(0), projected_pixel(0.0, geom, Illumination::PointSource, d.grid()), 1.0);
}

TEST(Pattern, PlaneWaveControlMatchesGratingEquation) {
  const GratingSpec s;
  const ProjectionGeometry geom;
  const double lambda = electron_wavelength(149.0);
  const auto d = simulate_pattern(s, geom, 149.0, kGrid, Illumination::Plane);
  const auto r = extract_first_order_angle(d, s, geom, Illumination::Plane);
  ASSERT_FALSE(r.merged);
  EXPECT_NEAR(r.angle_mrad / (1e3 * lambda / s.slit_spacing), 1.0, 0.10);
  EXPECT_LE(r.asymmetry_px, 1.0);
}

TEST(Pattern, PlaneWaveAngleIsLinearInWavelength) {
  ExperimentConfig cfg;
  cfg.illumination = Illumination::Plane;
  const auto sweep = run_grating_sweep(cfg);
  ASSERT_TRUE(sweep.fit.has_value());
  for (const auto& row : sweep.rows)
    EXPECT_FALSE(row.angle.merged) << row.energy_ev;
  EXPECT_GT(sweep.fit->r_squared, 0.99);
  EXPECT_NEAR(sweep.fit->slope * 1e-3 * GratingSpec{}.slit_spacing, 1.0, 0.1);
}

TEST(Pattern, TwoGratingsMergeAt90eVButNotAt149eV) {
  ExperimentConfig cfg;
  cfg.grating.n_gratings = 2;
  const GratingSpec s = cfg.resolved_grating();
  EXPECT_NEAR(s.separation, merging_separation(s, cfg.projection, electron_wavelength(90.0)), 1e-18);
  const auto at90 = simulate_pattern(s, cfg.projection, 90.0, kGrid);
  EXPECT_TRUE(extract_first_order_angle(at90, s, cfg.projection).merged);
  const auto at149 = simulate_pattern(s, cfg.projection, 149.0, kGrid);
  EXPECT_FALSE(extract_first_order_angle(at149, s, cfg.projection).merged);
}

TEST(Pattern, UndersampledGeometryIsRejected) {
  ProjectionGeometry near;
  near.source_to_element = 1e-6;
  EXPECT_THROW(simulate_pattern(GratingSpec{}, near, 149.0, kGrid), GeometryError);
  ProjectionGeometry bad;
  bad.source_to_element = 0.2;
  EXPECT_THROW(simulate_pattern(GratingSpec{}, bad, 149.0, kGrid), DomainError);
}

TEST(Fit, ThroughOriginExactLine) {
  const auto f = fit_through_origin({1, 2, 3, 4}, {2.5, 5, 7.5, 10});
  EXPECT_DOUBLE_EQ(f.slope, 2.5);
  EXPECT_DOUBLE_EQ(f.r_squared, 1.0);
  EXPECT_THROW(fit_through_origin({1}, {1}), DomainError);
}

TEST(Geometry, MergingSeparationFormula) {
  const ProjectionGeometry g;
  const double lambda = electron_wavelength(90.0);
  const double m = g.source_to_screen / g.source_to_element;
  // inner first orders meet when M s = 2 theta (L - z1)
  EXPECT_NEAR(merging_separation(GratingSpec{}, g, lambda) * m, 2 * lambda / 100e-9 * g.element_to_screen(), 1e-15);
}
