#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "lowdose/beam.hpp"
#include "lowdose/constants.hpp"
#include "lowdose/detection.hpp"
#include "lowdose/errors.hpp"
#include "lowdose/field.hpp"
#include "lowdose/propagation.hpp"

namespace lowdose {

/// Hole-array grating: each slit is a column of `rows` round holes, `cols`
/// slits at `slit_spacing`. With two gratings their centres sit at
/// +-separation/2 along the dispersion (x) axis.
struct GratingSpec {
  double slit_spacing = 100e-9;  // x pitch between slits
  double row_pitch = 100e-9;     // y pitch between holes of one slit
  double hole_diameter = 20e-9;
  std::size_t rows = 4;
  std::size_t cols = 4;
  std::size_t n_gratings = 1;
  double separation = 0.0; // centre-to-centre distance when n_gratings == 2

  void validate() const {
    if (!(slit_spacing > 0.0) || !(row_pitch > 0.0) || !(hole_diameter > 0.0))
      throw DomainError("grating: spacings and hole diameter must be positive");
    if (!(hole_diameter < slit_spacing) || !(hole_diameter < row_pitch))
      throw DomainError("grating: hole diameter must be smaller than the hole pitch");
    if (n_gratings != 1 && n_gratings != 2)
      throw DomainError("grating: one or two gratings supported");
    if (n_gratings == 2 && !(separation > static_cast<double>(cols) * slit_spacing))
      throw DomainError("grating: the two gratings overlap; increase the separation");
  }

  [[nodiscard]] std::vector<double> grating_centres() const {
    if (n_gratings == 2)
      return {-0.5 * separation, 0.5 * separation};
    return {0.0};
  }
};

struct ProjectionGeometry {
  double source_to_element = 360e-6;
  double source_to_screen = 0.1;

  [[nodiscard]] double element_to_screen() const { return source_to_screen - source_to_element; }

  void validate() const {
    if (!(source_to_element > 0.0) || !(source_to_element < source_to_screen))
      throw DomainError("projection geometry: need 0 < source-to-element < source-to-screen");
  }
};

enum class Illumination { PointSource, Plane };

/// First-order angle of a plane-wave grating, theta = lambda / a.
inline double grating_equation(double wavelength, double spacing) {
  if (!(wavelength > 0.0) || !(spacing > 0.0))
    throw DomainError("grating_equation: wavelength and spacing must be positive");
  if (wavelength >= spacing)
    throw GeometryError("grating_equation: wavelength >= spacing leaves the paraxial regime");
  return wavelength / spacing;
}

/// Binary transmission map of the grating(s), 1 inside holes.
inline RealMap build_grating_mask(const GratingSpec& spec, const GridSpec& grid) {
  spec.validate();
  grid.validate();
  if (spec.hole_diameter < 4.0 * grid.pixel_size) {
    std::ostringstream os;
    os << "build_grating_mask: pixel " << grid.pixel_size << " m does not resolve a "
       << spec.hole_diameter << " m hole with 4 pixels";
    throw GeometryError(os.str());
  }
  const double r = 0.5 * spec.hole_diameter;
  std::vector<std::pair<double, double>> holes;
  for (double xc : spec.grating_centres())
    for (std::size_t c = 0; c < spec.cols; ++c)
      for (std::size_t k = 0; k < spec.rows; ++k)
        holes.emplace_back(xc + (static_cast<double>(c) - 0.5 * static_cast<double>(spec.cols - 1)) * spec.slit_spacing,
                           (static_cast<double>(k) - 0.5 * static_cast<double>(spec.rows - 1)) * spec.row_pitch);
  const double half_w = 0.5 * grid.width();
  const double half_h = 0.5 * static_cast<double>(grid.ny) * grid.pixel_size;
  for (const auto& [x, y] : holes)
    if (std::abs(x) + r >= half_w || std::abs(y) + r >= half_h)
      throw GeometryError("build_grating_mask: grating does not fit the field of view");

  RealMap mask(grid, 0.0);
  for (const auto& [hx, hy] : holes) {
    const auto lo_x = static_cast<long>(std::floor((hx - r) / grid.pixel_size)) + static_cast<long>(grid.nx / 2) - 1;
    const auto hi_x = static_cast<long>(std::ceil((hx + r) / grid.pixel_size)) + static_cast<long>(grid.nx / 2) + 1;
    const auto lo_y = static_cast<long>(std::floor((hy - r) / grid.pixel_size)) + static_cast<long>(grid.ny / 2) - 1;
    const auto hi_y = static_cast<long>(std::ceil((hy + r) / grid.pixel_size)) + static_cast<long>(grid.ny / 2) + 1;
    for (long iy = std::max(0L, lo_y); iy <= std::min<long>(hi_y, static_cast<long>(grid.ny) - 1); ++iy)
      for (long ix = std::max(0L, lo_x); ix <= std::min<long>(hi_x, static_cast<long>(grid.nx) - 1); ++ix) {
        const double dx = grid.x(static_cast<std::size_t>(ix)) - hx;
        const double dy = grid.y(static_cast<std::size_t>(iy)) - hy;
        if (dx * dx + dy * dy <= r * r)
          mask(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy)) = 1.0;
      }
  }
  return mask;
}

inline double open_fraction(const RealMap& mask) {
  double s = 0.0;
  for (double v : mask.values())
    s += v;
  return s / static_cast<double>(mask.size());
}

/// Point-projection diffraction: the mask at source_to_element, lit by the
/// point source (or a plane wave for the control run), propagated to the
/// screen with the single-transform Fresnel propagator.
inline ScreenDistribution simulate_pattern(const GratingSpec& spec, const ProjectionGeometry& geom,
                                           double energy_ev, const GridSpec& grid,
                                           Illumination illumination = Illumination::PointSource) {
  geom.validate();
  const double lambda = electron_wavelength(energy_ev);
  grating_equation(lambda, spec.slit_spacing);
  const RealMap mask = build_grating_mask(spec, grid);

  // The product of the illumination curvature and the Fresnel kernel must be
  // Nyquist-sampled at the grid edge.
  const double curvature = (illumination == Illumination::PointSource ? 1.0 / geom.source_to_element : 0.0) +
                           1.0 / geom.element_to_screen();
  const double edge = 0.5 * static_cast<double>(std::max(grid.nx, grid.ny)) * grid.pixel_size;
  if (edge * curvature * grid.pixel_size / lambda > 0.5) {
    std::ostringstream os;
    os << "simulate_pattern: quadratic phase undersampled at the grid edge for lambda = " << lambda
       << " m; reduce the pixel size or the field of view";
    throw GeometryError(os.str());
  }

  ComplexField field = illumination == Illumination::PointSource
                           ? point_source_illumination(grid, geom.source_to_element, lambda)
                           : plane_wave(grid);
  const double incident = total_intensity(field);
  for (std::size_t i = 0; i < field.size(); ++i)
    field[i] *= mask[i];
  const ComplexField screen = propagate_fresnel_scaled(field, geom.element_to_screen(), lambda);
  return ScreenDistribution(intensity(screen), total_intensity(screen) / incident);
}

// ---------------------------------------------------------------- peaks

struct PeakOptions {
  double smoothing_sigma_px = 3.0; // Gaussian smoothing of the x profile
  double min_relative_height = 0.2; // of the highest peak
  double min_separation_px = 5.0;  // weaker maxima closer than this are dropped
  long centroid_half_width = 2;     // 5-pixel centroid window
};

/// Intensity summed over y: the profile along the dispersion axis.
inline std::vector<double> dispersion_profile(const RealMap& intensity) {
  std::vector<double> p(intensity.nx(), 0.0);
  for (std::size_t iy = 0; iy < intensity.ny(); ++iy)
    for (std::size_t ix = 0; ix < intensity.nx(); ++ix)
      p[ix] += intensity(ix, iy);
  return p;
}

inline std::vector<double> gaussian_smooth(const std::vector<double>& p, double sigma) {
  if (sigma <= 0.0)
    return p;
  const long h = static_cast<long>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * h + 1));
  double ks = 0.0;
  for (long i = -h; i <= h; ++i) {
    k[static_cast<std::size_t>(i + h)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    ks += k[static_cast<std::size_t>(i + h)];
  }
  std::vector<double> out(p.size(), 0.0);
  const auto n = static_cast<long>(p.size());
  for (long x = 0; x < n; ++x) {
    double s = 0.0;
    for (long i = -h; i <= h; ++i) {
      const long j = x + i;
      if (j >= 0 && j < n)
        s += k[static_cast<std::size_t>(i + h)] * p[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(x)] = s / ks;
  }
  return out;
}

/// Sub-pixel peak positions (in pixels) of a 1D profile, sorted by position.
inline std::vector<double> find_peaks(const std::vector<double>& profile, const PeakOptions& opt = {}) {
  const std::vector<double> s = gaussian_smooth(profile, opt.smoothing_sigma_px);
  const auto n = static_cast<long>(s.size());
  if (n < 3)
    return {};
  const double top = *std::max_element(s.begin(), s.end());
  if (!(top > 0.0))
    return {};
  std::vector<long> cand;
  for (long i = 1; i + 1 < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (s[u] >= opt.min_relative_height * top && s[u] > s[u - 1] && s[u] >= s[u + 1])
      cand.push_back(i);
  }
  std::sort(cand.begin(), cand.end(),
            [&](long a, long b) { return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)]; });
  std::vector<long> kept;
  for (long c : cand) {
    const bool close = std::any_of(kept.begin(), kept.end(), [&](long k) {
      return static_cast<double>(std::abs(k - c)) < opt.min_separation_px;
    });
    if (!close)
      kept.push_back(c);
  }
  std::vector<double> pos;
  for (long c : kept) {
    double w = 0.0, m = 0.0;
    for (long i = c - opt.centroid_half_width; i <= c + opt.centroid_half_width; ++i) {
      if (i < 0 || i >= n)
        continue;
      const double v = s[static_cast<std::size_t>(i)];
      w += v;
      m += v * static_cast<double>(i);
    }
    pos.push_back(w > 0.0 ? m / w : static_cast<double>(c));
  }
  std::sort(pos.begin(), pos.end());
  return pos;
}

struct AngleResult {
  bool merged = false;
  double angle_mrad = 0.0;       // single grating only
  double asymmetry_px = 0.0;     // | |x(+1) - x0| - |x0 - x(-1)| |
  std::vector<double> peaks_px;  // all detected peak positions
  std::vector<double> zeroth_px; // zeroth-order position per grating
};

/// Screen pixel (x) onto which a point of the element plane projects
/// geometrically: magnified by L / z1 for the point source, 1:1 for the
/// plane-wave control.
inline double projected_pixel(double x_element, const ProjectionGeometry& geom, Illumination illumination,
                              const GridSpec& screen) {
  const double m = illumination == Illumination::PointSource ? geom.source_to_screen / geom.source_to_element : 1.0;
  return static_cast<double>(screen.nx / 2) + m * x_element / screen.pixel_size;
}

/// Zeroth orders are the peaks nearest the projected grating centres.
/// One grating: the nearest peaks on either side of the zeroth order are the
/// first orders and the angle is delta_x_screen / (L - z1). Two gratings: the inner first orders are merged when
/// at most one peak separates the two zeroth orders; no angle is reported.
inline AngleResult extract_first_order_angle(const ScreenDistribution& dist, const GratingSpec& spec,
                                             const ProjectionGeometry& geom,
                                             Illumination illumination = Illumination::PointSource,
                                             const PeakOptions& opt = {}) {
  geom.validate();
  spec.validate();
  AngleResult r;
  r.peaks_px = find_peaks(dispersion_profile(dist.intensity()), opt);
  if (r.peaks_px.size() < 3) {
    r.merged = true;
    return r;
  }
  auto nearest = [&](double x) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.peaks_px.size(); ++i)
      if (std::abs(r.peaks_px[i] - x) < std::abs(r.peaks_px[best] - x))
        best = i;
    return best;
  };
  std::vector<std::size_t> zeroth;
  for (double xc : spec.grating_centres()) {
    zeroth.push_back(nearest(projected_pixel(xc, geom, illumination, dist.grid())));
    r.zeroth_px.push_back(r.peaks_px[zeroth.back()]);
  }

  if (spec.n_gratings == 2) {
    const std::size_t between = zeroth[1] > zeroth[0] ? zeroth[1] - zeroth[0] - 1 : 0;
    r.merged = zeroth[1] <= zeroth[0] || between <= 1;
    return r;
  }

  const std::size_t z = zeroth[0];
  if (z == 0 || z + 1 >= r.peaks_px.size()) {
    r.merged = true;
    return r;
  }
  const double left = r.peaks_px[z] - r.peaks_px[z - 1];
  const double right = r.peaks_px[z + 1] - r.peaks_px[z];
  r.asymmetry_px = std::abs(left - right);
  r.angle_mrad = 1e3 * 0.5 * (left + right) * dist.grid().pixel_size / geom.element_to_screen();
  return r;
}

/// Least squares y = k x through the origin; R^2 uses the centred total sum
/// of squares.
struct OriginFit {
  double slope = 0.0;
  double r_squared = 0.0;
};

inline OriginFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DomainError("fit_through_origin: need at least two paired points");
  double sxy = 0.0, sxx = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    ym += y[i];
  }
  ym /= static_cast<double>(y.size());
  OriginFit f;
  f.slope = sxy / sxx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ss_res += (y[i] - f.slope * x[i]) * (y[i] - f.slope * x[i]);
    ss_tot += (y[i] - ym) * (y[i] - ym);
  }
  f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

/// Centre-to-centre distance at which the inner first orders of two gratings
/// coincide on the screen for `wavelength`: the zeroth orders project to
/// +-M s/2 with M = L / z1, the inner first orders are displaced by
/// (lambda / a)(L - z1) towards the axis.
inline double merging_separation(const GratingSpec& spec, const ProjectionGeometry& geom, double wavelength) {
  const double m = geom.source_to_screen / geom.source_to_element;
  return 2.0 * wavelength / spec.slit_spacing * geom.element_to_screen() / m;
}

} // namespace lowdose
