#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "lowdose/constants.hpp"
#include "lowdose/errors.hpp"
#include "lowdose/fft.hpp"
#include "lowdose/field.hpp"

namespace lowdose {

namespace detail {

inline void require_wavelength(double wavelength, const char* what) {
  if (!(wavelength > 0.0) || !std::isfinite(wavelength))
    throw DomainError(std::string(what) + ": wavelength must be positive");
}

// Signed DFT frequency of index k on an n-point axis with sample spacing dx.
inline double dft_frequency(std::size_t k, std::size_t n, double dx) {
  const auto kk = static_cast<long long>(k);
  const auto nn = static_cast<long long>(n);
  const long long s = kk < (nn + 1) / 2 ? kk : kk - nn;
  return static_cast<double>(s) / (static_cast<double>(n) * dx);
}

} // namespace detail

/// Largest |z| for which the angular-spectrum transfer function
/// exp(i 2 pi z sqrt(1/lambda^2 - fx^2 - fy^2)) is sampled without aliasing on
/// every frequency of the grid. The local chirp frequency of the transfer
/// function at spatial frequency f is z f lambda / sqrt(1 - (lambda f)^2); the
/// criterion requires it to stay within half the grid width at the Nyquist
/// frequency 1/(2 dx) on both axes. For lambda << dx this reduces to the familiar
/// |z| <= N dx^2 / lambda.
inline double angular_spectrum_max_distance(const GridSpec& grid, double wavelength) {
  detail::require_wavelength(wavelength, "angular_spectrum_max_distance");
  const double fnyq = 1.0 / (2.0 * grid.pixel_size);
  const double s = wavelength * fnyq;
  if (s >= 1.0 / std::sqrt(2.0))
    return 0.0; // corner frequencies are evanescent
  const double n = static_cast<double>(std::min(grid.nx, grid.ny));
  const double half_width = 0.5 * n * grid.pixel_size;
  // z * fnyq * lambda / sqrt(1 - s^2) <= half_width
  return half_width * std::sqrt(1.0 - s * s) / (fnyq * wavelength);
}

/// Band-limited angular-spectrum propagation over `distance` (may be
/// negative). Output keeps the input grid. Every propagating frequency gets a
/// unit-modulus phase factor, so total intensity is conserved.
inline ComplexField propagate_angular_spectrum(const ComplexField& field, double distance,
                                               double wavelength) {
  detail::require_wavelength(wavelength, "propagate_angular_spectrum");
  field.grid().validate();
  require_finite(field, "propagate_angular_spectrum");
  if (!std::isfinite(distance))
    throw DomainError("propagate_angular_spectrum: distance must be finite");
  if (distance == 0.0)
    return field;

  const GridSpec& g = field.grid();
  const double zmax = angular_spectrum_max_distance(g, wavelength);
  if (std::abs(distance) > zmax) {
    std::ostringstream os;
    os << "propagate_angular_spectrum: |z| = " << std::abs(distance)
       << " m exceeds the band-limit distance " << zmax << " m for grid " << g.describe()
       << " at lambda = " << wavelength << " m (need |z| <= N dx^2 / lambda)";
    throw GeometryError(os.str());
  }

  std::vector<Complex> spectrum = field.storage();
  fft::transform(spectrum, g.nx, g.ny, fft::Direction::Forward);
  const double inv_l2 = 1.0 / (wavelength * wavelength);
  const double two_pi_z = 2.0 * constants::pi * distance;
  for (std::size_t ky = 0; ky < g.ny; ++ky) {
    const double fy = detail::dft_frequency(ky, g.ny, g.pixel_size);
    for (std::size_t kx = 0; kx < g.nx; ++kx) {
      const double fx = detail::dft_frequency(kx, g.nx, g.pixel_size);
      const double f2 = fx * fx + fy * fy;
      // sqrt(1/l^2 - f^2) - 1/l, written to avoid cancellation. Dropping the
      // carrier exp(i k z) only changes the global phase.
      const double dkz = -f2 / (std::sqrt(inv_l2 - f2) + 1.0 / wavelength);
      const double phase = two_pi_z * dkz;
      spectrum[ky * g.nx + kx] *= Complex{std::cos(phase), std::sin(phase)};
    }
  }
  fft::transform(spectrum, g.nx, g.ny, fft::Direction::Backward);
  const double scale = 1.0 / static_cast<double>(g.size());
  for (auto& v : spectrum)
    v *= scale;
  return ComplexField(g, std::move(spectrum));
}

/// Output pixel size of the single-transform Fresnel propagator.
inline double fresnel_output_pixel(const GridSpec& grid, double distance, double wavelength) {
  return wavelength * distance / (static_cast<double>(grid.nx) * grid.pixel_size);
}

/// Smallest distance at which the Fresnel kernel exp(i pi r^2/(lambda z)) is
/// Nyquist-sampled across the input grid: z >= N dx^2 / lambda.
inline double fresnel_min_distance(const GridSpec& grid, double wavelength) {
  const double n = static_cast<double>(std::max(grid.nx, grid.ny));
  return n * grid.pixel_size * grid.pixel_size / wavelength;
}

/// Single-transform Fresnel propagation. The output grid has the same
/// dimensions and pixel size lambda z / (N dx). The constant prefactor
/// exp(ikz)/(i lambda z) is replaced by the unitary DFT normalisation, so the
/// summed intensity is conserved; the output quadratic phase is kept because
/// later hops depend on it.
inline ComplexField propagate_fresnel_scaled(const ComplexField& field, double distance,
                                             double wavelength) {
  detail::require_wavelength(wavelength, "propagate_fresnel_scaled");
  field.grid().validate();
  if (!(distance > 0.0) || !std::isfinite(distance))
    throw DomainError("propagate_fresnel_scaled: distance must be positive; use the "
                      "angular-spectrum propagator for short or negative hops");
  if (field.nx() != field.ny())
    throw ShapeError("propagate_fresnel_scaled: square grid required, got " +
                     field.grid().describe());
  require_finite(field, "propagate_fresnel_scaled");

  const GridSpec& in = field.grid();
  const double k_half = constants::pi / (wavelength * distance);
  std::vector<Complex> work(in.size());
  for (std::size_t iy = 0; iy < in.ny; ++iy) {
    const double y = in.y(iy);
    for (std::size_t ix = 0; ix < in.nx; ++ix) {
      const double x = in.x(ix);
      const double ph = k_half * (x * x + y * y);
      work[iy * in.nx + ix] = field(ix, iy) * Complex{std::cos(ph), std::sin(ph)};
    }
  }
  work = fft::centered_unitary(std::move(work), in.nx, in.ny, fft::Direction::Forward);

  GridSpec out = in;
  out.pixel_size = fresnel_output_pixel(in, distance, wavelength);
  for (std::size_t iy = 0; iy < out.ny; ++iy) {
    const double y = out.y(iy);
    for (std::size_t ix = 0; ix < out.nx; ++ix) {
      const double x = out.x(ix);
      const double ph = k_half * (x * x + y * y);
      work[iy * out.nx + ix] *= Complex{std::cos(ph), std::sin(ph)};
    }
  }
  return ComplexField(out, std::move(work));
}

/// Paraxial spherical wave from a point source `source_distance` upstream,
/// unit amplitude, phase pi r^2 / (lambda z) (zero on axis). A non-finite
/// distance gives a plane wave.
inline ComplexField point_source_illumination(const GridSpec& grid, double source_distance,
                                              double wavelength) {
  grid.validate();
  detail::require_wavelength(wavelength, "point_source_illumination");
  if (std::isinf(source_distance) && source_distance > 0.0)
    return ComplexField(grid, Complex{1.0, 0.0});
  if (!(source_distance > 0.0) || !std::isfinite(source_distance))
    throw DomainError("point_source_illumination: source distance must be positive");
  const double k_half = constants::pi / (wavelength * source_distance);
  return ComplexField::generate(grid, [&](double x, double y) {
    const double ph = k_half * (x * x + y * y);
    return Complex{std::cos(ph), std::sin(ph)};
  });
}

inline ComplexField plane_wave(const GridSpec& grid) {
  return point_source_illumination(grid, std::numeric_limits<double>::infinity(), 1.0);
}

} // namespace lowdose
