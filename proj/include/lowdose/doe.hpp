#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <vector>

#include "lowdose/constants.hpp"
#include "lowdose/errors.hpp"
#include "lowdose/field.hpp"
#include "lowdose/io.hpp"
#include "lowdose/propagation.hpp"

namespace lowdose {

enum class ElementKind { Continuous, Binary };

/// Amplitude-only diffractive element. `support` marks the pixels where the
/// object wave was bright enough to synthesise d; elsewhere d is 0.
struct DiffractiveElement {
  RealMap transmission;
  std::vector<std::uint8_t> support;
  ElementKind kind = ElementKind::Continuous;

  [[nodiscard]] const GridSpec& grid() const { return transmission.grid(); }

  [[nodiscard]] std::size_t support_count() const {
    return static_cast<std::size_t>(std::count(support.begin(), support.end(), std::uint8_t{1}));
  }

  [[nodiscard]] double open_fraction() const {
    double s = 0.0;
    for (double v : transmission.values())
      s += v;
    return s / static_cast<double>(transmission.size());
  }

  /// Uniform element (d = value everywhere, full support).
  static DiffractiveElement uniform(const GridSpec& grid, double value) {
    const bool binary = value == 0.0 || value == 1.0;
    return {RealMap(grid, value), std::vector<std::uint8_t>(grid.size(), 1),
            binary ? ElementKind::Binary : ElementKind::Continuous};
  }

  void validate() const {
    if (support.size() != transmission.size())
      throw ShapeError("diffractive element: support mask size mismatch");
    for (double v : transmission.values()) {
      if (!(v >= 0.0 && v <= 1.0))
        throw DomainError("diffractive element: transmission outside [0, 1]");
      if (kind == ElementKind::Binary && v != 0.0 && v != 1.0)
        throw DomainError("diffractive element: binary element with non-binary value");
    }
  }
};

enum class OffsetPolicy {
  Minimal, // smallest constant that makes d non-negative on the support
  Fixed,   // user constant
};

enum class BinarizeRule {
  Median, // spatial median of the supported values
  Fixed,  // user threshold
};

struct SynthesisParams {
  double intensity_threshold_fraction = 1e-4;
  OffsetPolicy offset_policy = OffsetPolicy::Minimal;
  double fixed_offset = 0.0;
  BinarizeRule binarize_rule = BinarizeRule::Median;
  double binarize_threshold = 0.5;

  void validate() const {
    if (!(intensity_threshold_fraction >= 0.0 && intensity_threshold_fraction < 1.0))
      throw DomainError("intensity threshold fraction must lie in [0, 1)");
  }
};

/// Extra output of synthesize_continuous, mainly for diagnostics and tests.
struct SynthesisReport {
  double offset = 0.0;          // constant added to Re(psi_s / psi_o)
  double min_before_scale = 0.0; // min over the support after the offset
  double max_before_scale = 0.0;
};

// ---------------------------------------------------------------- target

/// Geometry of the element-to-screen hop. The focus is given in whole screen
/// pixels relative to the optical axis so the designed spot lands exactly on
/// a pixel of the single-transform Fresnel output grid.
struct TargetGeometry {
  GridSpec doe_grid;
  double screen_distance = 0.0; // m
  long focus_px_x = 0;
  long focus_px_y = 0;

  [[nodiscard]] GridSpec screen_grid(double wavelength) const {
    GridSpec g = doe_grid;
    g.pixel_size = fresnel_output_pixel(doe_grid, screen_distance, wavelength);
    return g;
  }

  /// Flat index of the focal pixel on the screen grid.
  [[nodiscard]] std::size_t focus_index() const {
    const auto ix = static_cast<std::size_t>(static_cast<long>(doe_grid.nx / 2) + focus_px_x);
    const auto iy = static_cast<std::size_t>(static_cast<long>(doe_grid.ny / 2) + focus_px_y);
    return iy * doe_grid.nx + ix;
  }

  void validate() const {
    doe_grid.validate();
    if (!(screen_distance > 0.0))
      throw DomainError("target geometry: screen distance must be positive");
    const long hx = static_cast<long>(doe_grid.nx / 2);
    const long hy = static_cast<long>(doe_grid.ny / 2);
    if (focus_px_x < -hx || focus_px_x >= static_cast<long>(doe_grid.nx) - hx ||
        focus_px_y < -hy || focus_px_y >= static_cast<long>(doe_grid.ny) - hy) {
      std::ostringstream os;
      os << "target geometry: focal point (" << focus_px_x << ", " << focus_px_y
         << ") px lies outside the " << doe_grid.nx << "x" << doe_grid.ny << " screen";
      throw GeometryError(os.str());
    }
  }
};

/// Paraxial spherical wave converging on the focal point in the screen
/// plane: unit amplitude, phase -pi |r - r_f|^2 / (lambda z).
inline ComplexField target_wave(const TargetGeometry& geom, double wavelength) {
  geom.validate();
  if (!(wavelength > 0.0))
    throw DomainError("target_wave: wavelength must be positive");
  const GridSpec screen = geom.screen_grid(wavelength);
  const double xf = static_cast<double>(geom.focus_px_x) * screen.pixel_size;
  const double yf = static_cast<double>(geom.focus_px_y) * screen.pixel_size;
  const double k_half = constants::pi / (wavelength * geom.screen_distance);
  return ComplexField::generate(geom.doe_grid, [&](double x, double y) {
    const double ph = -k_half * ((x - xf) * (x - xf) + (y - yf) * (y - yf));
    return Complex{std::cos(ph), std::sin(ph)};
  });
}

// ---------------------------------------------------------------- synthesis

/// d = Re(psi_s / psi_o) + c on the support |psi_o|^2 >= eps * max |psi_o|^2,
/// rescaled by 1/max(d) into [0, 1]; d = 0 off the support.
inline DiffractiveElement synthesize_continuous(const ComplexField& object_wave,
                                                const ComplexField& target,
                                                const SynthesisParams& params,
                                                SynthesisReport* report = nullptr) {
  params.validate();
  require_aligned(object_wave.grid(), target.grid(), "synthesize_continuous");
  const std::size_t n = object_wave.size();

  double peak = 0.0;
  for (const auto& v : object_wave.values())
    peak = std::max(peak, std::norm(v));
  if (!(peak > 0.0))
    throw SynthesisError("synthesize_continuous: object wave is zero everywhere");
  const double cut = params.intensity_threshold_fraction * peak;

  std::vector<std::uint8_t> support(n, 0);
  std::vector<double> raw(n, 0.0);
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double I = std::norm(object_wave[i]);
    if (I >= cut && I > 0.0) {
      support[i] = 1;
      // Re(s / o) = Re(s conj(o)) / |o|^2, exact for s = o and s = i o
      const Complex s = target[i], o = object_wave[i];
      raw[i] = (s.real() * o.real() + s.imag() * o.imag()) / (o.real() * o.real() + o.imag() * o.imag());
      lo = std::min(lo, raw[i]);
    }
  }
  if (!std::isfinite(lo))
    throw SynthesisError("synthesize_continuous: no pixel above the intensity threshold");

  const double offset = params.offset_policy == OffsetPolicy::Minimal
                            ? (lo < 0.0 ? -lo : 0.0)
                            : params.fixed_offset;
  double hi = 0.0;
  double lo_shifted = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (!support[i])
      continue;
    raw[i] += offset;
    hi = std::max(hi, raw[i]);
    lo_shifted = std::min(lo_shifted, raw[i]);
  }
  if (lo_shifted < 0.0)
    throw SynthesisError("synthesize_continuous: fixed offset leaves negative transmission");
  if (report)
    *report = SynthesisReport{offset, lo_shifted, hi};

  RealMap d(object_wave.grid(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!support[i])
      continue;
    // Re(...) constant on the support (e.g. psi_s = psi_o with no offset
    // needed) leaves hi > 0; a support of exact zeros maps to 1.
    d[i] = hi > 0.0 ? raw[i] / hi : 1.0;
  }
  return DiffractiveElement{std::move(d), std::move(support), ElementKind::Continuous};
}

/// Median of the values on the support; mean of the two middle values for an
/// even count.
inline double support_median(const DiffractiveElement& d) {
  std::vector<double> kept;
  kept.reserve(d.transmission.size());
  for (std::size_t i = 0; i < d.transmission.size(); ++i)
    if (d.support[i])
      kept.push_back(d.transmission[i]);
  if (kept.empty())
    return 0.0;
  const std::size_t mid = kept.size() / 2;
  std::nth_element(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(mid), kept.end());
  const double upper = kept[mid];
  if (kept.size() % 2 == 1)
    return upper;
  const double lower = *std::max_element(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

/// Fully open where d >= threshold on the support, opaque elsewhere.
inline DiffractiveElement binarize(const DiffractiveElement& d, const SynthesisParams& params = {}) {
  if (d.kind != ElementKind::Continuous)
    throw DomainError("binarize: element is already binary");
  const double threshold =
      params.binarize_rule == BinarizeRule::Median ? support_median(d) : params.binarize_threshold;
  DiffractiveElement out{RealMap(d.grid(), 0.0), d.support, ElementKind::Binary};
  for (std::size_t i = 0; i < d.transmission.size(); ++i)
    out.transmission[i] = (d.support[i] && d.transmission[i] >= threshold) ? 1.0 : 0.0;
  return out;
}

/// Integer block factor between two pixel sizes, or GeometryError.
inline std::size_t pixel_ratio(double native, double target) {
  const double r = target / native;
  const double rounded = std::round(r);
  if (rounded < 1.0 || std::abs(r - rounded) > 1e-9 * r) {
    std::ostringstream os;
    os << "pixel ratio " << target << " / " << native << " = " << r << " is not a positive integer";
    throw GeometryError(os.str());
  }
  return static_cast<std::size_t>(rounded);
}

/// Aggregate f x f blocks into fabrication pixels of `target_pixel`: strict
/// majority vote for binary elements (ties close the pixel), mean otherwise.
inline DiffractiveElement pixelate(const DiffractiveElement& d, double target_pixel) {
  const std::size_t f = pixel_ratio(d.grid().pixel_size, target_pixel);
  if (f == 1)
    return d;
  if (d.grid().nx % f != 0 || d.grid().ny % f != 0)
    throw GeometryError("pixelate: grid dimensions are not divisible by the block factor");
  GridSpec g{d.grid().nx / f, d.grid().ny / f, d.grid().pixel_size * static_cast<double>(f)};
  DiffractiveElement out{RealMap(g, 0.0), std::vector<std::uint8_t>(g.size(), 0), d.kind};
  const double cells = static_cast<double>(f * f);
  for (std::size_t by = 0; by < g.ny; ++by) {
    for (std::size_t bx = 0; bx < g.nx; ++bx) {
      double sum = 0.0;
      bool any_support = false;
      for (std::size_t j = 0; j < f; ++j)
        for (std::size_t i = 0; i < f; ++i) {
          const std::size_t ix = bx * f + i;
          const std::size_t iy = by * f + j;
          sum += d.transmission(ix, iy);
          any_support = any_support || d.support[iy * d.grid().nx + ix];
        }
      const double value = d.kind == ElementKind::Binary ? (2.0 * sum > cells ? 1.0 : 0.0) : sum / cells;
      out.transmission(bx, by) = value;
      out.support[by * g.nx + bx] = any_support ? 1 : 0;
    }
  }
  return out;
}

/// Nearest-neighbour expansion of each pixel into f x f pixels, used to lay a
/// fabricated element back onto the finer simulation grid.
inline DiffractiveElement upsample(const DiffractiveElement& d, std::size_t f) {
  if (f <= 1)
    return d;
  GridSpec g{d.grid().nx * f, d.grid().ny * f, d.grid().pixel_size / static_cast<double>(f)};
  DiffractiveElement out{RealMap(g, 0.0), std::vector<std::uint8_t>(g.size(), 0), d.kind};
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      out.transmission(ix, iy) = d.transmission(ix / f, iy / f);
      out.support[iy * g.nx + ix] = d.support[(iy / f) * d.grid().nx + ix / f];
    }
  return out;
}

/// Wave emerging from the element: psi * d pointwise.
inline ComplexField apply_element(const ComplexField& psi, const DiffractiveElement& d) {
  require_aligned(psi.grid(), d.grid(), "apply_element");
  ComplexField out(psi.grid());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = psi[i] * d.transmission[i];
  return out;
}

/// Unconstrained complex element psi_s / psi_o (not fabricable; used to check
/// the transform chain against the ideal case). Pixels where psi_o vanishes
/// get 0.
inline ComplexField ideal_ratio_element(const ComplexField& object_wave, const ComplexField& target) {
  require_aligned(object_wave.grid(), target.grid(), "ideal_ratio_element");
  ComplexField out(object_wave.grid());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = object_wave[i] == Complex{} ? Complex{} : target[i] / object_wave[i];
  return out;
}

inline ComplexField apply_element(const ComplexField& psi, const ComplexField& complex_element) {
  require_aligned(psi.grid(), complex_element.grid(), "apply_element");
  ComplexField out(psi.grid());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = psi[i] * complex_element[i];
  return out;
}

/// Transmitted fraction of the summed intensity.
inline double transmission_fraction(const ComplexField& before, const ComplexField& after) {
  const double in = total_intensity(before);
  return in > 0.0 ? total_intensity(after) / in : 0.0;
}

/// CSV list of open pixels of a binary element: x,y,pixel_size in meters,
/// centred coordinates, row-major order.
inline void write_hole_list(std::ostream& os, const DiffractiveElement& d,
                            const io::Comments& comments = {}) {
  if (d.kind != ElementKind::Binary)
    throw DomainError("hole list requires a binary element");
  for (const auto& c : comments)
    os << "# " << c << '\n';
  os << "x,y,pixel_size\n";
  const GridSpec& g = d.grid();
  const std::string px = io::format_double(g.pixel_size);
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix)
      if (d.transmission(ix, iy) == 1.0)
        os << io::format_double(g.x(ix)) << ',' << io::format_double(g.y(iy)) << ',' << px << '\n';
}

} // namespace lowdose
