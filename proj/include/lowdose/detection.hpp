#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "lowdose/beam.hpp"
#include "lowdose/doe.hpp"
#include "lowdose/errors.hpp"
#include "lowdose/field.hpp"
#include "lowdose/propagation.hpp"
#include "lowdose/random.hpp"
#include "lowdose/specimen.hpp"

namespace lowdose {

/// Screen intensity of one hypothesis, plus the probabilities the Monte
/// Carlo needs: an incident electron reaches the screen with probability
/// `detect_prob` and then lands on pixel i with probability pmf[i].
class ScreenDistribution {
public:
  ScreenDistribution() = default;

  /// `detect_prob` must lie in [0, 1]. A map with zero total intensity gets
  /// a uniform pmf (it is never sampled when detect_prob is 0).
  ScreenDistribution(RealMap intensity, double detect_prob)
      : intensity_(std::move(intensity)), detect_prob_(detect_prob) {
    if (!(detect_prob_ >= 0.0 && detect_prob_ <= 1.0 + 1e-12))
      throw DomainError("screen distribution: detection probability outside [0, 1]");
    detect_prob_ = std::min(detect_prob_, 1.0);
    double total = 0.0;
    for (double v : intensity_.values()) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw DomainError("screen distribution: intensity must be finite and non-negative");
      total += v;
    }
    const std::size_t n = intensity_.size();
    pmf_.assign(n, total > 0.0 ? 0.0 : 1.0 / static_cast<double>(n));
    if (total > 0.0)
      for (std::size_t i = 0; i < n; ++i)
        pmf_[i] = intensity_[i] / total;
    // Cumulative table for inverse-CDF sampling. Summed in long double and
    // pinned to exactly 1 at the end.
    cdf_.resize(n);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      acc += pmf_[i];
      cdf_[i] = static_cast<double>(acc);
    }
    if (n)
      cdf_.back() = 1.0;
  }

  [[nodiscard]] const RealMap& intensity() const { return intensity_; }
  [[nodiscard]] const GridSpec& grid() const { return intensity_.grid(); }
  [[nodiscard]] double detect_prob() const { return detect_prob_; }
  [[nodiscard]] const std::vector<double>& pmf() const { return pmf_; }
  [[nodiscard]] const std::vector<double>& cdf() const { return cdf_; }
  [[nodiscard]] std::size_t size() const { return pmf_.size(); }

  /// Pixel whose CDF interval contains u in [0, 1).
  [[nodiscard]] std::size_t pixel_for(double u) const {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end())
      --it;
    return static_cast<std::size_t>(it - cdf_.begin());
  }

private:
  RealMap intensity_;
  double detect_prob_ = 0.0;
  std::vector<double> pmf_;
  std::vector<double> cdf_;
};

struct DetectionEvent {
  bool absorbed = true;
  std::size_t pixel = 0; // flat index, meaningful when !absorbed

  static DetectionEvent absorption() { return {true, 0}; }
  static DetectionEvent detected(std::size_t pixel) { return {false, pixel}; }

  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

/// One incident electron: absorbed with probability 1 - T, otherwise a
/// screen pixel by inverse CDF. Consumes exactly two uniforms.
inline DetectionEvent sample_event(const ScreenDistribution& dist, Rng& rng) {
  const double u_channel = rng.uniform();
  const double u_pixel = rng.uniform();
  if (!(u_channel < dist.detect_prob()))
    return DetectionEvent::absorption();
  return DetectionEvent::detected(dist.pixel_for(u_pixel));
}

// ---------------------------------------------------------------- windows

/// Flat indices of screen pixels within `radius` pixels of `center`.
inline std::vector<std::size_t> disk_window(const GridSpec& grid, std::size_t center, double radius) {
  const auto cx = static_cast<long>(center % grid.nx);
  const auto cy = static_cast<long>(center / grid.nx);
  const long r = static_cast<long>(std::ceil(radius));
  std::vector<std::size_t> out;
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx) {
      if (static_cast<double>(dx * dx + dy * dy) > radius * radius)
        continue;
      const long x = cx + dx;
      const long y = cy + dy;
      if (x < 0 || y < 0 || x >= static_cast<long>(grid.nx) || y >= static_cast<long>(grid.ny))
        continue;
      out.push_back(static_cast<std::size_t>(y) * grid.nx + static_cast<std::size_t>(x));
    }
  return out;
}

/// Square (2h+1)^2 neighbourhood, clipped to the grid.
inline std::vector<std::size_t> square_window(const GridSpec& grid, std::size_t center, long h) {
  const auto cx = static_cast<long>(center % grid.nx);
  const auto cy = static_cast<long>(center / grid.nx);
  std::vector<std::size_t> out;
  for (long y = cy - h; y <= cy + h; ++y)
    for (long x = cx - h; x <= cx + h; ++x)
      if (x >= 0 && y >= 0 && x < static_cast<long>(grid.nx) && y < static_cast<long>(grid.ny))
        out.push_back(static_cast<std::size_t>(y) * grid.nx + static_cast<std::size_t>(x));
  return out;
}

struct SpotMetrics {
  double window_mass = 0.0;   // pmf mass inside the window
  double area_fraction = 0.0; // window pixels / all pixels
  double peak_gain = 0.0;     // max intensity in window / mean screen intensity

  [[nodiscard]] double mass_ratio() const { return area_fraction > 0.0 ? window_mass / area_fraction : 0.0; }
};

inline SpotMetrics spot_metrics(const ScreenDistribution& dist, const std::vector<std::size_t>& window) {
  SpotMetrics m;
  double peak = 0.0;
  for (std::size_t i : window) {
    m.window_mass += dist.pmf()[i];
    peak = std::max(peak, dist.pmf()[i]);
  }
  const double n = static_cast<double>(dist.size());
  m.area_fraction = static_cast<double>(window.size()) / n;
  m.peak_gain = peak * n; // mean pmf is 1/n
  return m;
}

// ---------------------------------------------------------------- forward model

/// Specimen -> element -> screen geometry of the orientation test.
struct OpticalChain {
  GridSpec specimen_grid{512, 512, 0.5e-9};
  double beam_diameter = 30e-9;     // illumination disk diameter (m)
  double beam_edge_fraction = 0.1;  // half-cosine roll-off width / diameter
  double specimen_to_doe = 0.0;     // m
  double doe_to_screen = 1.0;       // m
  long focus_px_x = 0;
  long focus_px_y = 0;
  double spot_radius_px = 3.0;

  /// Specimen-to-element distance that gives the requested element pixel.
  static double distance_for_doe_pixel(const GridSpec& specimen, double doe_pixel, double wavelength) {
    return doe_pixel * static_cast<double>(specimen.nx) * specimen.pixel_size / wavelength;
  }

  [[nodiscard]] GridSpec doe_grid(double wavelength) const {
    GridSpec g = specimen_grid;
    g.pixel_size = fresnel_output_pixel(specimen_grid, specimen_to_doe, wavelength);
    return g;
  }

  [[nodiscard]] TargetGeometry target(double wavelength) const {
    return TargetGeometry{doe_grid(wavelength), doe_to_screen, focus_px_x, focus_px_y};
  }

  [[nodiscard]] GridSpec screen_grid(double wavelength) const {
    return target(wavelength).screen_grid(wavelength);
  }

  void validate(double wavelength) const {
    specimen_grid.validate();
    if (specimen_grid.nx != specimen_grid.ny)
      throw ShapeError("optical chain: square specimen grid required");
    if (!(specimen_to_doe > 0.0) || !(doe_to_screen > 0.0))
      throw DomainError("optical chain: distances must be positive");
    const double z1_min = fresnel_min_distance(specimen_grid, wavelength);
    if (specimen_to_doe < z1_min) {
      std::ostringstream os;
      os << "optical chain: specimen-to-element distance " << specimen_to_doe
         << " m is below the Fresnel sampling limit " << z1_min << " m";
      throw GeometryError(os.str());
    }
    const double z2_min = fresnel_min_distance(doe_grid(wavelength), wavelength);
    if (doe_to_screen < z2_min) {
      std::ostringstream os;
      os << "optical chain: element-to-screen distance " << doe_to_screen
         << " m is below the Fresnel sampling limit " << z2_min << " m";
      throw GeometryError(os.str());
    }
    target(wavelength).validate();
  }
};

/// Everything needed to turn a specimen hypothesis into screen statistics.
class ForwardModel {
public:
  ForwardModel(Phantom phantom, OpticalChain chain, double energy_ev, AbsorptionModel absorption)
      : phantom_(std::move(phantom)), chain_(chain), beam_(BeamParameters::from_energy(energy_ev)),
        absorption_(std::move(absorption)) {
    phantom_.validate();
    chain_.validate(beam_.wavelength);
    require_aligned(phantom_.thickness.grid(), chain_.specimen_grid, "forward model");
    incident_ = illumination_disk(chain_.specimen_grid, chain_.beam_diameter, chain_.beam_edge_fraction);
  }

  [[nodiscard]] const Phantom& phantom() const { return phantom_; }
  [[nodiscard]] const OpticalChain& chain() const { return chain_; }
  [[nodiscard]] const BeamParameters& beam() const { return beam_; }
  [[nodiscard]] const AbsorptionModel& absorption() const { return absorption_; }
  [[nodiscard]] const ComplexField& incident() const { return incident_; }

  [[nodiscard]] ComplexField exit(Orientation o) const {
    return exit_wave(incident_, phantom_, o, beam_.energy_ev, absorption_);
  }

  /// psi_o: the exit wave carried to the element plane.
  [[nodiscard]] ComplexField object_wave(Orientation o) const {
    return propagate_fresnel_scaled(exit(o), chain_.specimen_to_doe, beam_.wavelength);
  }

  /// psi_s on the element grid.
  [[nodiscard]] ComplexField target() const { return target_wave(chain_.target(beam_.wavelength), beam_.wavelength); }

  /// Fraction of the incident intensity leaving the specimen.
  [[nodiscard]] double specimen_transmission(Orientation o) const {
    return total_intensity(exit(o)) / total_intensity(incident_);
  }

  [[nodiscard]] std::size_t focus_index() const { return chain_.target(beam_.wavelength).focus_index(); }

  [[nodiscard]] std::vector<std::size_t> spot_window() const {
    return disk_window(chain_.screen_grid(beam_.wavelength), focus_index(), chain_.spot_radius_px);
  }

  /// Lays an element (possibly at a coarser fabrication pitch) onto the
  /// element-plane simulation grid.
  [[nodiscard]] DiffractiveElement on_doe_grid(const DiffractiveElement& d) const {
    const GridSpec g = chain_.doe_grid(beam_.wavelength);
    if (d.grid().aligned_with(g))
      return d;
    const std::size_t f = pixel_ratio(g.pixel_size, d.grid().pixel_size);
    DiffractiveElement up = upsample(d, f);
    if (!up.grid().same_shape(g))
      throw ShapeError("element grid " + d.grid().describe() + " does not tile the element plane " +
                       g.describe());
    up.transmission = up.transmission.with_pixel_size(g.pixel_size);
    return up;
  }

  /// Wave arriving at the screen for a given element.
  [[nodiscard]] ComplexField screen_wave(const ComplexField& object_wave, const DiffractiveElement& d) const {
    return propagate_fresnel_scaled(apply_element(object_wave, on_doe_grid(d)), chain_.doe_to_screen, beam_.wavelength);
  }

  [[nodiscard]] ScreenDistribution screen(Orientation o, const DiffractiveElement& d) const {
    const ComplexField screen_field = screen_wave(object_wave(o), d);
    const double T = total_intensity(screen_field) / total_intensity(incident_);
    return ScreenDistribution(intensity(screen_field), std::min(T, 1.0));
  }

private:
  Phantom phantom_;
  OpticalChain chain_;
  BeamParameters beam_;
  AbsorptionModel absorption_;
  ComplexField incident_;
};

/// Screen statistics of one orientation hypothesis through element d.
inline ScreenDistribution screen_distribution(const Phantom& phantom, Orientation orientation,
                                              const DiffractiveElement& element, const OpticalChain& chain,
                                              double energy_ev, const AbsorptionModel& absorption) {
  return ForwardModel(phantom, chain, energy_ev, absorption).screen(orientation, element);
}

} // namespace lowdose
