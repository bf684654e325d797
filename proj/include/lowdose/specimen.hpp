#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lowdose/beam.hpp"
#include "lowdose/constants.hpp"
#include "lowdose/errors.hpp"
#include "lowdose/field.hpp"
#include "lowdose/io.hpp"
#include "lowdose/random.hpp"

namespace lowdose {

/// Relativistic interaction constant sigma (rad / (V m)): the phase shift per
/// volt of projected potential per meter of thickness.
inline double interaction_constant(double energy_ev) {
  using namespace constants;
  const double lambda = electron_wavelength(energy_ev);
  const double rest_ev = electron_mass * speed_of_light * speed_of_light / elementary_charge;
  return 2.0 * pi / (lambda * energy_ev) * (rest_ev + energy_ev) / (2.0 * rest_ev + energy_ev);
}

enum class Orientation { Right, Wrong };

inline const char* to_string(Orientation o) { return o == Orientation::Right ? "right" : "wrong"; }

/// Rotation by +90 degrees about pixel (nx/2, ny/2), the optical axis.
/// Indices wrap, so four rotations restore the map bit for bit.
template <typename T>
Map2D<T> rotate90(const Map2D<T>& in) {
  if (in.nx() != in.ny())
    throw ShapeError("rotate90: square grid required, got " + in.grid().describe());
  const std::size_t n = in.nx();
  const auto c = static_cast<long long>(n / 2);
  const auto nn = static_cast<long long>(n);
  Map2D<T> out(in.grid());
  for (std::size_t iy = 0; iy < n; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      // (x, y) <- (y, -x) in centred coordinates
      const long long sx = c + (static_cast<long long>(iy) - c);
      const long long sy = c - (static_cast<long long>(ix) - c);
      out(ix, iy) = in(static_cast<std::size_t>(((sx % nn) + nn) % nn),
                       static_cast<std::size_t>(((sy % nn) + nn) % nn));
    }
  }
  return out;
}

struct PhantomOptions {
  double extent = 25e-9;          // support diameter (m)
  double peak_thickness = 25e-9;  // m
  double inner_potential = 10.7;  // V, amorphous carbon
  double density_scale = 0.7;     // protein relative to amorphous carbon
  int min_lobes = 3;
  int max_lobes = 6;
  double lobe_radius_min = 0.35; // fractions of the support radius
  double lobe_radius_max = 0.6;
  double lobe_offset_min = 0.1;
  double lobe_offset_max = 0.5;
  double lobe_exponent = 1.5; // profile (1 - d^2/s^2)^exponent; 0.5 is a sphere
};

struct Phantom {
  RealMap thickness;            // m, >= 0, zero outside the support disk
  double inner_potential = 0.0; // V
  double density_scale = 0.0;
  double extent = 0.0; // m

  [[nodiscard]] RealMap oriented(Orientation o) const {
    return o == Orientation::Right ? thickness : rotate90(thickness);
  }

  [[nodiscard]] Phantom rotated() const {
    return Phantom{rotate90(thickness), inner_potential, density_scale, extent};
  }

  void validate() const {
    if (!(inner_potential > 0.0))
      throw DomainError("phantom: inner potential must be positive");
    if (!(density_scale > 0.0))
      throw DomainError("phantom: density scale must be positive");
    for (double t : thickness.values())
      if (!(t >= 0.0) || !std::isfinite(t))
        throw DomainError("phantom: thickness must be finite and non-negative");
  }
};

/// ||a - b|| / ||a||
inline double normalized_rms_difference(const RealMap& a, const RealMap& b) {
  if (!a.grid().same_shape(b.grid()))
    throw ShapeError("normalized_rms_difference: grid mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

/// Procedural asymmetric specimen: 3-6 smooth lobes
///   w * s * max(0, 1 - |r - c|^2 / s^2)^{3/2}
/// with random centres, radii and weights, summed, clipped to a disk of
/// diameter `extent` and scaled to the requested peak thickness.
inline Phantom generate_phantom(std::uint64_t seed, const GridSpec& grid,
                                const PhantomOptions& opt = {}) {
  grid.validate();
  if (!(opt.extent > 0.0) || !(opt.peak_thickness > 0.0))
    throw DomainError("generate_phantom: extent and peak thickness must be positive");
  if (opt.min_lobes < 1 || opt.max_lobes < opt.min_lobes)
    throw DomainError("generate_phantom: invalid lobe count range");
  const double fov = static_cast<double>(std::min(grid.nx, grid.ny)) * grid.pixel_size;
  if (opt.extent > 0.75 * fov) {
    std::ostringstream os;
    os << "generate_phantom: extent " << opt.extent << " m leaves less than a 25% guard band in a "
       << fov << " m field of view";
    throw GeometryError(os.str());
  }

  struct Lobe {
    double cx, cy, radius, weight;
  };
  Rng rng(seed);
  const double r_support = 0.5 * opt.extent;
  const int n = rng.uniform_int(opt.min_lobes, opt.max_lobes);
  std::vector<Lobe> lobes;
  for (int k = 0; k < n; ++k) {
    const double rr = rng.uniform(opt.lobe_offset_min, opt.lobe_offset_max) * r_support;
    const double ang = rng.uniform(0.0, 2.0 * constants::pi);
    const double s = rng.uniform(opt.lobe_radius_min, opt.lobe_radius_max) * r_support;
    const double w = rng.uniform(0.6, 1.0);
    lobes.push_back({rr * std::cos(ang), rr * std::sin(ang), s, w});
  }

  RealMap t = RealMap::generate(grid, [&](double x, double y) {
    if (x * x + y * y > r_support * r_support)
      return 0.0;
    double sum = 0.0;
    for (const auto& l : lobes) {
      const double q = 1.0 - ((x - l.cx) * (x - l.cx) + (y - l.cy) * (y - l.cy)) / (l.radius * l.radius);
      if (q > 0.0)
        sum += l.weight * l.radius * std::pow(q, opt.lobe_exponent);
    }
    return sum;
  });
  const double peak = *std::max_element(t.storage().begin(), t.storage().end());
  if (!(peak > 0.0))
    throw GeometryError("generate_phantom: grid does not resolve the phantom");
  for (auto& v : t.storage())
    v *= opt.peak_thickness / peak;
  return Phantom{std::move(t), opt.inner_potential, opt.density_scale, opt.extent};
}

// ---------------------------------------------------------------- absorption

/// Inelastic mean free path table, interpolated log-log.
class MeanFreePathTable {
public:
  MeanFreePathTable() = default;
  explicit MeanFreePathTable(std::vector<std::pair<double, double>> rows) : rows_(std::move(rows)) {
    std::sort(rows_.begin(), rows_.end());
    if (rows_.size() < 2)
      throw DomainError("mean free path table needs at least two rows");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (!(rows_[i].first > 0.0) || !(rows_[i].second > 0.0))
        throw DomainError("mean free path table: energies and lengths must be positive");
      if (i > 0 && rows_[i].first == rows_[i - 1].first)
        throw DomainError("mean free path table: duplicate energy");
    }
  }

  /// Protein-like (water/ice-like) inelastic mean free paths, 100 eV-300 keV.
  static MeanFreePathTable builtin() {
    return MeanFreePathTable({{100.0, 0.9e-9},
                              {1e3, 3.5e-9},
                              {5e3, 12e-9},
                              {10e3, 22e-9},
                              {15e3, 30e-9},
                              {20e3, 38e-9},
                              {50e3, 85e-9},
                              {100e3, 150e-9},
                              {200e3, 250e-9},
                              {300e3, 320e-9}});
  }

  /// Two-column CSV: header line then `energy_eV,lambda_m` rows.
  static MeanFreePathTable read_csv(std::istream& is) {
    std::vector<std::pair<double, double>> rows;
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r')
        line.pop_back();
      if (line.empty() || line[0] == '#')
        continue;
      if (header) {
        header = false;
        if (line.find("energy") != std::string::npos)
          continue;
      }
      const auto cells = io::split(line, ',');
      if (cells.size() != 2)
        throw io::IoError("mean free path CSV: expected two columns, got '" + line + "'");
      rows.emplace_back(io::parse_double(cells[0]), io::parse_double(cells[1]));
    }
    return MeanFreePathTable(std::move(rows));
  }

  void write_csv(std::ostream& os) const {
    os << "energy_eV,lambda_m\n";
    for (const auto& [e, l] : rows_)
      os << io::format_double(e) << ',' << io::format_double(l) << '\n';
  }

  [[nodiscard]] double at(double energy_ev) const {
    if (rows_.empty())
      throw DomainError("mean free path table is empty");
    if (energy_ev < rows_.front().first || energy_ev > rows_.back().first) {
      std::ostringstream os;
      os << "mean free path: energy " << energy_ev << " eV outside table range ["
         << rows_.front().first << ", " << rows_.back().first << "]";
      throw DomainError(os.str());
    }
    auto hi = std::lower_bound(rows_.begin(), rows_.end(), energy_ev,
                               [](const auto& row, double e) { return row.first < e; });
    if (hi->first == energy_ev)
      return hi->second;
    auto lo = hi - 1;
    const double f = std::log(energy_ev / lo->first) / std::log(hi->first / lo->first);
    return std::exp(std::log(lo->second) + f * std::log(hi->second / lo->second));
  }

  [[nodiscard]] const std::vector<std::pair<double, double>>& rows() const { return rows_; }

private:
  std::vector<std::pair<double, double>> rows_;
};

struct AbsorptionModel {
  MeanFreePathTable table = MeanFreePathTable::builtin();
  bool enabled = false;
};

// ---------------------------------------------------------------- waves

/// Illumination just large enough to contain the specimen: a disk of the
/// given diameter with a half-cosine roll-off of width edge_fraction *
/// diameter inside the rim.
inline ComplexField illumination_disk(const GridSpec& grid, double diameter,
                                      double edge_fraction = 0.1) {
  grid.validate();
  if (!(diameter > 0.0))
    throw DomainError("illumination_disk: diameter must be positive");
  const double fov = static_cast<double>(std::min(grid.nx, grid.ny)) * grid.pixel_size;
  if (diameter > fov)
    throw GeometryError("illumination_disk: beam larger than the field of view");
  const double r_out = 0.5 * diameter;
  const double w = std::clamp(edge_fraction, 0.0, 1.0) * diameter;
  const double r_in = std::max(0.0, r_out - w);
  return ComplexField::generate(grid, [&](double x, double y) {
    const double r = std::hypot(x, y);
    if (r <= r_in)
      return Complex{1.0, 0.0};
    if (r >= r_out)
      return Complex{0.0, 0.0};
    return Complex{0.5 * (1.0 + std::cos(constants::pi * (r - r_in) / (r_out - r_in))), 0.0};
  });
}

/// Projected-potential exit wave:
///   psi = psi_in * exp(i sigma(E) V0 rho t) * exp(-t / (2 Lambda(E)))
/// with the absorption factor omitted when the model is disabled.
inline ComplexField exit_wave(const ComplexField& incident, const Phantom& phantom,
                              Orientation orientation, double energy_ev,
                              const AbsorptionModel& absorption) {
  if (!incident.grid().aligned_with(phantom.thickness.grid()))
    throw ShapeError("exit_wave: incident grid " + incident.grid().describe() +
                     " does not match phantom grid " + phantom.thickness.grid().describe());
  const double phase_per_m =
      interaction_constant(energy_ev) * phantom.inner_potential * phantom.density_scale;
  const double inv_two_mfp = absorption.enabled ? 0.5 / absorption.table.at(energy_ev) : 0.0;
  const RealMap t = phantom.oriented(orientation);
  ComplexField out(incident.grid());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (t[i] == 0.0) {
      out[i] = incident[i];
      continue;
    }
    const double ph = phase_per_m * t[i];
    out[i] = incident[i] * std::polar(std::exp(-t[i] * inv_two_mfp), ph);
  }
  return out;
}

} // namespace lowdose
