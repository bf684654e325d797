#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lowdose/errors.hpp"

namespace lowdose {

using Complex = std::complex<double>;

/// Sampling of a square-pixel plane. Pixel (ix, iy) sits at physical
/// coordinates ((ix - nx/2) * pixel_size, (iy - ny/2) * pixel_size), so the
/// optical axis passes through pixel (nx/2, ny/2).
struct GridSpec {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double pixel_size = 0.0; // meters

  [[nodiscard]] std::size_t size() const { return nx * ny; }
  [[nodiscard]] double x(std::size_t ix) const {
    return (static_cast<double>(ix) - static_cast<double>(nx / 2)) * pixel_size;
  }
  [[nodiscard]] double y(std::size_t iy) const {
    return (static_cast<double>(iy) - static_cast<double>(ny / 2)) * pixel_size;
  }
  [[nodiscard]] double width() const { return static_cast<double>(nx) * pixel_size; }

  void validate() const {
    if (nx == 0 || ny == 0)
      throw DomainError("grid dimensions must be positive");
    if (!(pixel_size > 0.0) || !std::isfinite(pixel_size))
      throw DomainError("grid pixel size must be positive and finite");
  }

  [[nodiscard]] bool same_shape(const GridSpec& o) const { return nx == o.nx && ny == o.ny; }

  /// Same dimensions and pixel size to a relative tolerance.
  [[nodiscard]] bool aligned_with(const GridSpec& o, double rel_tol = 1e-9) const {
    return same_shape(o) &&
           std::abs(pixel_size - o.pixel_size) <= rel_tol * std::max(pixel_size, o.pixel_size);
  }

  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    os << nx << "x" << ny << " @ " << pixel_size << " m";
    return os.str();
  }
};

/// A sampled 2D map on a GridSpec, row-major with y as the slow index.
template <typename T>
class Map2D {
public:
  using value_type = T;

  Map2D() = default;
  explicit Map2D(GridSpec grid, T fill = T{}) : grid_(grid), values_(grid.size(), fill) {
    grid_.validate();
  }
  Map2D(GridSpec grid, std::vector<T> values) : grid_(grid), values_(std::move(values)) {
    grid_.validate();
    if (values_.size() != grid_.size())
      throw ShapeError("value count does not match grid " + grid_.describe());
  }

  [[nodiscard]] const GridSpec& grid() const { return grid_; }
  [[nodiscard]] std::size_t nx() const { return grid_.nx; }
  [[nodiscard]] std::size_t ny() const { return grid_.ny; }
  [[nodiscard]] double pixel_size() const { return grid_.pixel_size; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }

  T& operator()(std::size_t ix, std::size_t iy) { return values_[iy * grid_.nx + ix]; }
  const T& operator()(std::size_t ix, std::size_t iy) const { return values_[iy * grid_.nx + ix]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  [[nodiscard]] std::span<T> values() { return values_; }
  [[nodiscard]] std::span<const T> values() const { return values_; }
  [[nodiscard]] std::vector<T>& storage() { return values_; }
  [[nodiscard]] const std::vector<T>& storage() const { return values_; }

  /// Returns a copy with a different pixel size but identical samples.
  [[nodiscard]] Map2D with_pixel_size(double pixel) const {
    GridSpec g = grid_;
    g.pixel_size = pixel;
    return Map2D(g, values_);
  }

  template <typename F>
  static Map2D generate(GridSpec grid, F&& f) {
    Map2D m(grid);
    for (std::size_t iy = 0; iy < grid.ny; ++iy)
      for (std::size_t ix = 0; ix < grid.nx; ++ix)
        m(ix, iy) = f(grid.x(ix), grid.y(iy));
    return m;
  }

private:
  GridSpec grid_{};
  std::vector<T> values_;
};

using ComplexField = Map2D<Complex>;
using RealMap = Map2D<double>;

inline double total_intensity(const ComplexField& f) {
  double s = 0.0;
  for (const auto& v : f.values())
    s += std::norm(v);
  return s;
}

inline RealMap intensity(const ComplexField& f) {
  RealMap out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i)
    out[i] = std::norm(f[i]);
  return out;
}

inline bool all_finite(const ComplexField& f) {
  return std::all_of(f.values().begin(), f.values().end(), [](const Complex& v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  });
}

inline void require_finite(const ComplexField& f, const char* what) {
  if (!all_finite(f))
    throw DomainError(std::string(what) + ": field contains non-finite amplitudes");
}

inline void require_aligned(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!a.aligned_with(b))
    throw ShapeError(std::string(what) + ": grid mismatch " + a.describe() + " vs " + b.describe());
}

/// RMS of (a - e^{i phi} b) with phi chosen to minimise it, normalised by the
/// RMS of a. Fields compared this way are equal up to a global phase.
inline double relative_rms_mod_phase(const ComplexField& a, const ComplexField& b) {
  if (!a.grid().same_shape(b.grid()))
    throw ShapeError("relative_rms_mod_phase: grid mismatch");
  Complex overlap{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i)
    overlap += a[i] * std::conj(b[i]);
  const Complex phase = std::abs(overlap) > 0.0 ? overlap / std::abs(overlap) : Complex{1.0, 0.0};
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - phase * b[i]);
    den += std::norm(a[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Plain RMS of the pointwise difference (no phase freedom).
inline double rms_difference(const ComplexField& a, const ComplexField& b) {
  if (!a.grid().same_shape(b.grid()))
    throw ShapeError("rms_difference: grid mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::norm(a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

} // namespace lowdose
