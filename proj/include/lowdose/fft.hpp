#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "lowdose/field.hpp"

namespace lowdose::fft {

enum class Direction { Forward, Backward };

namespace detail {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are cached per (nx, ny, direction) and made with
// FFTW_UNALIGNED so they can run on any std::vector storage.
class PlanCache {
public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t nx, std::size_t ny, Direction dir) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(nx, ny, dir == Direction::Forward);
    if (auto it = plans_.find(key); it != plans_.end())
      return it->second;
    std::vector<Complex> scratch(nx * ny);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), p, p,
                                      dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, plan);
    return plan;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_)
      fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, bool>, fftw_plan> plans_;
};

} // namespace detail

/// Unnormalised in-place 2D DFT over row-major data (y slow).
inline void transform(std::vector<Complex>& data, std::size_t nx, std::size_t ny, Direction dir) {
  fftw_plan plan = detail::PlanCache::instance().get(nx, ny, dir);
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, p, p);
}

/// Cyclic shift moving index 0 to index n/2 (numpy fftshift).
template <typename T>
void fftshift(std::vector<T>& data, std::size_t nx, std::size_t ny) {
  std::vector<T> out(data.size());
  const std::size_t sx = nx / 2;
  const std::size_t sy = ny / 2;
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix)
      out[((iy + sy) % ny) * nx + (ix + sx) % nx] = data[iy * nx + ix];
  data.swap(out);
}

/// Inverse of fftshift for odd sizes; identical to it for even sizes.
template <typename T>
void ifftshift(std::vector<T>& data, std::size_t nx, std::size_t ny) {
  std::vector<T> out(data.size());
  const std::size_t sx = nx / 2;
  const std::size_t sy = ny / 2;
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix)
      out[iy * nx + ix] = data[((iy + sy) % ny) * nx + (ix + sx) % nx];
  data.swap(out);
}

/// DFT of a field whose origin sits at the grid centre, returning a spectrum
/// whose zero frequency also sits at the centre. Scaled by 1/sqrt(nx*ny) so the
/// transform is unitary.
inline std::vector<Complex> centered_unitary(std::vector<Complex> data, std::size_t nx,
                                             std::size_t ny, Direction dir) {
  ifftshift(data, nx, ny);
  transform(data, nx, ny, dir);
  fftshift(data, nx, ny);
  const double scale = 1.0 / std::sqrt(static_cast<double>(nx * ny));
  for (auto& v : data)
    v *= scale;
  return data;
}

} // namespace lowdose::fft
