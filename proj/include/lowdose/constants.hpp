#pragma once

#include <numbers>

namespace lowdose::constants {

// CODATA 2018 exact / recommended values, SI units.
inline constexpr double planck = 6.62607015e-34;          // J s
inline constexpr double electron_mass = 9.1093837015e-31; // kg
inline constexpr double elementary_charge = 1.602176634e-19; // C
inline constexpr double speed_of_light = 299792458.0;    // m / s

inline constexpr double pi = std::numbers::pi;

} // namespace lowdose::constants
