#pragma once

#include <cmath>
#include <string>

#include "lowdose/constants.hpp"
#include "lowdose/errors.hpp"

namespace lowdose {

/// Relativistic de Broglie wavelength (m) of an electron accelerated
/// through `energy_ev` volts.
inline double electron_wavelength(double energy_ev) {
  using namespace constants;
  if (!(energy_ev > 0.0) || !std::isfinite(energy_ev))
    throw DomainError("electron energy must be positive, got " + std::to_string(energy_ev) + " eV");
  const double ev = elementary_charge * energy_ev;
  const double rest = electron_mass * speed_of_light * speed_of_light;
  return planck / std::sqrt(2.0 * electron_mass * ev * (1.0 + ev / (2.0 * rest)));
}

struct BeamParameters {
  double energy_ev = 0.0;
  double wavelength = 0.0;

  static BeamParameters from_energy(double energy_ev) {
    return BeamParameters{energy_ev, electron_wavelength(energy_ev)};
  }
};

} // namespace lowdose
