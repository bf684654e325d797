#pragma once

#include <stdexcept>
#include <string>

namespace lowdose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of a physical formula (e.g. E <= 0).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Two grids that must agree in dimensions or pixel size do not.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Sampling or geometry does not support the requested operation
/// (aliasing, field of view too small, target outside the screen).
class GeometryError : public Error {
public:
  using Error::Error;
};

/// The diffractive element cannot be computed from the given waves.
class SynthesisError : public Error {
public:
  using Error::Error;
};

/// Configuration rejected before any computation.
class ValidationError : public Error {
public:
  using Error::Error;
};

} // namespace lowdose
