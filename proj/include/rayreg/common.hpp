#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace rayreg {

// Error hierarchy. Every failure mode carries a message naming the
// offending quantity; catch sites usually only distinguish the type.

struct InvalidParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pose outside the valid imaging configuration (e.g. t_z not in (0, D)).
struct PoseError : InvalidParameterError {
  using InvalidParameterError::InvalidParameterError;
};

// Point at or behind the X-ray source cannot be projected.
struct BehindSourceError : PoseError {
  using PoseError::PoseError;
};

// Malformed file, header/payload mismatch, unknown dtype.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatch; message names the layer.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Volume with no attenuating voxels where an object is required.
struct EmptyObjectError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimization or training produced a non-finite value.
struct DivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Regressor bank has no model for the requested zone.
struct CoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
inline double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

// Wraps an angle in degrees into [-180, 180).
inline double normalize_angle_deg(double deg) {
  double a = std::fmod(deg + 180.0, 360.0);
  if (a < 0.0) a += 360.0;
  return a - 180.0;
}

}  // namespace rayreg
