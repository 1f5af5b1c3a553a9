#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "confocal/errors.hpp"
#include "confocal/finesse.hpp"

namespace confocal {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// Symmetric two-mirror resonator. Both mirrors share the radius of curvature; the two
// coatings may differ.
struct CavityGeometry {
  double mirror_radius_mm = 10.0;
  double cavity_length_mm = 10.0;
  double reflectivity_upper = 0.997;
  double reflectivity_lower = 0.977;
  double wavelength_nm = 780.0;
  double excess_loss_per_roundtrip = 0.0;  // intensity fraction lost per round trip beyond coatings
  double sample_tilt_deg = 0.0;            // metadata only; the mask is a thin planar screen

  double length_m() const { return cavity_length_mm * 1e-3; }
  double wavelength_m() const { return wavelength_nm * 1e-9; }
};

// g = 1 - L/R for the symmetric cavity.
inline double stability_parameter(const CavityGeometry& geo) {
  return 1.0 - geo.cavity_length_mm / geo.mirror_radius_mm;
}

inline void validate(const CavityGeometry& geo) {
  if (!(geo.cavity_length_mm > 0.0)) {
    throw InvalidGeometry("cavity length must be positive, got " +
                          std::to_string(geo.cavity_length_mm) + " mm");
  }
  if (!(geo.mirror_radius_mm > 0.0)) {
    throw InvalidGeometry("mirror radius must be positive, got " +
                          std::to_string(geo.mirror_radius_mm) + " mm");
  }
  if (!(geo.wavelength_nm > 0.0)) throw InvalidGeometry("wavelength must be positive");
  for (double r : {geo.reflectivity_upper, geo.reflectivity_lower}) {
    if (!(r > 0.0 && r < 1.0)) {
      throw InvalidGeometry("mirror reflectivity must lie in (0,1), got " + std::to_string(r));
    }
  }
  if (!(geo.excess_loss_per_roundtrip >= 0.0 && geo.excess_loss_per_roundtrip < 1.0)) {
    throw InvalidGeometry("excess round-trip loss must lie in [0,1)");
  }
}

// Throws unless g^2 < 1 with a margin that keeps the waist finite in double precision.
inline double require_stable(const CavityGeometry& geo) {
  validate(geo);
  const double g = stability_parameter(geo);
  if (!(1.0 - std::abs(g) > 1e-9)) {
    throw UnstableCavity("cavity with g = " + std::to_string(g) +
                         " is unstable or too close to the stability edge");
  }
  return g;
}

inline double fsr_hz(const CavityGeometry& geo) {
  if (!(geo.cavity_length_mm > 0.0)) {
    throw InvalidGeometry("cavity length must be positive, got " +
                          std::to_string(geo.cavity_length_mm) + " mm");
  }
  return kSpeedOfLight / (2.0 * geo.length_m());
}

// acos(g)/pi: transverse spacing in units of the FSR. Signed g, so L > R gives > 1/2.
inline double gouy_fraction(const CavityGeometry& geo) {
  return std::acos(require_stable(geo)) / std::numbers::pi;
}

// TEM00 1/e^2 intensity radius at the midplane.
inline double fundamental_waist_um(const CavityGeometry& geo) {
  const double g = require_stable(geo);
  const double w0_sq =
      geo.length_m() * geo.wavelength_m() / (2.0 * std::numbers::pi) * std::sqrt((1.0 + g) / (1.0 - g));
  return std::sqrt(w0_sq) * 1e6;
}

inline double transverse_mode_spacing_hz(const CavityGeometry& geo) {
  return fsr_hz(geo) * gouy_fraction(geo);
}

inline double mode_frequency_hz(long q, int n, int m, const CavityGeometry& geo) {
  if (q < 1 || n < 0 || m < 0) throw ValueRangeError("mode indices require q >= 1 and n, m >= 0");
  return fsr_hz(geo) * (static_cast<double>(q) + (n + m + 1) * gouy_fraction(geo));
}

// Frequency of HG(n,m) of the same longitudinal order relative to TEM00, in FSR units.
// Kept separate from mode_frequency_hz so that offsets do not pass through ~384 THz values.
inline double transverse_offset_fsr(int n, int m, const CavityGeometry& geo) {
  return (n + m) * gouy_fraction(geo);
}

inline double laser_frequency_hz(const CavityGeometry& geo) {
  return kSpeedOfLight / geo.wavelength_m();
}

// Longitudinal index of the TEM00 resonance nearest the laser frequency.
inline long longitudinal_index(const CavityGeometry& geo) {
  return std::lround(laser_frequency_hz(geo) / fsr_hz(geo));
}

// Coating-limited round-trip field amplitude sqrt(R1 R2 (1 - excess)).
inline double roundtrip_amplitude(const CavityGeometry& geo) {
  return std::sqrt(geo.reflectivity_upper * geo.reflectivity_lower * (1.0 - geo.excess_loss_per_roundtrip));
}

// Intensity loss fraction that brings the bare-cavity finesse down to `finesse`.
inline double excess_loss_for_finesse(const CavityGeometry& geo, double finesse) {
  const double target = roundtrip_for_finesse(finesse);
  const double coating_sq = geo.reflectivity_upper * geo.reflectivity_lower;
  const double loss = 1.0 - target * target / coating_sq;
  if (loss < 0.0) {
    throw ValueRangeError("finesse " + std::to_string(finesse) + " exceeds the coating limit");
  }
  return loss;
}

namespace presets {

// Bare confocal cavity calibrated to the measured finesse of 208.
inline CavityGeometry science_cavity() {
  CavityGeometry geo;
  geo.excess_loss_per_roundtrip = excess_loss_for_finesse(geo, 208.0);
  return geo;
}

// Same cavity with the sapphire substrate inserted, calibrated to finesse 181.
inline CavityGeometry science_cavity_with_substrate() {
  CavityGeometry geo;
  geo.excess_loss_per_roundtrip = excess_loss_for_finesse(geo, 181.0);
  geo.sample_tilt_deg = 45.0;
  return geo;
}

}  // namespace presets

}  // namespace confocal
