#pragma once

#include <cmath>
#include <numbers>

#include "confocal/errors.hpp"

namespace confocal {

// Airy finesse of a resonator whose field returns with amplitude factor g after one round
// trip: F = pi*sqrt(g)/(1-g).
inline double finesse_from_roundtrip(double roundtrip_amplitude) {
  if (!(roundtrip_amplitude > 0.0)) {
    throw ValueRangeError("round-trip amplitude must be positive");
  }
  if (roundtrip_amplitude >= 1.0) {
    throw PassivityViolation("round-trip amplitude " + std::to_string(roundtrip_amplitude) +
                             " >= 1 describes a cavity with gain");
  }
  return std::numbers::pi * std::sqrt(roundtrip_amplitude) / (1.0 - roundtrip_amplitude);
}

// Inverse of finesse_from_roundtrip: the positive root of F s^2 + pi s - F = 0, squared.
inline double roundtrip_for_finesse(double finesse) {
  if (!(finesse > 0.0)) throw ValueRangeError("finesse must be positive");
  const double pi = std::numbers::pi;
  const double s = (-pi + std::sqrt(pi * pi + 4.0 * finesse * finesse)) / (2.0 * finesse);
  return s * s;
}

}  // namespace confocal
