#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "confocal/errors.hpp"
#include "confocal/mode_basis.hpp"

namespace confocal {

// Thin complex screen at the cavity midplane: t(r) = amplitude(r) * exp(i phase(r)).
struct TransmissionMask {
  GridSpec grid;
  Eigen::MatrixXd amplitude;  // (i, j) as in FieldGrid
  Eigen::MatrixXd phase;      // radians; empty means identically zero
  std::string label;

  bool has_phase() const { return phase.size() != 0 && phase.cwiseAbs().maxCoeff() > 0.0; }

  Eigen::MatrixXcd transmittance() const {
    if (!has_phase()) return amplitude.cast<cplx>();
    Eigen::MatrixXcd t(amplitude.rows(), amplitude.cols());
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = std::polar(amplitude(i, j), phase(i, j));
    return t;
  }
};

inline void validate(const TransmissionMask& mask) {
  if (mask.amplitude.rows() != mask.grid.width || mask.amplitude.cols() != mask.grid.height) {
    throw GridMismatch("mask amplitude shape does not match its grid");
  }
  if (!mask.amplitude.allFinite()) throw ValueRangeError("mask amplitude contains non-finite values");
  if (mask.amplitude.minCoeff() < 0.0 || mask.amplitude.maxCoeff() > 1.0) {
    throw ValueRangeError("mask amplitude must lie in [0,1]");
  }
  if (mask.phase.size() != 0) {
    if (mask.phase.rows() != mask.grid.width || mask.phase.cols() != mask.grid.height) {
      throw GridMismatch("mask phase shape does not match its grid");
    }
    if (!mask.phase.allFinite()) throw ValueRangeError("mask phase contains non-finite values");
    const double pi = std::numbers::pi;
    if (mask.phase.minCoeff() <= -pi || mask.phase.maxCoeff() > pi) {
      throw ValueRangeError("mask phase must lie in (-pi, pi]");
    }
  }
}

inline TransmissionMask uniform_mask(const GridSpec& grid, double amplitude = 1.0, std::string label = "open") {
  TransmissionMask m{grid, Eigen::MatrixXd::Constant(grid.width, grid.height, amplitude), {}, std::move(label)};
  validate(m);
  return m;
}

// Smooth absorber: t = 1 - depth * exp(-2 |r - r0|^2 / radius^2).
inline TransmissionMask gaussian_absorber(const GridSpec& grid, double depth, double radius_um, double x0_um,
                                          double y0_um) {
  TransmissionMask m = uniform_mask(grid, 1.0, "gaussian absorber");
  for (int j = 0; j < grid.height; ++j)
    for (int i = 0; i < grid.width; ++i) {
      const double dx = grid.x_um(i) - x0_um, dy = grid.y_um(j) - y0_um;
      m.amplitude(i, j) = 1.0 - depth * std::exp(-2.0 * (dx * dx + dy * dy) / (radius_um * radius_um));
    }
  validate(m);
  return m;
}

// Samples `mask` onto `target` by nearest pixel, looking up the mask at r + offset so that
// the mask point `offset` lands on the cavity axis. Points beyond the mask take the value of
// the nearest edge pixel.
inline TransmissionMask resample(const TransmissionMask& mask, const GridSpec& target, double offset_x_um = 0.0,
                                 double offset_y_um = 0.0) {
  const GridSpec& src = mask.grid;
  auto index = [](double coord, int size, double pitch) {
    const double f = coord / pitch + 0.5 * (size - 1);
    return std::clamp(static_cast<int>(std::lround(f)), 0, size - 1);
  };
  TransmissionMask out{target, Eigen::MatrixXd(target.width, target.height), {}, mask.label};
  const bool phase = mask.phase.size() != 0;
  if (phase) out.phase.resize(target.width, target.height);
  for (int j = 0; j < target.height; ++j) {
    const int sj = index(target.y_um(j) + offset_y_um, src.height, src.pitch_um);
    for (int i = 0; i < target.width; ++i) {
      const int si = index(target.x_um(i) + offset_x_um, src.width, src.pitch_um);
      out.amplitude(i, j) = mask.amplitude(si, sj);
      if (phase) out.phase(i, j) = mask.phase(si, sj);
    }
  }
  return out;
}

inline bool contains(const GridSpec& grid, double x_um, double y_um) {
  return std::abs(x_um) <= grid.half_width_um() && std::abs(y_um) <= grid.half_height_um();
}

}  // namespace confocal
