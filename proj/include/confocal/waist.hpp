#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "confocal/errors.hpp"
#include "confocal/mode_basis.hpp"

namespace confocal {

struct Point {
  double x_um = 0.0;
  double y_um = 0.0;
};

struct WaistMeasurement {
  double waist_um = 0.0;  // geometric mean of the principal-axis values
  double major_um = 0.0;
  double minor_um = 0.0;
  Point center;
};

namespace detail {

inline Point centroid(const FieldGrid& f, const Eigen::MatrixXd& intensity, const std::optional<Point>& half_plane) {
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (int j = 0; j < f.grid.height; ++j)
    for (int i = 0; i < f.grid.width; ++i) {
      const double x = f.grid.x_um(i), y = f.grid.y_um(j);
      if (half_plane && x * half_plane->x_um + y * half_plane->y_um <= 0.0) continue;
      const double w = intensity(i, j);
      sw += w;
      sx += w * x;
      sy += w * y;
    }
  if (!(sw > 0.0)) throw DegenerateInput("field carries no power in the measured region");
  return {sx / sw, sy / sw};
}

}  // namespace detail

// Second-moment (D4-sigma) width of the intensity's central lobe. The lobe extends out to
// the first radial intensity minimum that is followed by a sidelobe rising more than 1e-3 of
// the peak; profiles without such a minimum (Gaussian, flat-top) use the whole field, where
// the value equals the 1/e^2 radius of a Gaussian.
//
// `around` selects the lobe of a parity twin: only the half-plane facing that point is used.
inline WaistMeasurement measure_waist(const FieldGrid& field, const std::optional<Point>& around = std::nullopt) {
  const GridSpec& g = field.grid;
  const Eigen::MatrixXd intensity = field.intensity();
  const double total = intensity.sum();
  if (!(total > 0.0)) throw DegenerateInput("cannot measure the waist of a zero field");

  double edge = 0.0;
  for (int j = 0; j < g.height; ++j)
    for (int i = 0; i < g.width; ++i)
      if (i < 2 || j < 2 || i >= g.width - 2 || j >= g.height - 2) edge += intensity(i, j);
  if (edge >= 0.01 * total) {
    throw ClippingError("field is clipped: " + std::to_string(100.0 * edge / total) +
                        "% of the power lies in the outermost 2-pixel ring");
  }

  std::optional<Point> half_plane;
  if (around && std::hypot(around->x_um, around->y_um) > g.pitch_um) half_plane = around;
  auto included = [&](double x, double y) {
    return !half_plane || x * half_plane->x_um + y * half_plane->y_um > 0.0;
  };
  const int bins = static_cast<int>(std::hypot(g.half_width_um(), g.half_height_um()) / g.pitch_um) + 2;

  // Radius of the central lobe about c: the first radial minimum of the azimuthally averaged
  // profile that is followed by a sidelobe rising more than 1e-3 of the peak.
  auto lobe_radius = [&](Point c) {
    std::vector<double> sum(bins, 0.0), count(bins, 0.0);
    for (int j = 0; j < g.height; ++j)
      for (int i = 0; i < g.width; ++i) {
        const double x = g.x_um(i), y = g.y_um(j);
        if (!included(x, y)) continue;
        const int b = static_cast<int>(std::hypot(x - c.x_um, y - c.y_um) / g.pitch_um);
        if (b < bins) {
          sum[b] += intensity(i, j);
          count[b] += 1.0;
        }
      }
    std::vector<double> profile;
    for (int b = 0; b < bins && count[b] > 0.0; ++b) profile.push_back(sum[b] / count[b]);
    double peak = 0.0;
    for (double p : profile) peak = std::max(peak, p);
    for (std::size_t b = 1; b + 1 < profile.size(); ++b) {
      if (!(profile[b] < profile[b - 1] && profile[b] <= profile[b + 1])) continue;
      double rise = 0.0;
      for (std::size_t k = b + 1; k < profile.size(); ++k) rise = std::max(rise, profile[k] - profile[b]);
      if (rise > 1e-3 * peak) return (static_cast<double>(b) + 0.5) * g.pitch_um;
    }
    return std::numeric_limits<double>::infinity();
  };

  // Moments of the lobe; the lobe is re-centred on its own centroid a few times because the
  // half-plane centroid of an off-axis spot is pulled by its tails.
  Point c = detail::centroid(field, intensity, half_plane);
  double cut_um = std::numeric_limits<double>::infinity();
  double sw = 0.0, mx = c.x_um, my = c.y_um;
  for (int pass = 0; pass < 4; ++pass) {
    cut_um = lobe_radius(c);
    double sx = 0.0, sy = 0.0;
    sw = 0.0;
    for (int j = 0; j < g.height; ++j)
      for (int i = 0; i < g.width; ++i) {
        const double x = g.x_um(i), y = g.y_um(j);
        if (!included(x, y) || std::hypot(x - c.x_um, y - c.y_um) >= cut_um) continue;
        sw += intensity(i, j);
        sx += intensity(i, j) * x;
        sy += intensity(i, j) * y;
      }
    if (!(sw > 0.0)) throw DegenerateInput("central lobe carries no power");
    mx = sx / sw;
    my = sy / sw;
    if (!std::isfinite(cut_um) || std::hypot(mx - c.x_um, my - c.y_um) < 1e-3 * g.pitch_um) break;
    c = {mx, my};
  }
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int j = 0; j < g.height; ++j)
    for (int i = 0; i < g.width; ++i) {
      const double x = g.x_um(i), y = g.y_um(j);
      if (!included(x, y) || std::hypot(x - c.x_um, y - c.y_um) >= cut_um) continue;
      const double w = intensity(i, j);
      sxx += w * (x - mx) * (x - mx);
      syy += w * (y - my) * (y - my);
      sxy += w * (x - mx) * (y - my);
    }
  Eigen::Matrix2d cov;
  cov << sxx / sw, sxy / sw, sxy / sw, syy / sw;
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues();
  WaistMeasurement out;
  out.major_um = 2.0 * std::sqrt(std::max(ev(1), 0.0));
  out.minor_um = 2.0 * std::sqrt(std::max(ev(0), 0.0));
  out.waist_um = std::sqrt(out.major_um * out.minor_um);
  out.center = {mx, my};
  return out;
}

inline double effective_waist(const FieldGrid& field, const std::optional<Point>& around = std::nullopt) {
  return measure_waist(field, around).waist_um;
}

}  // namespace confocal
