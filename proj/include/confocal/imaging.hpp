#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "confocal/cavity_solver.hpp"
#include "confocal/errors.hpp"
#include "confocal/overlap.hpp"

namespace confocal {

struct ImageGrid {
  GridSpec grid;
  Eigen::MatrixXd intensity;  // (i, j) as in FieldGrid

  ImageGrid() = default;
  explicit ImageGrid(const GridSpec& g, double value = 0.0)
      : grid(g), intensity(Eigen::MatrixXd::Constant(g.width, g.height, value)) {}
};

// K(r, r') = sum_k b_k^2 u_k(r) u_k(r') over one parity family. With all b_k = 1 this is the
// single-pass kernel; the weighted variant uses the Lorentzian buildup of each mode at the
// family resonance.
class ImagingKernel {
 public:
  ImagingKernel(const ModeTables& tables, Family family, bool weighted = false)
      : tables_{ModeBasis(tables.basis.geometry(), tables.basis.max_order(), family), tables.grid, tables.x, tables.y},
        family_(family) {
    if (family == Family::all) throw ValueRangeError("imaging kernel needs the even or the odd family");
    weights_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(tables_.size()));
    if (weighted) {
      const CavityGeometry& geo = tables_.basis.geometry();
      const double fsr = fsr_hz(geo);
      const double kappa = fsr / finesse_from_roundtrip(roundtrip_amplitude(geo));
      const Eigen::VectorXcd p = roundtrip_phases(tables_.basis);
      for (Eigen::Index k = 0; k < weights_.size(); ++k) {
        const double delta = std::arg(p(k)) / (2.0 * std::numbers::pi) * fsr;
        weights_(k) = 1.0 / std::sqrt(1.0 + 4.0 * delta * delta / (kappa * kappa));
      }
    }
  }

  const ModeTables& tables() const { return tables_; }
  Family family() const { return family_; }
  const Eigen::VectorXd& weights() const { return weights_; }

  // Coherent point response K(., r0).
  FieldGrid point_response(Point r0) const {
    const auto& modes = tables_.basis.modes();
    std::vector<double> px(tables_.basis.max_order() + 1), py(tables_.basis.max_order() + 1);
    tables_.basis.mode_profile(r0.x_um, px);
    tables_.basis.mode_profile(r0.y_um, py);
    Eigen::VectorXcd c(modes.size());
    for (std::size_t k = 0; k < modes.size(); ++k) {
      c(k) = weights_(k) * weights_(k) * px[modes[k].n] * py[modes[k].m];
    }
    return synthesize(tables_, c);
  }

 private:
  ModeTables tables_;
  Family family_;
  Eigen::VectorXd weights_;
};

inline ImagingKernel cavity_psf_kernel(const ModeTables& tables, Family family, bool weighted = false) {
  check_resolution(tables.basis, tables.grid);
  return ImagingKernel(tables, family, weighted);
}

// Incoherent image I_out(r) = sum_r' |K(r, r')|^2 |t(r')|^2 I_in(r') dA. Expanding |K|^2 in
// modes turns this into sum_kl u_k(r) W_kl u_l(r) with W the overlap matrix of |t|^2 I_in.
inline ImageGrid image_through_cavity(const TransmissionMask& mask, const ImageGrid& illumination,
                                      const ImagingKernel& kernel, bool allow_resample = false) {
  const ModeTables& t = kernel.tables();
  if (!(illumination.grid == t.grid)) throw GridMismatch("illumination grid differs from the kernel grid");
  if (illumination.intensity.minCoeff() < 0.0) throw ValueRangeError("illumination must be non-negative");
  validate(mask);
  TransmissionMask m = mask;
  if (!(m.grid == t.grid)) {
    if (!allow_resample) throw GridMismatch("mask grid differs from the kernel grid; request resampling explicitly");
    m = resample(mask, t.grid);
  }
  const Eigen::MatrixXd source = m.amplitude.cwiseAbs2().cwiseProduct(illumination.intensity);
  Eigen::MatrixXd w = weighted_overlap(source, t);
  const Eigen::VectorXd b2 = kernel.weights().cwiseAbs2();
  w = b2.asDiagonal() * w * b2.asDiagonal();
  ImageGrid out(t.grid);
  out.intensity = sandwich_diagonal(t, w).cwiseMax(0.0);
  return out;
}

struct ResolutionFov {
  double resolution_um = 0.0;  // FWHM of the on-axis point response intensity
  double fov_um = 0.0;         // diameter where point-response energy falls to half its axis value
};

// Evaluated along the x axis with 1D mode profiles. The point-response energy at r0 is
// sum_k u_k(r0)^2; it is taken over both parities so that the even-family self-image at
// the axis (where the twin spots coincide) does not double the reference value.
inline ResolutionFov resolution_and_fov(const ModeBasis& basis) {
  const int orders = basis.max_order() + 1;
  std::vector<double> p0(orders), px(orders);
  basis.mode_profile(0.0, p0);

  auto response = [&](double x) {
    basis.mode_profile(x, px);
    double k = 0.0;
    for (const auto& mode : basis.modes())
      if (in_family(mode.n, mode.m, Family::even)) k += px[mode.n] * p0[mode.m] * p0[mode.n] * p0[mode.m];
    return k * k;
  };
  auto energy = [&](double x) {
    basis.mode_profile(x, px);
    double e = 0.0;
    for (int n = 0; n < orders; ++n)
      for (int m = 0; n + m < orders; ++m) e += px[n] * px[n] * p0[m] * p0[m];
    return e;
  };
  auto bisect = [](auto&& fn, double inside, double outside, double level) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (inside + outside);
      (fn(mid) >= level ? inside : outside) = mid;
    }
    return 0.5 * (inside + outside);
  };

  const double w0 = basis.waist_um();
  const double step = w0 / (64.0 * std::sqrt(static_cast<double>(orders)));
  ResolutionFov r;
  const double k0 = response(0.0);
  double x = step;
  while (response(x) >= 0.5 * k0) x += step;
  r.resolution_um = 2.0 * bisect(response, x - step, x, 0.5 * k0);

  const double e0 = energy(0.0);
  double outer = required_half_extent_um(basis) + 4.0 * w0;
  while (energy(outer - step) < 0.5 * e0) outer -= step;
  r.fov_um = 2.0 * bisect(energy, outer - step, outer, 0.5 * e0);
  return r;
}

struct DarkFeature {
  Point center;
  int pixels = 0;
};

// Connected regions where image/reference < threshold, restricted to points where the
// reference is at least `support` of its maximum (so the field roll-off is not counted).
// The even-family reference peaks on axis, where each point coincides with its twin, at
// about twice its off-axis level; half-maximum support would cut into the field of view.
inline std::vector<DarkFeature> find_dark_features(const ImageGrid& image, const ImageGrid& reference,
                                                   double threshold = 0.8, double support = 0.25) {
  if (!(image.grid == reference.grid)) throw GridMismatch("image and reference grids differ");
  const GridSpec& g = image.grid;
  const double rmax = reference.intensity.maxCoeff();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> dark(g.width, g.height);
  for (int j = 0; j < g.height; ++j)
    for (int i = 0; i < g.width; ++i) {
      const double ref = reference.intensity(i, j);
      dark(i, j) = ref >= support * rmax && image.intensity(i, j) < threshold * ref;
    }
  std::vector<DarkFeature> out;
  Eigen::MatrixXi label = Eigen::MatrixXi::Zero(g.width, g.height);
  std::vector<std::pair<int, int>> stack;
  for (int j0 = 0; j0 < g.height; ++j0)
    for (int i0 = 0; i0 < g.width; ++i0) {
      if (!dark(i0, j0) || label(i0, j0) != 0) continue;
      DarkFeature f;
      double sx = 0.0, sy = 0.0;
      label(i0, j0) = static_cast<int>(out.size()) + 1;
      stack.push_back({i0, j0});
      while (!stack.empty()) {
        const auto [i, j] = stack.back();
        stack.pop_back();
        ++f.pixels;
        sx += g.x_um(i);
        sy += g.y_um(j);
        for (const auto [di, dj] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int a = i + di, b = j + dj;
          if (a < 0 || b < 0 || a >= g.width || b >= g.height || !dark(a, b) || label(a, b) != 0) continue;
          label(a, b) = label(i0, j0);
          stack.push_back({a, b});
        }
      }
      f.center = {sx / f.pixels, sy / f.pixels};
      out.push_back(f);
    }
  return out;
}

}  // namespace confocal
