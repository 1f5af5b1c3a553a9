#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "confocal/cavity_solver.hpp"
#include "confocal/errors.hpp"
#include "confocal/lineshape.hpp"

namespace confocal {

struct SpectrumPeak {
  double center_hz = 0.0;
  double height = 0.0;
  double fwhm_hz = 0.0;
};

// Transmission versus frequency offset from the reference resonance of the basis (the
// lowest-order mode), so values never pass through the ~384 THz absolute frequency.
struct Spectrum {
  std::vector<double> frequency_hz;
  std::vector<double> transmission;
  std::vector<SpectrumPeak> peaks;
};

struct PeakFit {
  double center_hz = 0.0;
  double fwhm_hz = 0.0;
  double height = 0.0;
  double offset = 0.0;
  double center_sigma_hz = 0.0;
  double fwhm_sigma_hz = 0.0;
  double height_sigma = 0.0;
  double residual_rms = 0.0;
};

struct FrequencyRange {
  double start_hz = 0.0;
  double stop_hz = 0.0;
};

enum class SpectrumModel {
  automatic,  // eigenmodes up to the dense-solve limit, bare modes beyond it
  diagonal,   // bare modes with the mask's diagonal round-trip element
  eigenmodes, // eigenmodes of the full round-trip operator
};

namespace detail {

inline std::vector<double> linear_axis(const FrequencyRange& r, int bins) {
  if (bins < 2) throw ValueRangeError("spectrum needs at least 2 bins");
  if (!(r.stop_hz > r.start_hz)) throw ValueRangeError("frequency range must be increasing");
  std::vector<double> f(bins);
  const double step = (r.stop_hz - r.start_hz) / (bins - 1);
  for (int i = 0; i < bins; ++i) f[i] = r.start_hz + i * step;
  return f;
}

}  // namespace detail

// Lines excited by a pump: per mode (diagonal) or per eigen-cluster of the round-trip
// operator, each with height |pump weight|^2 T1 T2 / (1 - |lambda|)^2 and width FSR/F(|lambda|).
inline std::vector<LorentzianLine> spectral_lines(const RoundTripOperator& op, const Eigen::VectorXcd& pump_coeffs,
                                                  SpectrumModel model = SpectrumModel::automatic) {
  const CavityGeometry& geo = op.geometry;
  const double fsr = fsr_hz(geo);
  const double t1t2 = (1.0 - geo.reflectivity_upper) * (1.0 - geo.reflectivity_lower);
  const double total = pump_coeffs.squaredNorm();
  std::vector<LorentzianLine> lines;
  if (!(total > 0.0)) return lines;
  auto add = [&](cplx lambda, double weight) {
    const double a = std::abs(lambda);
    if (a >= 1.0) throw PassivityViolation("round-trip eigenvalue with modulus " + std::to_string(a) + " >= 1");
    if (a < 1e-6 || weight <= 1e-15 * total) return;
    lines.push_back({std::arg(lambda) / (2.0 * std::numbers::pi) * fsr, fsr / finesse_from_roundtrip(a),
                     weight * t1t2 / ((1.0 - a) * (1.0 - a))});
  };
  if (model == SpectrumModel::automatic) {
    model = op.matrix.rows() <= 2000 ? SpectrumModel::eigenmodes : SpectrumModel::diagonal;
  }
  if (model == SpectrumModel::diagonal) {
    for (Eigen::Index k = 0; k < op.matrix.rows(); ++k) add(op.matrix(k, k), std::norm(pump_coeffs(k)));
  } else {
    const Decomposition d = decompose(op.matrix, pump_coeffs);
    for (const auto& c : d.clusters) add(c.eigenvalue, c.weight());
  }
  return lines;
}

// Local maxima that are resolved: each drops below half its height on both sides before a
// higher point (or the axis end) is reached. `threshold` is relative to the global maximum.
inline std::vector<SpectrumPeak> find_peaks(const std::vector<double>& f, const std::vector<double>& y,
                                            double threshold = 1e-3) {
  std::vector<SpectrumPeak> peaks;
  const std::size_t n = y.size();
  if (n < 3) return peaks;
  const double top = *std::max_element(y.begin(), y.end());
  if (!(top > 0.0)) return peaks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(y[i] > y[i - 1] && y[i] >= y[i + 1]) || y[i] < threshold * top) continue;
    const double half = 0.5 * y[i];
    auto side = [&](int dir) -> std::optional<double> {
      for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(i) + dir; k >= 0 && k < static_cast<std::ptrdiff_t>(n);
           k += dir) {
        if (y[k] > y[i]) return std::nullopt;
        if (y[k] < half) {
          const double t = (y[k - dir] - half) / (y[k - dir] - y[k]);
          return f[k - dir] + t * (f[k] - f[k - dir]);
        }
      }
      return std::nullopt;
    };
    const auto lo = side(-1), hi = side(+1);
    if (!lo || !hi) continue;
    // Parabolic refinement of the apex.
    const double a = y[i - 1], b = y[i], c = y[i + 1];
    const double denom = a - 2.0 * b + c;
    const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
    peaks.push_back({f[i] + shift * (f[i + 1] - f[i]), b, *hi - *lo});
  }
  return peaks;
}

inline Spectrum evaluate_spectrum(const LineSum& lines, const FrequencyRange& range, int bins) {
  Spectrum s;
  s.frequency_hz = detail::linear_axis(range, bins);
  s.transmission.resize(s.frequency_hz.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(s.frequency_hz.size()),
               [&](std::ptrdiff_t i) { s.transmission[i] = lines(s.frequency_hz[i]); });
  s.peaks = find_peaks(s.frequency_hz, s.transmission);
  return s;
}

inline Spectrum transmission_spectrum(const CavityGeometry& geometry, const TransmissionMask& mask,
                                      const TablesPtr& tables, const FieldGrid& pump, const FrequencyRange& range,
                                      int bins, SpectrumModel model = SpectrumModel::automatic) {
  const RoundTripOperator op = round_trip_operator(geometry, mask, tables);
  const Eigen::VectorXcd c = project(*tables, pump);
  const std::vector<LorentzianLine> lines = spectral_lines(op, c, model);
  const double step = (range.stop_hz - range.start_hz) / std::max(bins - 1, 1);
  for (const auto& l : lines) {
    if (l.fwhm_hz < 4.0 * step) {
      const int need = static_cast<int>(std::ceil(4.0 * (range.stop_hz - range.start_hz) / l.fwhm_hz)) + 1;
      throw ResolutionError("bin spacing " + std::to_string(step) + " Hz under-resolves a " +
                            std::to_string(l.fwhm_hz) + " Hz linewidth; use at least " + std::to_string(need) +
                            " bins");
    }
  }
  return evaluate_spectrum(LineSum(lines, fsr_hz(geometry)), range, bins);
}

namespace detail {

struct LorentzFunctor : Eigen::DenseFunctor<double> {
  const std::vector<double>& f;
  const std::vector<double>& y;
  double f0, scale;  // frequencies are fitted as (f - f0)/scale for conditioning

  LorentzFunctor(const std::vector<double>& f_, const std::vector<double>& y_, double f0_, double scale_)
      : DenseFunctor<double>(4, static_cast<int>(f_.size())), f(f_), y(y_), f0(f0_), scale(scale_) {}

  // p = (centre, fwhm, height, offset) in scaled frequency units.
  int operator()(const InputType& p, ValueType& r) const {
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double u = 2.0 * ((f[i] - f0) / scale - p(0)) / p(1);
      r(i) = p(2) / (1.0 + u * u) + p(3) - y[i];
    }
    return 0;
  }
  int df(const InputType& p, JacobianType& j) const {
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double x = (f[i] - f0) / scale - p(0);
      const double u = 2.0 * x / p(1);
      const double d = 1.0 / (1.0 + u * u);
      j(i, 0) = p(2) * d * d * 2.0 * u * 2.0 / p(1);
      j(i, 1) = p(2) * d * d * 2.0 * u * u / p(1);
      j(i, 2) = d;
      j(i, 3) = 1.0;
    }
    return 0;
  }
};

}  // namespace detail

// Least-squares fit of height / (1 + (2 (f - centre)/fwhm)^2) + offset over the window.
inline PeakFit fit_lorentzian(const Spectrum& s, const FrequencyRange& window) {
  std::vector<double> f, y;
  for (std::size_t i = 0; i < s.frequency_hz.size(); ++i) {
    if (s.frequency_hz[i] >= window.start_hz && s.frequency_hz[i] <= window.stop_hz) {
      f.push_back(s.frequency_hz[i]);
      y.push_back(s.transmission[i]);
    }
  }
  if (f.size() < 8) throw FitError("fit window holds " + std::to_string(f.size()) + " points; need at least 8");

  const auto top = std::max_element(y.begin(), y.end());
  const double ymin = *std::min_element(y.begin(), y.end());
  const double range = *top - ymin;
  if (!(range > 0.0)) throw FitError("fit window is flat");

  // Count significant maxima: prominence (height above the higher of the lowest points
  // reached on either side before meeting higher ground or the window edge) above a
  // quarter of the window's dynamic range.
  int significant = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool left_ok = i == 0 || y[i] > y[i - 1];
    const bool right_ok = i + 1 == y.size() || y[i] >= y[i + 1];
    if (!left_ok || !right_ok) continue;
    double lmin = y[i], rmin = y[i];
    for (std::size_t k = i; k-- > 0;) {
      if (y[k] > y[i]) break;
      lmin = std::min(lmin, y[k]);
    }
    for (std::size_t k = i + 1; k < y.size(); ++k) {
      if (y[k] > y[i]) break;
      rmin = std::min(rmin, y[k]);
    }
    const double prominence = y[i] - std::max(lmin, rmin);
    if (prominence > 0.25 * range) ++significant;
  }
  if (significant != 1) {
    throw FitError("fit window contains " + std::to_string(significant) + " significant peaks; expected exactly one");
  }

  const std::size_t ip = static_cast<std::size_t>(top - y.begin());
  const double half = ymin + 0.5 * range;
  std::size_t lo = ip, hi = ip;
  while (lo > 0 && y[lo] > half) --lo;
  while (hi + 1 < y.size() && y[hi] > half) ++hi;
  const double scale = std::max(f[hi] - f[lo], f[1] - f[0]);
  const double f0 = f[ip];

  detail::LorentzFunctor fn(f, y, f0, scale);
  Eigen::VectorXd p(4);
  p << 0.0, 1.0, range, ymin;
  Eigen::LevenbergMarquardt<detail::LorentzFunctor> lm(fn);
  lm.setXtol(1e-14);
  lm.setFtol(1e-14);
  lm.setMaxfev(2000);
  const auto status = lm.minimize(p);
  if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters ||
      status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation || !p.allFinite() || !(std::abs(p(1)) > 0.0)) {
    throw ConvergenceError("Lorentzian fit did not converge", lm.fnorm());
  }
  p(1) = std::abs(p(1));

  Eigen::VectorXd r(f.size());
  fn(p, r);
  Eigen::MatrixXd j(f.size(), 4);
  fn.df(p, j);
  const double dof = static_cast<double>(f.size()) - 4.0;
  const double s2 = r.squaredNorm() / dof;
  const Eigen::MatrixXd cov = s2 * (j.transpose() * j).ldlt().solve(Eigen::MatrixXd::Identity(4, 4));

  PeakFit out;
  out.center_hz = f0 + p(0) * scale;
  out.fwhm_hz = p(1) * scale;
  out.height = p(2);
  out.offset = p(3);
  out.center_sigma_hz = std::sqrt(std::max(cov(0, 0), 0.0)) * scale;
  out.fwhm_sigma_hz = std::sqrt(std::max(cov(1, 1), 0.0)) * scale;
  out.height_sigma = std::sqrt(std::max(cov(2, 2), 0.0));
  out.residual_rms = std::sqrt(r.squaredNorm() / static_cast<double>(f.size()));
  return out;
}

inline double finesse_from_linewidth(double fsr, double fwhm) {
  if (!(fwhm > 0.0) || !(fsr > 0.0)) throw ValueRangeError("FSR and linewidth must be positive");
  return fsr / fwhm;
}

// FSR over the fitted width of the tallest peak. Without a supplied FSR it is taken as the
// distance from the tallest peak to the nearest peak at least half as tall.
inline double finesse_from_spectrum(const Spectrum& s, std::optional<double> fsr = std::nullopt) {
  const std::vector<SpectrumPeak> peaks = find_peaks(s.frequency_hz, s.transmission);
  if (peaks.empty()) throw FitError("spectrum has no resolved peak");
  const auto tallest = std::max_element(peaks.begin(), peaks.end(),
                                        [](const auto& a, const auto& b) { return a.height < b.height; });
  if (!fsr) {
    double best = INFINITY;
    for (const auto& p : peaks) {
      if (&p == &*tallest || p.height < 0.5 * tallest->height) continue;
      best = std::min(best, std::abs(p.center_hz - tallest->center_hz));
    }
    if (!std::isfinite(best)) throw FitError("need two resolved longitudinal peaks or a supplied FSR");
    fsr = best;
  }
  const double half_window = std::min(3.0 * tallest->fwhm_hz, 0.45 * *fsr);
  const PeakFit fit = fit_lorentzian(s, {tallest->center_hz - half_window, tallest->center_hz + half_window});
  return finesse_from_linewidth(*fsr, fit.fwhm_hz);
}

struct CollapsePoint {
  double length_ratio = 0.0;  // L/R
  double spread_hz = 0.0;
};

// Spread of the even-family resonances that line up with TEM00 at confocality: mode (n,m)
// is taken at longitudinal index q - (n+m)/2, so the spread is unwrapped rather than folded
// into one FSR. A mask adds the phase of its diagonal round-trip element per mode. Modes
// whose pump weight is below 1e-6 of the strongest are left out.
inline std::vector<CollapsePoint> degeneracy_collapse_scan(const CavityGeometry& geometry_template,
                                                           const std::vector<double>& lengths_mm, int max_order,
                                                           const TransmissionMask* mask = nullptr,
                                                           const std::function<FieldGrid(const ModeTables&)>& pump = {}) {
  std::vector<CollapsePoint> out;
  for (double length : lengths_mm) {
    CavityGeometry geo = geometry_template;
    geo.cavity_length_mm = length;
    const ModeBasis basis(geo, max_order, Family::even);
    const double fsr = fsr_hz(geo);
    const double gouy = gouy_fraction(geo);
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
    Eigen::VectorXd weight = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(basis.size()));
    if (mask != nullptr || pump) {
      const ModeTables t = make_mode_tables(basis, default_grid(basis));
      if (mask != nullptr) {
        const Eigen::MatrixXcd b = mask_overlap_matrix(*mask, t, true);
        const Eigen::MatrixXcd b2 = b * b;
        for (Eigen::Index k = 0; k < shift.size(); ++k) shift(k) = std::arg(b2(k, k)) / (2.0 * std::numbers::pi) * fsr;
      }
      if (pump) weight = project(t, pump(t)).cwiseAbs2();
    }
    const double wmax = weight.maxCoeff();
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t k = 0; k < basis.size(); ++k) {
      if (!(weight(k) >= 1e-6 * wmax) || wmax <= 0.0) continue;
      const int order = basis.modes()[k].order();
      const double nu = fsr * (order * gouy - 0.5 * order) + shift(k);
      lo = std::min(lo, nu);
      hi = std::max(hi, nu);
    }
    out.push_back({length / geo.mirror_radius_mm, std::isfinite(lo) ? hi - lo : 0.0});
  }
  return out;
}

}  // namespace confocal
