#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "confocal/errors.hpp"
#include "confocal/geometry.hpp"
#include "confocal/parallel.hpp"

namespace confocal {

// ---------------------------------------------------------------------------------------
// Pound-Drever-Hall error signal

inline double bessel_j(int order, double x) { return std::cyl_bessel_j(static_cast<double>(order), x); }

// Reflection response of an impedance-matched symmetric cavity near resonance, with
// detuning d and half-width a = kappa/2: F(d) = i d / (a + i d).
class PdhModel {
 public:
  PdhModel(double linewidth_hz, double modulation_hz, double modulation_depth_rad)
      : kappa_(linewidth_hz), omega_(modulation_hz), beta_(modulation_depth_rad) {
    if (!(linewidth_hz > 0.0)) throw ValueRangeError("PDH linewidth must be positive");
    if (!(modulation_hz > 0.0)) throw ValueRangeError("PDH modulation frequency must be positive");
    if (!(modulation_depth_rad > 0.0)) throw ValueRangeError("PDH modulation depth must be positive");
    peak_ = 1.0;
    // Scan for the largest excursion; extrema sit near +-kappa/2 and +-Omega.
    const double span = omega_ + 5.0 * kappa_;
    const int samples = 20000;
    double best = 0.0, best_d = 0.0;
    for (int i = 1; i <= samples; ++i) {
      const double d = span * i / samples;
      const double v = std::abs(raw(d));
      if (v > best) {
        best = v;
        best_d = d;
      }
    }
    double lo = std::max(best_d - span / samples, 0.0), hi = best_d + span / samples;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 100; ++it) {
      const double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
      if (std::abs(raw(a)) > std::abs(raw(b))) hi = b; else lo = a;
    }
    peak_ = std::abs(raw(0.5 * (lo + hi)));
  }

  double linewidth_hz() const { return kappa_; }
  double modulation_hz() const { return omega_; }

  // Normalized to unit peak magnitude.
  double operator()(double detuning_hz) const { return raw(detuning_hz) / peak_; }

  // d(error)/d(detuning) at the lock point, per Hz: 2 J0 J1 (2/a) Omega^2 / (a^2 + Omega^2).
  double slope_at_lock() const {
    const double a = 0.5 * kappa_;
    return 2.0 * bessel_j(0, beta_) * bessel_j(1, beta_) * (2.0 / a) * omega_ * omega_ / (a * a + omega_ * omega_) /
           peak_;
  }

 private:
  std::complex<double> f(double d) const {
    const std::complex<double> id(0.0, d);
    return id / (0.5 * kappa_ + id);
  }
  double raw(double d) const {
    const std::complex<double> t = f(d) * std::conj(f(d + omega_)) - std::conj(f(d)) * f(d - omega_);
    return 2.0 * bessel_j(0, beta_) * bessel_j(1, beta_) * t.imag();
  }

  double kappa_, omega_, beta_;
  double peak_;
};

inline double pdh_error_signal(double detuning_hz, double linewidth_hz, double modulation_hz,
                               double modulation_depth_rad) {
  return PdhModel(linewidth_hz, modulation_hz, modulation_depth_rad)(detuning_hz);
}

// ---------------------------------------------------------------------------------------
// Traces and calibration

struct NoiseTrace {
  double sample_rate_hz = 0.0;
  std::vector<double> samples;
  std::string label;

  double duration_s() const { return samples.size() / sample_rate_hz; }
};

namespace detail {

struct Crossing {
  double time_s;
  int direction;  // +1 rising, -1 falling
  std::size_t index;
  double slope;  // V/s across the hysteresis band
};

// Zero crossings with hysteresis +-h, located by linear interpolation of the last sign change.
inline std::vector<Crossing> crossings(const NoiseTrace& tr, double h) {
  std::vector<Crossing> out;
  int state = 0;
  std::size_t last_change = 0, last_in_state = 0;
  const auto& v = tr.samples;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0 && (v[i - 1] < 0.0) != (v[i] < 0.0)) last_change = i;
    const int s = v[i] > h ? 1 : v[i] < -h ? -1 : 0;
    if (s != 0 && s == state) last_in_state = i;
    if (s == 0 || s == state) continue;
    if (state != 0 && last_change > 0) {
      const std::size_t k = last_change;
      const double frac = v[k - 1] / (v[k - 1] - v[k]);
      const double slope = (v[i] - v[last_in_state]) * tr.sample_rate_hz / static_cast<double>(i - last_in_state);
      out.push_back({(static_cast<double>(k - 1) + frac) / tr.sample_rate_hz, s, k, slope});
    }
    state = s;
    last_in_state = i;
  }
  return out;
}

}  // namespace detail

// Error-signal slope dV/dnu from a sweep across resonance. The sidebands at +-Omega fix the
// time-to-frequency conversion (their separation is 2 Omega), so the sweep rate need not be
// known. The carrier slope in V/s comes from a cubic fit around its zero crossing.
inline double calibrate_slope(const NoiseTrace& sweep, double sideband_hz) {
  if (!(sideband_hz > 0.0)) throw ValueRangeError("sideband frequency must be positive");
  if (sweep.samples.size() < 16 || !(sweep.sample_rate_hz > 0.0)) throw CalibrationError("sweep trace is too short");
  double vmax = 0.0;
  for (double v : sweep.samples) vmax = std::max(vmax, std::abs(v));
  if (!(vmax > 0.0)) throw CalibrationError("sweep trace is flat");
  const auto xs = detail::crossings(sweep, 0.1 * vmax);

  auto local_slope = [](const detail::Crossing& c) { return c.slope; };
  if (xs.size() < 3) throw CalibrationError("sweep shows fewer than three error-signal zero crossings");
  std::size_t carrier = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (std::abs(local_slope(xs[i])) > std::abs(local_slope(xs[carrier]))) carrier = i;
  const double carrier_slope = local_slope(xs[carrier]);
  auto is_sideband = [&](std::size_t i) {
    return xs[i].direction != xs[carrier].direction && std::abs(local_slope(xs[i])) >= 0.25 * std::abs(carrier_slope);
  };
  std::optional<std::size_t> before, after;
  for (std::size_t i = carrier; i-- > 0;)
    if (is_sideband(i)) {
      before = i;
      break;
    }
  for (std::size_t i = carrier + 1; i < xs.size(); ++i)
    if (is_sideband(i)) {
      after = i;
      break;
    }
  if (!before || !after) throw CalibrationError("sidebands not found on both sides of the carrier");
  const double dt = xs[*after].time_s - xs[*before].time_s;
  const double hz_per_s = 2.0 * sideband_hz / dt;

  // Fit window: out from the crossing until the signal reaches half the lobe extremum
  // between the carrier and either sideband.
  const std::size_t c = xs[carrier].index;
  const std::size_t mid_lo = (xs[*before].index + c) / 2, mid_hi = (xs[*after].index + c) / 2;
  double lobe = 0.0;
  for (std::size_t i = mid_lo; i <= mid_hi; ++i) lobe = std::max(lobe, std::abs(sweep.samples[i]));
  std::size_t lo = c, hi = c;
  while (lo > mid_lo && std::abs(sweep.samples[lo - 1]) < 0.5 * lobe) --lo;
  while (hi < mid_hi && std::abs(sweep.samples[hi]) < 0.5 * lobe) ++hi;
  const std::size_t n = hi - lo;
  if (n < 6) throw CalibrationError("carrier slope is sampled by fewer than 6 points");
  const double tc = xs[carrier].time_s;
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(lo + i) / sweep.sample_rate_hz - tc;
    a(i, 0) = 1.0;
    a(i, 1) = t;
    a(i, 2) = t * t;
    a(i, 3) = t * t * t;
    b(i) = sweep.samples[lo + i];
  }
  const Eigen::Vector4d coef = a.colPivHouseholderQr().solve(b);
  return coef(1) / hz_per_s;
}

struct LockCalibration {
  double slope_v_per_hz = 0.0;
  double cavity_length_mm = 0.0;
  long q = 0;
  double fsr_hz = 0.0;
  double laser_frequency_hz = 0.0;
  double bare_rms_hz = 4.25e6;

  void validate() const {
    if (!(cavity_length_mm > 0.0) || !(fsr_hz > 0.0) || q < 1 || !(laser_frequency_hz > 0.0)) {
      throw ValueRangeError("lock calibration needs positive length, FSR, q and laser frequency");
    }
    const double mismatch = std::abs(q * fsr_hz - laser_frequency_hz) / laser_frequency_hz;
    if (mismatch > 1e-4) {
      throw ValueRangeError("q * FSR differs from the laser frequency by " + std::to_string(mismatch) +
                            " (relative); limit 1e-4");
    }
  }
};

inline LockCalibration make_lock_calibration(const CavityGeometry& geo, double slope_v_per_hz) {
  LockCalibration c;
  c.slope_v_per_hz = slope_v_per_hz;
  c.cavity_length_mm = geo.cavity_length_mm;
  c.fsr_hz = fsr_hz(geo);
  c.laser_frequency_hz = laser_frequency_hz(geo);
  c.q = longitudinal_index(geo);
  c.validate();
  return c;
}

// Length change equivalent to a frequency excursion: dL = dnu L / (q FSR), in pm.
inline double displacement_from_frequency(double delta_nu_hz, const LockCalibration& cal) {
  cal.validate();
  return delta_nu_hz * cal.cavity_length_mm * 1e-3 / (static_cast<double>(cal.q) * cal.fsr_hz) * 1e12;
}

// dL = (V_rms / (dV/dnu)) L / (q FSR), in pm.
inline double displacement_from_error(double v_rms, const LockCalibration& cal) {
  if (!(cal.slope_v_per_hz != 0.0) || !std::isfinite(cal.slope_v_per_hz)) {
    throw ValueRangeError("error-signal slope must be non-zero");
  }
  return displacement_from_frequency(v_rms / std::abs(cal.slope_v_per_hz), cal);
}

// ---------------------------------------------------------------------------------------
// Power spectral density

enum class Window { hann, boxcar };

inline const char* to_string(Window w) { return w == Window::hann ? "hann" : "boxcar"; }

struct PSDSpec {
  std::vector<double> frequency_hz;
  std::vector<double> density;  // one-sided, units^2 / Hz
  Window window = Window::hann;
  std::size_t segment_length = 0;
  double overlap = 0.0;
  std::size_t segments = 0;
  std::string units = "V";
};

inline std::vector<double> window_coefficients(Window w, std::size_t n) {
  std::vector<double> c(n, 1.0);
  if (w == Window::hann) {
    // Periodic Hann, the usual choice for spectral estimation.
    for (std::size_t i = 0; i < n; ++i) c[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return c;
}

// Welch averaged periodogram. Segment transforms run in parallel; their periodograms are
// summed in segment order, so results do not depend on the thread count.
inline PSDSpec compute_psd(const NoiseTrace& trace, std::size_t segment_length, double overlap = 0.5,
                           Window window = Window::hann) {
  if (!(trace.sample_rate_hz > 0.0)) throw ValueRangeError("sample rate must be positive");
  if (segment_length < 2) throw ValueRangeError("segment length must be at least 2");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ValueRangeError("segment overlap must lie in [0,1)");
  if (trace.samples.size() < segment_length) {
    throw ValueRangeError("trace of " + std::to_string(trace.samples.size()) +
                          " samples is shorter than one segment (" + std::to_string(segment_length) + ")");
  }
  const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(segment_length * (1.0 - overlap))));
  const std::size_t count = (trace.samples.size() - segment_length) / step + 1;
  const std::vector<double> w = window_coefficients(window, segment_length);
  double wsum2 = 0.0;
  for (double x : w) wsum2 += x * x;
  const std::size_t bins = segment_length / 2 + 1;

  std::vector<std::vector<double>> per(count);
  parallel_for(0, static_cast<std::ptrdiff_t>(count), [&](std::ptrdiff_t s) {
    Eigen::FFT<double> fft;
    std::vector<double> seg(segment_length);
    for (std::size_t i = 0; i < segment_length; ++i) seg[i] = trace.samples[s * step + i] * w[i];
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, seg);
    std::vector<double> p(bins);
    for (std::size_t k = 0; k < bins; ++k) p[k] = std::norm(spec[k]);
    per[s] = std::move(p);
  });

  PSDSpec out;
  out.window = window;
  out.segment_length = segment_length;
  out.overlap = overlap;
  out.segments = count;
  out.frequency_hz.resize(bins);
  out.density.assign(bins, 0.0);
  for (const auto& p : per)
    for (std::size_t k = 0; k < bins; ++k) out.density[k] += p[k];
  const double norm = 1.0 / (trace.sample_rate_hz * wsum2 * static_cast<double>(count));
  for (std::size_t k = 0; k < bins; ++k) {
    out.frequency_hz[k] = k * trace.sample_rate_hz / segment_length;
    const bool unpaired = k == 0 || (segment_length % 2 == 0 && k == bins - 1);
    out.density[k] *= norm * (unpaired ? 1.0 : 2.0);
  }
  return out;
}

// PSD with the density rescaled by factor^2 (e.g. V -> pm).
inline PSDSpec scale_psd(PSDSpec psd, double factor, std::string units) {
  for (double& d : psd.density) d *= factor * factor;
  psd.units = std::move(units);
  return psd;
}

// sqrt of the trapezoidal integral of the density over [f_lo, f_hi], with the band edges
// linearly interpolated between bins.
inline double band_rms(const PSDSpec& psd, double f_lo, double f_hi) {
  const auto& f = psd.frequency_hz;
  const auto& s = psd.density;
  if (f.size() < 2) throw ValueRangeError("PSD has fewer than two bins");
  if (!(f_hi > f_lo)) throw ValueRangeError("band is empty");
  if (f_lo < f.front() || f_hi > f.back()) {
    throw ValueRangeError("band [" + std::to_string(f_lo) + ", " + std::to_string(f_hi) + "] Hz exceeds the PSD support [" +
                          std::to_string(f.front()) + ", " + std::to_string(f.back()) + "] Hz");
  }
  auto value = [&](double x) {
    const auto it = std::upper_bound(f.begin(), f.end(), x);
    const std::size_t k = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - f.begin(), 1), f.size() - 1);
    const double t = (x - f[k - 1]) / (f[k] - f[k - 1]);
    return s[k - 1] + t * (s[k] - s[k - 1]);
  };
  std::vector<std::pair<double, double>> pts{{f_lo, value(f_lo)}};
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f[k] > f_lo && f[k] < f_hi) pts.push_back({f[k], s[k]});
  pts.push_back({f_hi, value(f_hi)});
  double sum = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    sum += 0.5 * (pts[k].second + pts[k - 1].second) * (pts[k].first - pts[k - 1].first);
  }
  return std::sqrt(std::max(sum, 0.0));
}

// ---------------------------------------------------------------------------------------
// Piezo calibration and vibration response

struct Measurement {
  double value = 0.0;
  double sigma = 0.0;
};

// gamma = (lambda/2) / mean(dV) in nm/V: successive transmission maxima are half a
// wavelength apart in length. The uncertainty follows from the half-spread of the dV values.
inline Measurement piezo_gamma(const std::vector<double>& peak_voltages, double wavelength_nm) {
  if (peak_voltages.size() < 2) throw CalibrationError("piezo calibration needs at least two transmission peaks");
  if (!(wavelength_nm > 0.0)) throw ValueRangeError("wavelength must be positive");
  std::vector<double> dv;
  for (std::size_t i = 1; i < peak_voltages.size(); ++i) dv.push_back(std::abs(peak_voltages[i] - peak_voltages[i - 1]));
  double mean = 0.0;
  for (double d : dv) mean += d;
  mean /= static_cast<double>(dv.size());
  if (!(mean > 0.0)) throw CalibrationError("transmission peaks are not separated in voltage");
  const auto [lo, hi] = std::minmax_element(dv.begin(), dv.end());
  const double half_spread = 0.5 * (*hi - *lo);
  const double gamma = 0.5 * wavelength_nm / mean;
  return {gamma, gamma * half_spread / mean};
}

inline Measurement piezo_gamma_from_spacing(double delta_v, double wavelength_nm) {
  return piezo_gamma({0.0, delta_v}, wavelength_nm);
}

struct LinearFit {
  double alpha = 0.0;  // slope, response units per drive unit
  double beta = 0.0;   // intercept
  double alpha_sigma = 0.0;
  double beta_sigma = 0.0;
  double covariance = 0.0;  // cov(alpha, beta)
  double residual_rms = 0.0;
};

// Ordinary least squares response = alpha * drive + beta. Parameter covariance uses
// `known_sigma` for the response noise when given, otherwise the residual variance.
inline LinearFit fit_vibration_response(const std::vector<double>& drives, const std::vector<double>& responses,
                                        std::optional<double> known_sigma = std::nullopt) {
  const std::size_t n = drives.size();
  if (n != responses.size()) throw FitError("drive and response lists differ in length");
  if (n < 3) throw FitError("linear response fit needs at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += drives[i];
    my += responses[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (drives[i] - mx) * (drives[i] - mx);
    sxy += (drives[i] - mx) * (responses[i] - my);
  }
  double scale = 0.0;
  for (double d : drives) scale = std::max(scale, std::abs(d));
  if (!(sxx > 1e-24 * std::max(scale * scale, 1e-300) * n)) throw FitError("drive values are all equal (rank-deficient fit)");
  LinearFit fit;
  fit.alpha = sxy / sxx;
  fit.beta = my - fit.alpha * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = responses[i] - fit.alpha * drives[i] - fit.beta;
    ssr += r * r;
  }
  fit.residual_rms = std::sqrt(ssr / n);
  const double s2 = known_sigma ? *known_sigma * *known_sigma : ssr / static_cast<double>(n - 2);
  fit.alpha_sigma = std::sqrt(s2 / sxx);
  fit.beta_sigma = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
  fit.covariance = -mx * s2 / sxx;
  return fit;
}

struct SampleDisplacement {
  double x_nm = 0.0;
  double sigma_nm = 0.0;
  bool ill_conditioned = false;  // alpha consistent with zero within one sigma
  std::string warning;
};

// x_sample = (beta - dnu_bare) / alpha with first-order error propagation.
inline SampleDisplacement sample_displacement(const LinearFit& fit, double bare_rms_hz, double bare_sigma_hz = 0.0) {
  if (fit.alpha == 0.0) throw ValueRangeError("response slope alpha is zero");
  SampleDisplacement out;
  out.x_nm = (fit.beta - bare_rms_hz) / fit.alpha;
  const double a = fit.alpha, x = out.x_nm;
  const double var = (fit.beta_sigma * fit.beta_sigma + bare_sigma_hz * bare_sigma_hz +
                      x * x * fit.alpha_sigma * fit.alpha_sigma - 2.0 * x * fit.covariance) /
                     (a * a);
  out.sigma_nm = std::sqrt(std::max(var, 0.0));
  if (std::abs(fit.alpha) <= fit.alpha_sigma) {
    out.ill_conditioned = true;
    out.warning = "alpha is consistent with zero within 1 sigma; x_sample is ill-conditioned";
  }
  return out;
}

struct VibrationFit {
  double drive_frequency_hz = 0.0;
  LinearFit response;  // alpha in Hz/nm, beta in Hz
  Measurement gamma;   // nm/V
  SampleDisplacement sample;
};

}  // namespace confocal
