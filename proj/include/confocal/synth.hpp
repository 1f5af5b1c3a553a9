#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "confocal/errors.hpp"
#include "confocal/lock_analysis.hpp"

// Synthetic inputs for the metrology chain: noise traces, PDH sweeps and drive series.
namespace confocal::synth {

inline NoiseTrace white_noise(double rate_hz, std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  NoiseTrace t{rate_hz, std::vector<double>(n), "white noise"};
  for (double& v : t.samples) v = gauss(rng);
  return t;
}

inline NoiseTrace tone(double rate_hz, std::size_t n, double freq_hz, double amplitude, double offset = 0.0) {
  NoiseTrace t{rate_hz, std::vector<double>(n), "tone"};
  for (std::size_t i = 0; i < n; ++i) {
    t.samples[i] = offset + amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * i / rate_hz);
  }
  return t;
}

// Error-signal voltage while the laser sweeps linearly through resonance:
// V(t) = volts_per_unit * e(rate (t - T/2)) + white noise.
inline NoiseTrace pdh_sweep(const PdhModel& model, double sweep_rate_hz_per_s, double volts_per_unit, double rate_hz,
                            std::size_t n, double noise_sigma = 0.0, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  NoiseTrace t{rate_hz, std::vector<double>(n), "PDH sweep"};
  const double mid = 0.5 * static_cast<double>(n - 1) / rate_hz;
  for (std::size_t i = 0; i < n; ++i) {
    const double detuning = sweep_rate_hz_per_s * (i / rate_hz - mid);
    t.samples[i] = volts_per_unit * model(detuning) + (noise_sigma > 0.0 ? noise_sigma * gauss(rng) : 0.0);
  }
  return t;
}

// Gaussian noise with one-sided density proportional to shape(f), scaled so the band
// [f_lo, f_hi] carries exactly `band_rms` (computed on the trace's own DFT). Built in the
// frequency domain with Rayleigh amplitudes and uniform phases.
inline NoiseTrace shaped_noise(double rate_hz, std::size_t n, const std::function<double(double)>& shape, double f_lo,
                               double f_hi, double band_rms, std::uint64_t seed) {
  if (n % 2 != 0) throw ValueRangeError("shaped noise needs an even sample count");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t bins = n / 2 + 1;
  std::vector<std::complex<double>> spec(n);
  double band_power = 0.0;
  for (std::size_t k = 1; k + 1 < bins; ++k) {
    const double f = k * rate_hz / n;
    const double amp = std::sqrt(std::max(shape(f), 0.0));
    const std::complex<double> z(gauss(rng), gauss(rng));
    spec[k] = amp * z;
    spec[n - k] = std::conj(spec[k]);
    // Parseval: variance contribution of bin k (and its mirror) is 2|X_k|^2 / n^2.
    if (f >= f_lo && f <= f_hi) band_power += 2.0 * std::norm(spec[k]) / (double(n) * double(n));
  }
  if (!(band_power > 0.0)) throw ValueRangeError("noise shape has no power in the requested band");
  const double scale = band_rms / std::sqrt(band_power);
  for (auto& z : spec) z *= scale;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> time;
  fft.inv(time, spec);
  NoiseTrace t{rate_hz, std::vector<double>(n), "shaped noise"};
  for (std::size_t i = 0; i < n; ++i) t.samples[i] = time[i].real();
  return t;
}

// Cavity-length noise of the kind seen with the cryocooler running: a 1/f floor, the mount
// resonance near 700 Hz, and servo bumps past 10 kHz.
inline double cryo_noise_shape(double f) {
  auto bump = [f](double f0, double q, double h) {
    const double x = (f * f - f0 * f0) / (f * f0 / q);
    return h / (1.0 + x * x);
  };
  return 1.0 / (1.0 + f / 10.0) + 0.02 + bump(700.0, 8.0, 3.0) + bump(14e3, 4.0, 0.15) + bump(23e3, 5.0, 0.1);
}

struct DriveSeries {
  std::vector<double> drives_nm;
  std::vector<double> responses_hz;
};

// Locked-cavity response to a driven sample: dnu = alpha (x_drive + x_sample) + dnu_bare,
// plus Gaussian readout noise.
inline DriveSeries vibration_series(const std::vector<double>& drives_nm, double alpha_hz_per_nm,
                                    double sample_motion_nm, double bare_rms_hz, double noise_hz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  DriveSeries s{drives_nm, {}};
  for (double x : drives_nm) {
    s.responses_hz.push_back(alpha_hz_per_nm * (x + sample_motion_nm) + bare_rms_hz + noise_hz * gauss(rng));
  }
  return s;
}

}  // namespace confocal::synth
