#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace confocal {

// One Lorentzian resonance: peak `height` at `center_hz`, full width `fwhm_hz`.
struct LorentzianLine {
  double center_hz = 0.0;
  double fwhm_hz = 1.0;
  double height = 0.0;

  double operator()(double f) const {
    const double u = 2.0 * (f - center_hz) / fwhm_hz;
    return height / (1.0 + u * u);
  }
};

// Incoherent sum of Lorentzians, each repeated every `period_hz` (the FSR comb).
class LineSum {
 public:
  LineSum(std::vector<LorentzianLine> lines, double period_hz) : lines_(std::move(lines)), period_(period_hz) {}

  const std::vector<LorentzianLine>& lines() const { return lines_; }

  double operator()(double f) const {
    double sum = 0.0;
    for (const auto& l : lines_) {
      // Fold the centre to the image nearest f, then add the two neighbouring images.
      const double shift = period_ * std::round((f - l.center_hz) / period_);
      for (int p = -1; p <= 1; ++p) {
        LorentzianLine img = l;
        img.center_hz += shift + p * period_;
        sum += img(f);
      }
    }
    return sum;
  }

  // Full width at half maximum of the line around its brightest component.
  double fwhm_hz() const {
    if (lines_.empty()) return 0.0;
    const auto brightest = std::max_element(lines_.begin(), lines_.end(), [](const auto& a, const auto& b) {
      return a.height < b.height;
    });
    double peak = brightest->center_hz;
    double step = std::min(brightest->fwhm_hz, period_) / 4.0;
    // Golden-section refinement of the maximum within one component width.
    double lo = peak - 2.0 * step, hi = peak + 2.0 * step;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 100; ++it) {
      const double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
      if ((*this)(a) > (*this)(b)) hi = b; else lo = a;
    }
    peak = 0.5 * (lo + hi);
    const double half = 0.5 * (*this)(peak);
    auto crossing = [&](double dir) {
      double inner = peak, outer = peak + dir * step;
      while ((*this)(outer) > half && std::abs(outer - peak) < period_) {
        inner = outer;
        outer += dir * step;
      }
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (inner + outer);
        ((*this)(mid) > half ? inner : outer) = mid;
      }
      return 0.5 * (inner + outer);
    };
    return crossing(+1.0) - crossing(-1.0);
  }

 private:
  std::vector<LorentzianLine> lines_;
  double period_;
};

}  // namespace confocal
