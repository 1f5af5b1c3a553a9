#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "confocal/errors.hpp"
#include "confocal/geometry.hpp"
#include "confocal/parallel.hpp"

namespace confocal {

using cplx = std::complex<double>;

enum class Family { even, odd, all };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::even: return "even";
    case Family::odd: return "odd";
    case Family::all: return "all";
  }
  return "?";
}

inline bool in_family(int n, int m, Family f) {
  switch (f) {
    case Family::even: return (n + m) % 2 == 0;
    case Family::odd: return (n + m) % 2 == 1;
    case Family::all: return true;
  }
  return false;
}

struct ModeIndex {
  int n = 0;
  int m = 0;
  int order() const { return n + m; }
  friend bool operator==(const ModeIndex&, const ModeIndex&) = default;
};

// Normalized Hermite functions psi_0..psi_{nmax}(xi), orthonormal on the real line with
// unit weight. Uses the three-term recurrence, which stays finite for large orders where
// H_n(xi) alone would overflow.
inline void hermite_functions(double xi, std::span<double> out) {
  if (out.empty()) return;
  out[0] = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * xi * xi);
  if (out.size() > 1) out[1] = std::sqrt(2.0) * xi * out[0];
  for (std::size_t n = 2; n < out.size(); ++n) {
    const double nd = static_cast<double>(n);
    out[n] = std::sqrt(2.0 / nd) * xi * out[n - 1] - std::sqrt((nd - 1.0) / nd) * out[n - 2];
  }
}

// Truncated Hermite-Gauss family at the cavity midplane: all (n,m) with n+m <= N and the
// requested parity.
class ModeBasis {
 public:
  ModeBasis(const CavityGeometry& geometry, int max_order, Family family)
      : geometry_(geometry), max_order_(max_order), family_(family) {
    if (max_order < 0) throw ValueRangeError("maximum mode order must be >= 0");
    waist_um_ = fundamental_waist_um(geometry);
    reference_q_ = longitudinal_index(geometry);
    for (int k = 0; k <= max_order; ++k) {
      for (int n = k; n >= 0; --n) {
        if (in_family(n, k - n, family)) modes_.push_back({n, k - n});
      }
    }
    if (modes_.empty()) throw ValueRangeError("mode family is empty at this truncation order");
  }

  const CavityGeometry& geometry() const { return geometry_; }
  double waist_um() const { return waist_um_; }
  int max_order() const { return max_order_; }
  Family family() const { return family_; }
  long reference_q() const { return reference_q_; }
  const std::vector<ModeIndex>& modes() const { return modes_; }
  std::size_t size() const { return modes_.size(); }

  std::optional<std::size_t> index_of(int n, int m) const {
    for (std::size_t k = 0; k < modes_.size(); ++k) {
      if (modes_[k].n == n && modes_[k].m == m) return k;
    }
    return std::nullopt;
  }

  // 1D mode u_n(x) normalized so that the 2D product u_n(x)u_m(y) has unit norm.
  void mode_profile(double x_um, std::span<double> out) const {
    hermite_functions(std::sqrt(2.0) * x_um / waist_um_, out);
    const double scale = std::sqrt(std::sqrt(2.0) / waist_um_);
    for (double& v : out) v *= scale;
  }

 private:
  CavityGeometry geometry_;
  int max_order_;
  Family family_;
  double waist_um_ = 0.0;
  long reference_q_ = 0;
  std::vector<ModeIndex> modes_;
};

// Uniform transverse sampling centred on the cavity axis: pixel i sits at
// (i - (width-1)/2) * pitch, so the grid is symmetric under r -> -r.
struct GridSpec {
  int width = 0;
  int height = 0;
  double pitch_um = 0.0;

  double x_um(int i) const { return (i - 0.5 * (width - 1)) * pitch_um; }
  double y_um(int j) const { return (j - 0.5 * (height - 1)) * pitch_um; }
  double pixel_area() const { return pitch_um * pitch_um; }
  double half_width_um() const { return 0.5 * width * pitch_um; }
  double half_height_um() const { return 0.5 * height * pitch_um; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// Pitch below which the midpoint rule integrates products of two order-N modes without
// aliasing: their combined local wavenumber is at most 2*sqrt(2)*(sqrt(2N+1)+1)/w0.
inline double required_pitch_um(const ModeBasis& basis) {
  const double k = std::sqrt(2.0) * (std::sqrt(2.0 * basis.max_order() + 1.0) + 1.0) / basis.waist_um();
  return std::numbers::pi / (2.0 * k);
}

// Half-width that contains the classical turning point of the highest order plus a margin
// in which its evanescent tail decays below quadrature tolerance.
inline double required_half_extent_um(const ModeBasis& basis) {
  return basis.waist_um() / std::sqrt(2.0) * (std::sqrt(2.0 * basis.max_order() + 1.0) + 3.0);
}

inline void check_resolution(const ModeBasis& basis, const GridSpec& grid) {
  const double need_pitch = required_pitch_um(basis);
  const double need_half = required_half_extent_um(basis);
  std::ostringstream msg;
  if (grid.width <= 0 || grid.height <= 0 || !(grid.pitch_um > 0.0)) {
    throw ResolutionError("grid must have positive size and pitch");
  }
  // The slack absorbs rounding in grids derived from these same requirements.
  constexpr double slack = 1e-12;
  if (grid.pitch_um > need_pitch * (1.0 + slack)) {
    msg << "grid pitch " << grid.pitch_um << " um is too coarse for mode order " << basis.max_order()
        << "; required pitch <= " << need_pitch << " um";
    throw ResolutionError(msg.str());
  }
  if (std::min(grid.half_width_um(), grid.half_height_um()) < need_half * (1.0 - slack)) {
    msg << "grid half-extent " << std::min(grid.half_width_um(), grid.half_height_um())
        << " um is too small for mode order " << basis.max_order() << "; required half-extent >= "
        << need_half << " um (" << 2.0 * need_half << " um full width)";
    throw ResolutionError(msg.str());
  }
}

// 512x512 grid whose extent just covers the required half-extent.
inline GridSpec default_grid(const ModeBasis& basis, int pixels = 512) {
  const double pitch = 2.0 * required_half_extent_um(basis) / pixels;
  return {pixels, pixels, pitch};
}

// Square grid at a fixed pitch, large enough for the basis.
inline GridSpec grid_for_pitch(const ModeBasis& basis, double pitch_um) {
  const int pixels = static_cast<int>(std::ceil(2.0 * required_half_extent_um(basis) / pitch_um));
  return {pixels, pixels, pitch_um};
}

// Complex field sampled on a GridSpec; values(i, j) is the pixel at (x_i, y_j).
struct FieldGrid {
  GridSpec grid;
  Eigen::MatrixXcd values;

  FieldGrid() = default;
  explicit FieldGrid(const GridSpec& g) : grid(g), values(Eigen::MatrixXcd::Zero(g.width, g.height)) {}

  Eigen::MatrixXd intensity() const { return values.cwiseAbs2(); }
  double power() const { return values.cwiseAbs2().sum() * grid.pixel_area(); }
};

inline cplx inner_product(const FieldGrid& a, const FieldGrid& b) {
  if (!(a.grid == b.grid)) throw GridMismatch("inner product of fields on different grids");
  return (a.values.conjugate().cwiseProduct(b.values)).sum() * a.grid.pixel_area();
}

// Per-axis mode profiles of a basis tabulated on a grid: x(n, i) = u_n(x_i), y(m, j) = u_m(y_j).
struct ModeTables {
  ModeBasis basis;
  GridSpec grid;
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;

  std::size_t size() const { return basis.size(); }
};

inline ModeTables make_mode_tables(const ModeBasis& basis, const GridSpec& grid) {
  check_resolution(basis, grid);
  const int orders = basis.max_order() + 1;
  ModeTables t{basis, grid, Eigen::MatrixXd(orders, grid.width), Eigen::MatrixXd(orders, grid.height)};
  parallel_for(0, grid.width, [&](std::ptrdiff_t i) {
    std::vector<double> col(orders);
    basis.mode_profile(grid.x_um(static_cast<int>(i)), col);
    for (int n = 0; n < orders; ++n) t.x(n, i) = col[n];
  });
  parallel_for(0, grid.height, [&](std::ptrdiff_t j) {
    std::vector<double> col(orders);
    basis.mode_profile(grid.y_um(static_cast<int>(j)), col);
    for (int n = 0; n < orders; ++n) t.y(n, j) = col[n];
  });
  return t;
}

// Value of the normalized HG(n,m) field at one transverse point.
inline double mode_value(int n, int m, const ModeBasis& basis, double x_um, double y_um) {
  std::vector<double> px(n + 1), py(m + 1);
  basis.mode_profile(x_um, px);
  basis.mode_profile(y_um, py);
  return px[n] * py[m];
}

inline FieldGrid evaluate_mode(int n, int m, const ModeBasis& basis, const GridSpec& grid) {
  if (n < 0 || m < 0 || n + m > basis.max_order()) {
    throw ValueRangeError("mode (" + std::to_string(n) + "," + std::to_string(m) + ") is outside the basis");
  }
  check_resolution(basis, grid);
  FieldGrid f(grid);
  std::vector<double> py(m + 1);
  Eigen::VectorXd ycol(grid.height);
  for (int j = 0; j < grid.height; ++j) {
    basis.mode_profile(grid.y_um(j), py);
    ycol(j) = py[m];
  }
  parallel_for(0, grid.width, [&](std::ptrdiff_t i) {
    std::vector<double> px(n + 1);
    basis.mode_profile(grid.x_um(static_cast<int>(i)), px);
    for (int j = 0; j < grid.height; ++j) f.values(i, j) = px[n] * ycol(j);
  });
  return f;
}

// Field sum_k c_k u_k on the tables' grid.
inline FieldGrid synthesize(const ModeTables& t, const Eigen::VectorXcd& coeffs) {
  const int orders = t.basis.max_order() + 1;
  if (static_cast<std::size_t>(coeffs.size()) != t.size()) {
    throw ValueRangeError("coefficient vector length does not match the basis");
  }
  Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(orders, orders);
  const auto& modes = t.basis.modes();
  for (std::size_t k = 0; k < modes.size(); ++k) c(modes[k].n, modes[k].m) = coeffs(k);
  FieldGrid f(t.grid);
  f.values = t.x.transpose().cast<cplx>() * c * t.y.cast<cplx>();
  return f;
}

// Quadrature projections <u_k|E> for every basis mode.
inline Eigen::VectorXcd project(const ModeTables& t, const FieldGrid& field) {
  if (!(field.grid == t.grid)) throw GridMismatch("field grid does not match the mode tables");
  const Eigen::MatrixXcd p = t.x.cast<cplx>() * field.values * t.y.transpose().cast<cplx>();
  const auto& modes = t.basis.modes();
  Eigen::VectorXcd c(modes.size());
  for (std::size_t k = 0; k < modes.size(); ++k) c(k) = p(modes[k].n, modes[k].m) * t.grid.pixel_area();
  return c;
}

}  // namespace confocal
