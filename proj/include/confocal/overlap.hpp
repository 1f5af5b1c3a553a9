#pragma once

#include <Eigen/Dense>

#include "confocal/errors.hpp"
#include "confocal/mask.hpp"
#include "confocal/mode_basis.hpp"

namespace confocal {

namespace detail {

// Index of the unordered order pair {a, b} among all pairs of 0..orders-1.
inline Eigen::Index pair_index(int a, int b, int orders) {
  if (a > b) std::swap(a, b);
  return static_cast<Eigen::Index>(a) * orders - static_cast<Eigen::Index>(a) * (a - 1) / 2 + (b - a);
}

// Rows are products u_a(s) u_b(s) of 1D profiles for every unordered pair {a, b}.
inline Eigen::MatrixXd pair_products(const Eigen::MatrixXd& profiles) {
  const int orders = static_cast<int>(profiles.rows());
  Eigen::MatrixXd out(orders * (orders + 1) / 2, profiles.cols());
  for (int a = 0; a < orders; ++a)
    for (int b = a; b < orders; ++b)
      out.row(pair_index(a, b, orders)) = profiles.row(a).cwiseProduct(profiles.row(b));
  return out;
}

// G(p{n,n'}, p{m,m'}) = sum_ij u_n(x_i) u_n'(x_i) w(i,j) u_m(y_j) u_m'(y_j), exploiting
// separability of the HG modes: two GEMMs instead of a per-entry pixel sum.
inline Eigen::MatrixXd pair_moments(const ModeTables& t, const Eigen::MatrixXd& weight) {
  const Eigen::MatrixXd xp = pair_products(t.x);
  const Eigen::MatrixXd yp = pair_products(t.y);
  const Eigen::MatrixXd s = weight * yp.transpose();
  return xp * s;
}

inline Eigen::MatrixXd gather(const ModeTables& t, const Eigen::MatrixXd& moments) {
  const int orders = t.basis.max_order() + 1;
  const auto& modes = t.basis.modes();
  const auto size = static_cast<Eigen::Index>(modes.size());
  Eigen::MatrixXd out(size, size);
  for (Eigen::Index k = 0; k < size; ++k)
    for (Eigen::Index l = k; l < size; ++l) {
      const double v = moments(pair_index(modes[k].n, modes[l].n, orders), pair_index(modes[k].m, modes[l].m, orders));
      out(k, l) = v;
      out(l, k) = v;
    }
  return out * t.grid.pixel_area();
}

}  // namespace detail

// Mode-space matrix of a real weight w(r): W_kl = integral u_k w u_l dA by midpoint quadrature.
inline Eigen::MatrixXd weighted_overlap(const Eigen::MatrixXd& weight, const ModeTables& t) {
  if (weight.rows() != t.grid.width || weight.cols() != t.grid.height) {
    throw GridMismatch("weight grid does not match the mode tables");
  }
  return detail::gather(t, detail::pair_moments(t, weight));
}

// B_kl = integral u_k*(r) t(r) u_l(r) dA. The mask must share the tables' grid unless
// `allow_resample` is set, in which case it is resampled by nearest pixel.
inline Eigen::MatrixXcd mask_overlap_matrix(const TransmissionMask& mask, const ModeTables& t,
                                            bool allow_resample = false) {
  validate(mask);
  if (!(mask.grid == t.grid)) {
    if (!allow_resample) {
      throw GridMismatch("mask grid (" + std::to_string(mask.grid.width) + "x" + std::to_string(mask.grid.height) +
                         " @ " + std::to_string(mask.grid.pitch_um) + " um) differs from the basis grid; " +
                         "request resampling explicitly");
    }
    return mask_overlap_matrix(resample(mask, t.grid), t, false);
  }
  if (!mask.has_phase()) return weighted_overlap(mask.amplitude, t).cast<cplx>();
  const Eigen::MatrixXcd tr = mask.transmittance();
  const Eigen::MatrixXd re = weighted_overlap(tr.real(), t);
  const Eigen::MatrixXd im = weighted_overlap(tr.imag(), t);
  Eigen::MatrixXcd b(re.rows(), re.cols());
  b.real() = re;
  b.imag() = im;
  return b;
}

// Inverse of the pair-moment construction: evaluates sum_kl u_k(r) W_kl u_l(r) on the grid.
inline Eigen::MatrixXd sandwich_diagonal(const ModeTables& t, const Eigen::MatrixXd& w) {
  const int orders = t.basis.max_order() + 1;
  const auto& modes = t.basis.modes();
  const Eigen::Index pairs = orders * (orders + 1) / 2;
  Eigen::MatrixXd wsym = Eigen::MatrixXd::Zero(pairs, pairs);
  for (std::size_t k = 0; k < modes.size(); ++k)
    for (std::size_t l = 0; l < modes.size(); ++l)
      wsym(detail::pair_index(modes[k].n, modes[l].n, orders), detail::pair_index(modes[k].m, modes[l].m, orders)) +=
          w(k, l);
  const Eigen::MatrixXd xp = detail::pair_products(t.x);
  const Eigen::MatrixXd yp = detail::pair_products(t.y);
  return xp.transpose() * (wsym * yp);
}

}  // namespace confocal
