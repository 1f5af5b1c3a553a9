#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "confocal/errors.hpp"
#include "confocal/finesse.hpp"
#include "confocal/geometry.hpp"
#include "confocal/lineshape.hpp"
#include "confocal/mask.hpp"
#include "confocal/mode_basis.hpp"
#include "confocal/overlap.hpp"
#include "confocal/waist.hpp"

namespace confocal {

using TablesPtr = std::shared_ptr<const ModeTables>;

inline TablesPtr share_tables(const ModeBasis& basis, const GridSpec& grid) {
  return std::make_shared<const ModeTables>(make_mode_tables(basis, grid));
}

inline TablesPtr share_tables(const ModeBasis& basis) { return share_tables(basis, default_grid(basis)); }

struct RoundTripOperator {
  TablesPtr tables;
  CavityGeometry geometry;
  Eigen::MatrixXcd matrix;
  double detuning_hz = 0.0;

  const ModeBasis& basis() const { return tables->basis; }
};

// exp(i 2 pi (nu_k - nu_ref - detuning) / FSR) per basis mode, with nu_ref the resonance of
// the lowest-order mode in the basis. Whole FSRs drop out, so only the Gouy fractions enter.
inline Eigen::VectorXcd roundtrip_phases(const ModeBasis& basis, double detuning_hz = 0.0) {
  const CavityGeometry& geo = basis.geometry();
  const double gouy = gouy_fraction(geo);
  const double fsr = fsr_hz(geo);
  const auto& modes = basis.modes();
  const int k0 = modes.front().order();
  Eigen::VectorXcd p(modes.size());
  for (std::size_t k = 0; k < modes.size(); ++k) {
    double cycles = (modes[k].order() - k0) * gouy - detuning_hz / fsr;
    cycles -= std::round(cycles);
    p(k) = std::polar(1.0, 2.0 * std::numbers::pi * cycles);
  }
  return p;
}

namespace detail {

inline void require_same_cavity(const CavityGeometry& a, const CavityGeometry& b) {
  if (a.cavity_length_mm != b.cavity_length_mm || a.mirror_radius_mm != b.mirror_radius_mm ||
      a.wavelength_nm != b.wavelength_nm) {
    throw InvalidGeometry("mode basis was built for a different cavity geometry");
  }
}

}  // namespace detail

// M = sqrt(R1 R2 (1 - excess)) P(detuning) B B: the midplane screen is crossed twice per trip.
inline RoundTripOperator round_trip_operator(const CavityGeometry& geometry, const TransmissionMask& mask,
                                             TablesPtr tables, double detuning_hz = 0.0,
                                             bool allow_resample = false) {
  validate(geometry);
  detail::require_same_cavity(geometry, tables->basis.geometry());
  const Eigen::MatrixXcd b = mask_overlap_matrix(mask, *tables, allow_resample);
  const Eigen::VectorXcd p = roundtrip_phases(tables->basis, detuning_hz);
  RoundTripOperator op{std::move(tables), geometry, Eigen::MatrixXcd(), detuning_hz};
  op.matrix = roundtrip_amplitude(geometry) * (p.asDiagonal() * (b * b));
  return op;
}

struct Supermode {
  TablesPtr tables;
  Eigen::VectorXcd coefficients;
  double effective_waist_um = 0.0;
  Point center;

  FieldGrid field() const { return synthesize(*tables, coefficients); }
};

// Projection of a point source at r0: c_k = u_k(r0), normalized.
inline Eigen::VectorXcd point_projection(const ModeTables& t, Point p) {
  const auto& modes = t.basis.modes();
  const int orders = t.basis.max_order() + 1;
  std::vector<double> px(orders), py(orders);
  t.basis.mode_profile(p.x_um, px);
  t.basis.mode_profile(p.y_um, py);
  Eigen::VectorXcd c(modes.size());
  for (std::size_t k = 0; k < modes.size(); ++k) c(k) = px[modes[k].n] * py[modes[k].m];
  const double norm = c.norm();
  if (!(norm > 0.0)) throw DegenerateInput("point source has no projection onto the mode family");
  return c / norm;
}

// Builds the supermode record: normalizes, synthesizes and measures the waist. `around`
// selects which parity twin the waist and centre refer to.
inline Supermode make_supermode(TablesPtr tables, Eigen::VectorXcd coeffs, std::optional<Point> around = std::nullopt) {
  const double norm = coeffs.norm();
  if (!(norm > 0.0)) throw DegenerateInput("supermode has zero coefficients");
  coeffs /= norm;
  const FieldGrid f = synthesize(*tables, coeffs);
  const WaistMeasurement w = measure_waist(f, around);
  return {std::move(tables), std::move(coeffs), w.waist_um, w.center};
}

inline Supermode point_supermode(TablesPtr tables, Point p) {
  Eigen::VectorXcd c = point_projection(*tables, p);
  return make_supermode(std::move(tables), std::move(c), p);
}

// Eigenvalues of a round-trip matrix grouped into numerically degenerate clusters, each with
// the component of a seed vector lying in that cluster's eigenspace.
struct EigenCluster {
  cplx eigenvalue;
  Eigen::VectorXcd seed_component;
  std::vector<Eigen::Index> members;

  double weight() const { return seed_component.squaredNorm(); }
};

struct Decomposition {
  std::vector<EigenCluster> clusters;  // sorted by decreasing |eigenvalue|
  Eigen::MatrixXcd vectors;            // unit-norm eigenvectors as columns
  Eigen::VectorXcd values;
};

namespace detail {

inline bool is_hermitian(const Eigen::MatrixXcd& m) {
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

}  // namespace detail

inline Decomposition decompose(const Eigen::MatrixXcd& m, const Eigen::VectorXcd& seed,
                               double degeneracy_tolerance = 1e-9) {
  if (m.rows() != m.cols() || m.rows() != seed.size()) throw ValueRangeError("matrix and seed sizes differ");
  if (!m.allFinite()) throw ValueRangeError("round-trip matrix contains non-finite entries");
  Decomposition d;
  Eigen::VectorXcd coords;
  if (detail::is_hermitian(m)) {
    if (m.imag().cwiseAbs().maxCoeff() == 0.0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.real());
      d.values = es.eigenvalues().cast<cplx>();
      d.vectors = es.eigenvectors().cast<cplx>();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
      d.values = es.eigenvalues().cast<cplx>();
      d.vectors = es.eigenvectors();
    }
    coords = d.vectors.adjoint() * seed;
  } else {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m);
    if (es.info() != Eigen::Success) throw ConvergenceError("complex eigen-solver did not converge", NAN);
    d.values = es.eigenvalues();
    d.vectors = es.eigenvectors();
    for (Eigen::Index j = 0; j < d.vectors.cols(); ++j) d.vectors.col(j).normalize();
    coords = d.vectors.partialPivLu().solve(seed);
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d.values.size()));
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<Eigen::Index>(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(d.values(a)) > std::abs(d.values(b)); });
  std::vector<bool> used(order.size(), false);
  for (std::size_t a = 0; a < order.size(); ++a) {
    if (used[a]) continue;
    const cplx ref = d.values(order[a]);
    const double tol = degeneracy_tolerance * std::max(1.0, std::abs(ref));
    EigenCluster c{ref, Eigen::VectorXcd::Zero(seed.size()), {}};
    for (std::size_t b = a; b < order.size(); ++b) {
      if (used[b]) continue;
      if (std::abs(std::abs(d.values(order[b])) - std::abs(ref)) > tol) break;
      if (std::abs(d.values(order[b]) - ref) > tol) continue;
      used[b] = true;
      c.members.push_back(order[b]);
      c.seed_component += coords(order[b]) * d.vectors.col(order[b]);
    }
    d.clusters.push_back(std::move(c));
  }
  return d;
}

struct DominantModeOptions {
  Eigen::Index dense_limit = 2000;
  int max_iterations = 20000;
  double tolerance = 1e-10;
  double degeneracy_tolerance = 1e-9;
};

struct Eigenpair {
  cplx eigenvalue;
  Eigen::VectorXcd vector;  // unit norm
  double residual = 0.0;    // |M v - lambda v| / |lambda|
};

// Largest-modulus eigenpair. Within a degenerate dominant eigenspace the vector of maximal
// overlap with the seed is returned (the seed's projection onto that space).
inline Eigenpair dominant_eigenpair(const Eigen::MatrixXcd& m, const std::optional<Eigen::VectorXcd>& seed = std::nullopt,
                                    const DominantModeOptions& opt = {}) {
  const Eigen::Index n = m.rows();
  if (n == 0 || m.cols() != n) throw ValueRangeError("round-trip matrix must be square and non-empty");
  if (!m.allFinite()) throw ValueRangeError("round-trip matrix contains non-finite entries");
  Eigen::VectorXcd s = seed ? *seed : Eigen::VectorXcd(Eigen::VectorXcd::Ones(n));
  if (s.size() != n) throw ValueRangeError("seed length does not match the operator");
  if (!(s.norm() > 0.0)) throw DegenerateInput("seed vector is zero");
  s.normalize();

  Eigenpair out;
  if (n <= opt.dense_limit) {
    const Decomposition d = decompose(m, s, opt.degeneracy_tolerance);
    const EigenCluster& top = d.clusters.front();
    out.eigenvalue = top.eigenvalue;
    if (top.weight() > 1e-24) {
      out.vector = top.seed_component.normalized();
    } else if (seed) {
      throw DegenerateInput("seed has no projection onto the dominant eigenspace");
    } else {
      out.vector = d.vectors.col(top.members.front());
    }
  } else {
    Eigen::VectorXcd v = s;
    cplx lambda = 0.0;
    double residual = INFINITY;
    for (int it = 0; it < opt.max_iterations; ++it) {
      const Eigen::VectorXcd w = m * v;
      lambda = v.dot(w);
      residual = (w - lambda * v).norm() / std::max(std::abs(lambda), 1e-300);
      if (residual < opt.tolerance) break;
      const double norm = w.norm();
      if (!(norm > 0.0)) throw DegenerateInput("seed lies in the null space of the round-trip matrix");
      v = w / norm;
    }
    if (!(residual < opt.tolerance)) {
      throw ConvergenceError("power iteration did not converge after " + std::to_string(opt.max_iterations) +
                                 " iterations",
                             residual);
    }
    out.eigenvalue = lambda;
    out.vector = v;
  }
  out.residual = (m * out.vector - out.eigenvalue * out.vector).norm() / std::max(std::abs(out.eigenvalue), 1e-300);
  return out;
}

struct DominantMode {
  cplx eigenvalue;
  Supermode supermode;
};

inline DominantMode dominant_mode(const RoundTripOperator& op, const std::optional<Eigen::VectorXcd>& seed = std::nullopt,
                                  std::optional<Point> around = std::nullopt, const DominantModeOptions& opt = {}) {
  Eigenpair e = dominant_eigenpair(op.matrix, seed, opt);
  return {e.eigenvalue, make_supermode(op.tables, std::move(e.vector), around)};
}

struct FinesseReport {
  Point position;
  double roundtrip_amplitude = 0.0;
  double finesse = 0.0;
  double linewidth_hz = 0.0;
};

inline FinesseReport finesse_from_amplitude(double amplitude, const CavityGeometry& geometry, Point position = {}) {
  FinesseReport r;
  r.position = position;
  r.roundtrip_amplitude = amplitude;
  r.finesse = finesse_from_roundtrip(amplitude);
  r.linewidth_hz = fsr_hz(geometry) / r.finesse;
  return r;
}

// c_k = <u_k|E> restricted to `family`, renormalized.
inline Supermode supermode_project(const FieldGrid& pump, TablesPtr tables, Family family,
                                   std::optional<Point> around = std::nullopt) {
  Eigen::VectorXcd c = project(*tables, pump);
  const auto& modes = tables->basis.modes();
  for (std::size_t k = 0; k < modes.size(); ++k)
    if (!in_family(modes[k].n, modes[k].m, family)) c(k) = 0.0;
  if (!(c.norm() > 1e-12 * std::sqrt(std::max(pump.power(), 1e-300)))) {
    throw DegenerateInput(std::string("pump has no projection onto the ") + to_string(family) + " family");
  }
  return make_supermode(std::move(tables), std::move(c), around);
}

namespace detail {

// Transmission lines of the eigen-clusters as excited by a seed: height |seed component|^2
// T1 T2 / (1 - |lambda|)^2, width FSR / F(|lambda|), centre at the eigenvalue phase.
inline std::vector<LorentzianLine> cluster_lines(const Decomposition& d, const CavityGeometry& geo) {
  const double fsr = fsr_hz(geo);
  const double t1t2 = (1.0 - geo.reflectivity_upper) * (1.0 - geo.reflectivity_lower);
  std::vector<LorentzianLine> lines;
  for (const auto& c : d.clusters) {
    const double a = std::abs(c.eigenvalue);
    if (a >= 1.0) throw PassivityViolation("round-trip eigenvalue with modulus " + std::to_string(a) + " >= 1");
    if (a < 1e-6 || c.weight() < 1e-14) continue;
    LorentzianLine l;
    l.center_hz = std::arg(c.eigenvalue) / (2.0 * std::numbers::pi) * fsr;
    l.fwhm_hz = fsr / finesse_from_roundtrip(a);
    l.height = c.weight() * t1t2 / ((1.0 - a) * (1.0 - a));
    lines.push_back(l);
  }
  return lines;
}

inline RoundTripOperator centred_operator(const TransmissionMask& mask, const TablesPtr& tables,
                                          const CavityGeometry& geometry, Point position) {
  if (!contains(mask.grid, position.x_um, position.y_um)) {
    throw ValueRangeError("position (" + std::to_string(position.x_um) + ", " + std::to_string(position.y_um) +
                          ") um lies outside the mask");
  }
  const TransmissionMask shifted = resample(mask, tables->grid, position.x_um, position.y_um);
  return round_trip_operator(geometry, shifted, tables);
}

}  // namespace detail

// Finesse seen by light injected at each position. The device is translated so the position
// sits on the cavity axis, the round-trip operator is diagonalized, and the point-source
// projection excites its eigenmodes; the finesse is FSR over the width of the resulting
// transmission line. On a translation-invariant region this equals the dominant-eigenvalue
// finesse; near absorbers it follows the modes the seed actually feeds rather than a global
// eigenvector that may live elsewhere on the device.
inline std::vector<FinesseReport> finesse_map(const TransmissionMask& mask, const TablesPtr& tables,
                                              const CavityGeometry& geometry, const std::vector<Point>& positions) {
  validate(mask);
  std::vector<FinesseReport> out;
  out.reserve(positions.size());
  const double fsr = fsr_hz(geometry);
  const Eigen::VectorXcd seed = point_projection(*tables, {0.0, 0.0});
  for (const Point& pos : positions) {
    const RoundTripOperator op = detail::centred_operator(mask, tables, geometry, pos);
    const Decomposition d = decompose(op.matrix, seed);
    const std::vector<LorentzianLine> lines = detail::cluster_lines(d, geometry);
    if (lines.empty()) throw DegenerateInput("no light reaches the cavity modes at this position");
    const double fwhm = LineSum(lines, fsr).fwhm_hz();
    const double finesse = fsr / fwhm;
    out.push_back(finesse_from_amplitude(roundtrip_for_finesse(finesse), geometry, pos));
  }
  return out;
}

struct PumpOptimization {
  FieldGrid pump;      // conjugate of the target supermode's midplane field, unit power
  Supermode supermode;
  cplx eigenvalue;
  double coupling = 0.0;  // |integral E_pump Psi dA|^2 for unit-power fields
};

// |integral E Psi dA|^2 / (|E|^2 |Psi|^2). A pump E couples into a cavity mode Psi through
// the bilinear overlap, so the phase-conjugate of Psi couples with unit efficiency.
inline double coupling_efficiency(const FieldGrid& pump, const FieldGrid& mode) {
  if (!(pump.grid == mode.grid)) throw GridMismatch("pump and mode fields are on different grids");
  const cplx overlap = pump.values.cwiseProduct(mode.values).sum() * pump.grid.pixel_area();
  const double norm = pump.power() * mode.power();
  if (!(norm > 0.0)) throw DegenerateInput("coupling efficiency of a zero field");
  return std::norm(overlap) / norm;
}

// Input field maximizing the power coupled into the supermode a point source at `target`
// excites most strongly (largest seed weight times resonant buildup).
inline PumpOptimization optimize_pump_coupling(const TransmissionMask& mask, const TablesPtr& tables,
                                               const CavityGeometry& geometry, Point target) {
  if (!contains(tables->grid, target.x_um, target.y_um)) {
    throw ValueRangeError("target lies outside the basis grid");
  }
  const TransmissionMask m = mask.grid == tables->grid ? mask : resample(mask, tables->grid);
  const RoundTripOperator op = round_trip_operator(geometry, m, tables);
  const Eigen::VectorXcd seed = point_projection(*tables, target);
  const Decomposition d = decompose(op.matrix, seed);
  const EigenCluster* best = nullptr;
  double best_score = -1.0;
  for (const auto& c : d.clusters) {
    const double a = std::abs(c.eigenvalue);
    if (a >= 1.0) throw PassivityViolation("round-trip eigenvalue with modulus >= 1");
    const double score = c.weight() / ((1.0 - a) * (1.0 - a));
    if (score > best_score) {
      best_score = score;
      best = &c;
    }
  }
  if (best == nullptr || !(best->weight() > 1e-24)) throw DegenerateInput("target couples to no supermode");
  PumpOptimization r{FieldGrid(), make_supermode(tables, best->seed_component, target), best->eigenvalue, 0.0};
  r.pump = r.supermode.field();
  r.pump.values = r.pump.values.conjugate();
  r.pump.values /= std::sqrt(r.pump.power());
  r.coupling = coupling_efficiency(r.pump, r.supermode.field());
  return r;
}

}  // namespace confocal
