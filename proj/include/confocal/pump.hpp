#pragma once

#include <cmath>
#include <string>

#include "confocal/cavity_solver.hpp"
#include "confocal/mask.hpp"

namespace confocal {

enum class PumpKind { tem00, point, gaussian, field };

struct PumpSpec {
  PumpKind kind = PumpKind::tem00;
  double x_um = 0.0;
  double y_um = 0.0;
  double waist_um = 0.0;       // gaussian only
  TransmissionMask field_map;  // field only: amplitude/phase map on its own grid
};

inline FieldGrid gaussian_field(const GridSpec& grid, double waist_um, double x0_um, double y0_um) {
  if (!(waist_um > 0.0)) throw ValueRangeError("gaussian pump waist must be positive");
  FieldGrid f(grid);
  for (int j = 0; j < grid.height; ++j)
    for (int i = 0; i < grid.width; ++i) {
      const double dx = grid.x_um(i) - x0_um, dy = grid.y_um(j) - y0_um;
      f.values(i, j) = std::exp(-(dx * dx + dy * dy) / (waist_um * waist_um));
    }
  const double p = f.power();
  if (!(p > 0.0)) throw DegenerateInput("gaussian pump has no power on the grid");
  f.values /= std::sqrt(p);
  return f;
}

// Unit-power pump field on the tables' grid. A point pump is the family-independent point
// projection onto the basis.
inline FieldGrid make_pump(const PumpSpec& spec, const ModeTables& t) {
  switch (spec.kind) {
    case PumpKind::tem00: {
      Eigen::VectorXcd c = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(t.size()));
      const auto k = t.basis.index_of(0, 0);
      if (!k) throw DegenerateInput("basis has no TEM00 mode");
      c(*k) = 1.0;
      return synthesize(t, c);
    }
    case PumpKind::point:
      return synthesize(t, point_projection(t, {spec.x_um, spec.y_um}));
    case PumpKind::gaussian:
      return gaussian_field(t.grid, spec.waist_um, spec.x_um, spec.y_um);
    case PumpKind::field: {
      const TransmissionMask m = resample(spec.field_map, t.grid);
      FieldGrid f(t.grid);
      f.values = m.transmittance();
      const double p = f.power();
      if (!(p > 0.0)) throw DegenerateInput("pump field map has no power on the grid");
      f.values /= std::sqrt(p);
      return f;
    }
  }
  throw ValueRangeError("unknown pump kind");
}

}  // namespace confocal
