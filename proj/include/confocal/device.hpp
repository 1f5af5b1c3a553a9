#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "confocal/finesse.hpp"
#include "confocal/mask.hpp"
#include "confocal/waist.hpp"

namespace confocal {

// How the quoted 2% graphene absorption is spread over the two midplane crossings.
enum class GrapheneConvention {
  per_pass,        // 2% intensity loss at every crossing
  per_roundtrip,   // 2% intensity loss per full round trip, split over both crossings
};

struct Rect {
  double x0_um, x1_um, y0_um, y1_um;
};

// Gated TMD heterostructure on a substrate with two gold leads. The substrate itself is
// transparent here; its loss lives in the cavity's excess-loss calibration.
struct LeadsDevice {
  int width = 400;
  int height = 400;
  double pitch_um = 0.75;
  double substrate_finesse = 181.0;
  double hbn_finesse = 120.0;
  double graphene_absorption = 0.02;
  GrapheneConvention convention = GrapheneConvention::per_pass;
  Rect hbn{-80.0, 60.0, -10.0, 80.0};
  Rect tmd{-60.0, -10.0, 20.0, 70.0};
  double wire_width_um = 3.0;
  double wire_gap_um = 1.0;
  double wire_end_y_um = -10.0;  // wires run from the bottom edge up to here

  // Named probe points, one per region.
  Point substrate_point() const { return {105.0, -60.0}; }
  Point hbn_point() const { return {30.0, 30.0}; }
  Point tmd_point() const { return {-35.0, 45.0}; }
  Point gap_point() const { return {0.0, -45.0}; }
};

inline double graphene_amplitude(double absorption, GrapheneConvention c) {
  const double crossings = c == GrapheneConvention::per_pass ? 1.0 : 2.0;
  return std::pow(1.0 - absorption, 0.5 / crossings);
}

namespace detail {

// Fraction of the pixel [x-p/2, x+p/2] x [y-p/2, y+p/2] covered by the rectangle.
inline double coverage(const Rect& r, double x, double y, double p) {
  const double ox = std::max(0.0, std::min(x + 0.5 * p, r.x1_um) - std::max(x - 0.5 * p, r.x0_um));
  const double oy = std::max(0.0, std::min(y + 0.5 * p, r.y1_um) - std::max(y - 0.5 * p, r.y0_um));
  return ox * oy / (p * p);
}

}  // namespace detail

// Rasterizes the device with area-weighted pixel coverage so the 1 um gap survives at
// sub-micron pitch.
inline TransmissionMask leads_device_mask(const LeadsDevice& d) {
  const GridSpec grid{d.width, d.height, d.pitch_um};
  // The substrate-region round trip returns g_sub; hBN lowers it to g_hbn over two crossings.
  const double hbn = std::sqrt(roundtrip_for_finesse(d.hbn_finesse) / roundtrip_for_finesse(d.substrate_finesse));
  const double tmd = hbn * graphene_amplitude(d.graphene_absorption, d.convention);
  const double far = -2.0 * grid.half_height_um();
  const Rect left{-0.5 * d.wire_gap_um - d.wire_width_um, -0.5 * d.wire_gap_um, far, d.wire_end_y_um};
  const Rect right{0.5 * d.wire_gap_um, 0.5 * d.wire_gap_um + d.wire_width_um, far, d.wire_end_y_um};

  TransmissionMask m = uniform_mask(grid, 1.0);
  m.label = "substrate+hBN+TMD/graphene+Au leads";
  for (int j = 0; j < grid.height; ++j)
    for (int i = 0; i < grid.width; ++i) {
      const double x = grid.x_um(i), y = grid.y_um(j), p = grid.pitch_um;
      const double c_hbn = detail::coverage(d.hbn, x, y, p);
      const double c_tmd = detail::coverage(d.tmd, x, y, p);
      const double c_gold = detail::coverage(left, x, y, p) + detail::coverage(right, x, y, p);
      // TMD sits on hBN; gold sits on the substrate outside the stack.
      double t = (1.0 - c_hbn) + (c_hbn - c_tmd) * hbn + c_tmd * tmd;
      t *= 1.0 - std::min(1.0, c_gold);
      m.amplitude(i, j) = std::clamp(t, 0.0, 1.0);
    }
  return m;
}

}  // namespace confocal
