#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexgrid/errors.hpp"

namespace flexgrid {

struct PqPoint {
  double p = 0.0;
  double q = 0.0;
};

struct ForSlice {
  double v_slack = 1.0;
  std::vector<PqPoint> polygon;  // simple, counter-clockwise
};

struct OpPoint {
  double p = 0.0;
  double q = 0.0;
  double v = 1.0;
};

// Flexibility region of one aggregated distribution grid seen from its HV
// coupling bus: a stack of (p, q) polygons indexed by the coupling-bus
// voltage. One slice means no modeled voltage dependence.
struct PqvFor {
  int bus_id = -1;
  OpPoint op0;
  std::vector<ForSlice> slices;
  bool is_3d() const { return slices.size() >= 2; }
};

void validate(const PqvFor& region);
PqvFor load_for(const std::string& path);
void save_for(const PqvFor& region, const std::string& path);
PqvFor for_from_json_text(const std::string& text, const std::string& origin);
std::string for_to_json_text(const PqvFor& region);

// Deterministic crescent-shaped stack: non-convex in (p, q) at every slice,
// capacitive extent shrinking as the coupling voltage rises. All slices share
// one P grid so stacked vertices align vertically.
PqvFor synth_for(int bus_id, std::uint64_t seed, int n_slices);

// Rigid shift in (p, q) plus a new recorded op voltage; slice voltages stay.
PqvFor translate_for(const PqvFor& region, double target_p, double target_q,
                     double target_v);

double polygon_area(const std::vector<PqPoint>& polygon);  // signed, CCW > 0
bool point_in_polygon(const std::vector<PqPoint>& polygon, double p, double q,
                      double boundary_eps = 1e-9);

// Upper/lower boundary of a vertically convex polygon as piecewise-linear
// functions of p. Breakpoints may repeat a p value at a vertical interior
// edge; evaluation then takes the conservative side (min above, max below).
struct BoundaryChain {
  std::vector<double> p;
  std::vector<double> q;
  double eval(double at, bool take_min_on_tie) const;
};

struct BoundaryChains {
  BoundaryChain upper, lower;
  double p_min = 0.0, p_max = 0.0;
  double eval_upper(double at) const { return upper.eval(at, true); }
  double eval_lower(double at) const { return lower.eval(at, false); }
};

// Throws ValidationError when some vertical line crosses the boundary more
// than twice (the polygon has no single-valued upper/lower boundary).
BoundaryChains boundary_chains(const std::vector<PqPoint>& polygon);

// One active-power segment of a 2D segmentation. Offsets are relative to the
// region's op0: the segment covers p in [op0.p + p_c_min, +dp_max], and its
// reactive band is q - op0.q in [q_c_init_lo + m_lo*s, q_c_init_up + m_up*s]
// for s in [0, dp_max].
struct Segment2D {
  int ki = 0;
  double p_c_min = 0.0, dp_max = 0.0;
  double m_up = 0.0, m_lo = 0.0;
  double q_c_init_up = 0.0, q_c_init_lo = 0.0;
};

// One (p, v) box of a 3D segmentation. Reactive bounds vary with the voltage
// offset only: q - op0.q in [q_c_init_lo + m_lo*t, q_c_init_up + m_up*t] for
// t in [0, dv_max], any p inside the box.
struct Segment3D {
  int ki = 0, li = 0;
  double p_c_min = 0.0, dp_max = 0.0;
  double v_c_min = 0.0, dv_max = 0.0;
  double m_up = 0.0, m_lo = 0.0;
  double q_c_init_up = 0.0, q_c_init_lo = 0.0;
};

struct SegmentedFor {
  int bus_id = -1;
  int dims = 2;
  OpPoint op0;  // reference point the segment offsets are measured from
  std::vector<Segment2D> seg2;
  std::vector<Segment3D> seg3;
  double c_max = 0.0;
};

// Inscribed trapezoidal segmentation of the slice nearest op0.v, exactly
// k_max segments tiling its P extent. Throws when a segment's band collapses
// (k_max too small for the concavity), reporting the worst deficit.
SegmentedFor segment_2d(const PqvFor& region, int k_max);

// Inscribed box segmentation of a multi-slice region: 2*k_max P segments by
// l_max voltage segments.
SegmentedFor segment_3d(const PqvFor& region, int k_max, int l_max);

// Membership at coupling voltage v. Multi-slice regions interpolate the two
// bracketing slices vertex-wise; v outside the covered slice range is not
// certified (false). Throws when v is outside [0.94, 1.06].
bool contains(const PqvFor& region, double p, double q, double v);

// Prismatoid volume of the slice stack (needs >= 2 slices).
double polyhedral_volume(const PqvFor& region);
// Total volume of the inscribed boxes (dims == 3 only).
double polyhedral_volume(const SegmentedFor& seg);

}  // namespace flexgrid
