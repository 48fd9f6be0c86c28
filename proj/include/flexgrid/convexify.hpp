#pragma once

#include <array>
#include <string>
#include <vector>

#include "flexgrid/for_geometry.hpp"

namespace flexgrid {

struct Vec3 {
  double p = 0.0, q = 0.0, v = 0.0;
};

// Triangulated convex hull with outward-oriented facets in canonical order
// (vertices sorted lexicographically, facets rotated/sorted by index).
struct TriangulatedHull {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> facets;
  double volume = 0.0;
};

struct HalfSpace {
  double n_p = 0.0, n_q = 0.0, n_v = 0.0, d = 0.0;  // n.x <= d, |n| = 1
};

struct HalfSpaceSet {
  int bus_id = -1;
  std::vector<HalfSpace> rows;
};

// Every slice vertex of the stack as a (p, q, v_slack) point.
std::vector<Vec3> for_point_cloud(const PqvFor& region);

// Deterministic incremental hull (lexicographic insertion and tie-breaking).
// Throws NumericalError on degenerate input, naming the affine rank.
TriangulatedHull convex_hull(const std::vector<Vec3>& points);

// One inequality per facet, unit normals, oriented against the centroid,
// coplanar duplicates merged within 1e-9.
HalfSpaceSet half_spaces(const TriangulatedHull& hull, int bus_id);

// Relative volume overshoot of the hull against the slice stack, in percent.
double over_approximation(const PqvFor& region, const TriangulatedHull& hull);

std::string hull_to_json_text(const TriangulatedHull& hull, const HalfSpaceSet& rows);

}  // namespace flexgrid
