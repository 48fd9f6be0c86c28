#include "flexgrid/convexify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

namespace flexgrid {

namespace {

constexpr double kEps = 1e-12;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a.p - b.p, a.q - b.q, a.v - b.v}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.q * b.v - a.v * b.q, a.v * b.p - a.p * b.v, a.p * b.q - a.q * b.p};
}
double dot(const Vec3& a, const Vec3& b) { return a.p * b.p + a.q * b.q + a.v * b.v; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.p != b.p) return a.p < b.p;
  if (a.q != b.q) return a.q < b.q;
  return a.v < b.v;
}

struct Face {
  int a, b, c;
  Vec3 n;  // outward, not normalized
  double d;
  bool alive = true;
};

Face make_face(const std::vector<Vec3>& pts, int a, int b, int c, const Vec3& inside) {
  Face f{a, b, c, {}, 0.0, true};
  f.n = cross(sub(pts[static_cast<size_t>(b)], pts[static_cast<size_t>(a)]),
              sub(pts[static_cast<size_t>(c)], pts[static_cast<size_t>(b)]));
  f.d = dot(f.n, pts[static_cast<size_t>(a)]);
  if (dot(f.n, inside) > f.d) {  // flip outward
    std::swap(f.b, f.c);
    f.n = {-f.n.p, -f.n.q, -f.n.v};
    f.d = -f.d;
  }
  return f;
}

}  // namespace

std::vector<Vec3> for_point_cloud(const PqvFor& region) {
  std::vector<Vec3> out;
  for (const ForSlice& s : region.slices) {
    for (const PqPoint& pt : s.polygon) out.push_back({pt.p, pt.q, s.v_slack});
  }
  return out;
}

TriangulatedHull convex_hull(const std::vector<Vec3>& points) {
  std::vector<Vec3> pts = points;
  std::sort(pts.begin(), pts.end(), lex_less);
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Vec3& a, const Vec3& b) {
                          return std::abs(a.p - b.p) < kEps && std::abs(a.q - b.q) < kEps &&
                                 std::abs(a.v - b.v) < kEps;
                        }),
            pts.end());
  const int n = static_cast<int>(pts.size());
  if (n < 4) throw NumericalError("hull input degenerate: fewer than 4 distinct points");

  // Initial simplex: lexicographic extremes, then farthest from line / plane,
  // ties resolved toward the lexicographically smaller point.
  const int i0 = 0, i1 = n - 1;
  const Vec3 axis = sub(pts[static_cast<size_t>(i1)], pts[static_cast<size_t>(i0)]);
  const double axis_len = norm(axis);
  if (axis_len < kEps) throw NumericalError("hull input degenerate (affine rank 0)");

  int i2 = -1;
  double best = kEps;
  for (int i = 0; i < n; ++i) {
    const Vec3 w = sub(pts[static_cast<size_t>(i)], pts[static_cast<size_t>(i0)]);
    const double dist = norm(cross(w, axis)) / axis_len;
    if (dist > best + kEps) {
      best = dist;
      i2 = i;
    }
  }
  if (i2 < 0) throw NumericalError("hull input degenerate (affine rank 1)");

  const Vec3 plane_n = cross(axis, sub(pts[static_cast<size_t>(i2)], pts[static_cast<size_t>(i0)]));
  const double plane_len = norm(plane_n);
  int i3 = -1;
  best = kEps;
  for (int i = 0; i < n; ++i) {
    const double dist =
        std::abs(dot(plane_n, sub(pts[static_cast<size_t>(i)], pts[static_cast<size_t>(i0)]))) /
        plane_len;
    if (dist > best + kEps) {
      best = dist;
      i3 = i;
    }
  }
  if (i3 < 0) throw NumericalError("hull input degenerate (affine rank 2)");

  const Vec3 inside{
      (pts[static_cast<size_t>(i0)].p + pts[static_cast<size_t>(i1)].p +
       pts[static_cast<size_t>(i2)].p + pts[static_cast<size_t>(i3)].p) / 4.0,
      (pts[static_cast<size_t>(i0)].q + pts[static_cast<size_t>(i1)].q +
       pts[static_cast<size_t>(i2)].q + pts[static_cast<size_t>(i3)].q) / 4.0,
      (pts[static_cast<size_t>(i0)].v + pts[static_cast<size_t>(i1)].v +
       pts[static_cast<size_t>(i2)].v + pts[static_cast<size_t>(i3)].v) / 4.0};

  std::vector<Face> faces;
  faces.push_back(make_face(pts, i0, i1, i2, inside));
  faces.push_back(make_face(pts, i0, i1, i3, inside));
  faces.push_back(make_face(pts, i0, i2, i3, inside));
  faces.push_back(make_face(pts, i1, i2, i3, inside));

  for (int i = 0; i < n; ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;
    const Vec3& x = pts[static_cast<size_t>(i)];
    std::vector<int> visible;
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
      if (faces[static_cast<size_t>(f)].alive &&
          dot(faces[static_cast<size_t>(f)].n, x) > faces[static_cast<size_t>(f)].d + kEps) {
        visible.push_back(f);
      }
    }
    if (visible.empty()) continue;

    // horizon: directed edges of visible faces whose neighbor stays hidden
    std::map<std::pair<int, int>, int> edge_count;
    for (int f : visible) {
      const Face& face = faces[static_cast<size_t>(f)];
      const int vs[3] = {face.a, face.b, face.c};
      for (int e = 0; e < 3; ++e) {
        edge_count[{vs[e], vs[(e + 1) % 3]}] += 1;
      }
    }
    std::vector<std::pair<int, int>> horizon;
    for (const auto& [edge, cnt] : edge_count) {
      (void)cnt;
      if (edge_count.find({edge.second, edge.first}) == edge_count.end()) {
        horizon.push_back(edge);
      }
    }
    if (horizon.empty()) {
      throw NumericalError("hull construction failed: empty horizon");
    }
    for (int f : visible) faces[static_cast<size_t>(f)].alive = false;
    for (const auto& [u, w] : horizon) {
      faces.push_back(make_face(pts, u, w, i, inside));
    }
  }

  // canonical output: referenced vertices in lexicographic order, facets
  // rotated to start at their smallest index and sorted
  std::vector<int> used(static_cast<size_t>(n), -1);
  TriangulatedHull hull;
  for (int i = 0; i < n; ++i) {
    for (const Face& f : faces) {
      if (f.alive && (f.a == i || f.b == i || f.c == i)) {
        used[static_cast<size_t>(i)] = static_cast<int>(hull.vertices.size());
        hull.vertices.push_back(pts[static_cast<size_t>(i)]);
        break;
      }
    }
  }
  for (const Face& f : faces) {
    if (!f.alive) continue;
    std::array<int, 3> t = {used[static_cast<size_t>(f.a)], used[static_cast<size_t>(f.b)],
                            used[static_cast<size_t>(f.c)]};
    while (t[0] != std::min({t[0], t[1], t[2]})) {
      std::rotate(t.begin(), t.begin() + 1, t.end());
    }
    hull.facets.push_back(t);
  }
  std::sort(hull.facets.begin(), hull.facets.end());

  double six_vol = 0.0;
  for (const auto& t : hull.facets) {
    const Vec3& a = hull.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = hull.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = hull.vertices[static_cast<size_t>(t[2])];
    six_vol += dot(a, cross(b, c));
  }
  hull.volume = six_vol / 6.0;
  return hull;
}

HalfSpaceSet half_spaces(const TriangulatedHull& hull, int bus_id) {
  Vec3 centroid{0, 0, 0};
  for (const Vec3& v : hull.vertices) {
    centroid.p += v.p;
    centroid.q += v.q;
    centroid.v += v.v;
  }
  const double nv = static_cast<double>(hull.vertices.size());
  centroid = {centroid.p / nv, centroid.q / nv, centroid.v / nv};

  HalfSpaceSet set;
  set.bus_id = bus_id;
  for (const auto& t : hull.facets) {
    const Vec3& a = hull.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = hull.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = hull.vertices[static_cast<size_t>(t[2])];
    Vec3 n = cross(sub(b, a), sub(c, b));
    const double len = norm(n);
    if (len < kEps) throw NumericalError("zero-area hull facet");
    n = {n.p / len, n.q / len, n.v / len};
    double d = dot(n, a);
    if (dot(n, centroid) > d) {
      n = {-n.p, -n.q, -n.v};
      d = -d;
    }
    bool dup = false;
    for (const HalfSpace& r : set.rows) {
      if (std::abs(r.n_p - n.p) <= 1e-9 && std::abs(r.n_q - n.q) <= 1e-9 &&
          std::abs(r.n_v - n.v) <= 1e-9 && std::abs(r.d - d) <= 1e-9) {
        dup = true;
        break;
      }
    }
    if (!dup) set.rows.push_back({n.p, n.q, n.v, d});
  }
  return set;
}

double over_approximation(const PqvFor& region, const TriangulatedHull& hull) {
  const double stack = polyhedral_volume(region);
  if (stack <= 0.0) throw ValidationError("region has zero volume");
  return 100.0 * (hull.volume - stack) / stack;
}

std::string hull_to_json_text(const TriangulatedHull& hull, const HalfSpaceSet& rows) {
  nlohmann::json root;
  root["bus_id"] = rows.bus_id;
  root["volume"] = hull.volume;
  root["vertices"] = nlohmann::json::array();
  for (const Vec3& v : hull.vertices) root["vertices"].push_back({v.p, v.q, v.v});
  root["facets"] = nlohmann::json::array();
  for (const auto& t : hull.facets) root["facets"].push_back({t[0], t[1], t[2]});
  root["half_spaces"] = nlohmann::json::array();
  for (const HalfSpace& r : rows.rows) {
    root["half_spaces"].push_back({r.n_p, r.n_q, r.n_v, r.d});
  }
  return root.dump(2) + "\n";
}

}  // namespace flexgrid
