#include "flexgrid/for_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flexgrid/grid_model.hpp"

namespace flexgrid {

using nlohmann::json;

namespace {

constexpr double kTieEps = 1e-12;
constexpr double kGeomEps = 1e-9;
constexpr double kHardVLo = 0.94;
constexpr double kHardVHi = 1.06;

double cross3(const PqPoint& o, const PqPoint& a, const PqPoint& b) {
  return (a.p - o.p) * (b.q - o.q) - (a.q - o.q) * (b.p - o.p);
}

std::vector<PqPoint> normalized_polygon(std::vector<PqPoint> poly, const std::string& ctx) {
  if (poly.size() >= 2 && std::abs(poly.front().p - poly.back().p) < kTieEps &&
      std::abs(poly.front().q - poly.back().q) < kTieEps) {
    poly.pop_back();  // accept explicitly closed rings
  }
  std::vector<PqPoint> out;
  for (const PqPoint& pt : poly) {
    if (!out.empty() && std::abs(pt.p - out.back().p) < kTieEps &&
        std::abs(pt.q - out.back().q) < kTieEps) {
      continue;
    }
    out.push_back(pt);
  }
  if (out.size() < 3) throw ValidationError(ctx + ": polygon needs at least 3 distinct vertices");
  const double area = polygon_area(out);
  if (std::abs(area) < 1e-12) throw ValidationError(ctx + ": polygon is degenerate (zero area)");
  if (area < 0.0) std::reverse(out.begin(), out.end());
  return out;
}

bool on_segment_collinear(const PqPoint& a, const PqPoint& b, const PqPoint& c) {
  return std::min(a.p, b.p) - kTieEps <= c.p && c.p <= std::max(a.p, b.p) + kTieEps &&
         std::min(a.q, b.q) - kTieEps <= c.q && c.q <= std::max(a.q, b.q) + kTieEps;
}

void check_simple(const std::vector<PqPoint>& poly, const std::string& ctx) {
  const int n = static_cast<int>(poly.size());
  auto sgn = [](double x) { return x > kTieEps ? 1 : (x < -kTieEps ? -1 : 0); };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      const PqPoint &a = poly[static_cast<size_t>(i)], &b = poly[static_cast<size_t>((i + 1) % n)];
      const PqPoint &c = poly[static_cast<size_t>(j)], &d = poly[static_cast<size_t>((j + 1) % n)];
      const int o1 = sgn(cross3(a, b, c)), o2 = sgn(cross3(a, b, d));
      const int o3 = sgn(cross3(c, d, a)), o4 = sgn(cross3(c, d, b));
      bool hit = (o1 != o2 && o3 != o4 && o1 * o2 != 0 && o3 * o4 != 0);
      if (!hit) {
        // collinear touch/overlap between non-adjacent edges is also invalid
        if ((o1 == 0 && on_segment_collinear(a, b, c)) ||
            (o2 == 0 && on_segment_collinear(a, b, d)) ||
            (o3 == 0 && on_segment_collinear(c, d, a)) ||
            (o4 == 0 && on_segment_collinear(c, d, b))) {
          hit = true;
        }
      }
      if (hit) {
        throw ValidationError(ctx + ": polygon self-intersects (edges " + std::to_string(i) +
                              " and " + std::to_string(j) + ")");
      }
    }
  }
}

double point_segment_distance(const PqPoint& a, const PqPoint& b, double p, double q) {
  const double dp = b.p - a.p, dq = b.q - a.q;
  const double len2 = dp * dp + dq * dq;
  double t = len2 > 0.0 ? ((p - a.p) * dp + (q - a.q) * dq) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double xp = a.p + t * dp, xq = a.q + t * dq;
  return std::hypot(p - xp, q - xq);
}

// Fit a chord of f over [a, b] that never rises above f (shift down by the
// worst overshoot at an interior breakpoint). Returns {slope, value at a}.
struct ChordFit {
  double m = 0.0;
  double at_a = 0.0;
  double shift = 0.0;
};

ChordFit chord_under(const BoundaryChain& f, double a, double b) {
  ChordFit fit;
  const double ya = f.eval(a, true), yb = f.eval(b, true);
  fit.m = (yb - ya) / (b - a);
  double deficit = 0.0;
  for (size_t i = 0; i < f.p.size(); ++i) {
    if (f.p[i] < a - kTieEps || f.p[i] > b + kTieEps) continue;
    deficit = std::max(deficit, ya + fit.m * (f.p[i] - a) - f.q[i]);
  }
  fit.shift = deficit;
  fit.at_a = ya - deficit;
  return fit;
}

ChordFit chord_over(const BoundaryChain& f, double a, double b) {
  ChordFit fit;
  const double ya = f.eval(a, false), yb = f.eval(b, false);
  fit.m = (yb - ya) / (b - a);
  double deficit = 0.0;
  for (size_t i = 0; i < f.p.size(); ++i) {
    if (f.p[i] < a - kTieEps || f.p[i] > b + kTieEps) continue;
    deficit = std::max(deficit, f.q[i] - (ya + fit.m * (f.p[i] - a)));
  }
  fit.shift = deficit;
  fit.at_a = ya + deficit;
  return fit;
}

// Axis tiling: mandatory interior cuts first (thinned deterministically when
// over budget), then uniform subdivision of the gaps, largest first.
std::vector<double> tile_axis(double lo, double hi, std::vector<double> mandatory, int n_segments) {
  std::vector<double> cuts;
  std::sort(mandatory.begin(), mandatory.end());
  for (double m : mandatory) {
    if (m <= lo + kGeomEps || m >= hi - kGeomEps) continue;
    if (!cuts.empty() && m - cuts.back() < kGeomEps) continue;
    cuts.push_back(m);
  }
  const int keep = n_segments - 1;
  if (static_cast<int>(cuts.size()) > keep) {
    std::vector<double> thinned;
    const double m_count = static_cast<double>(cuts.size());
    for (int j = 0; j < keep; ++j) {
      const size_t idx = static_cast<size_t>((j + 0.5) * m_count / keep);
      thinned.push_back(cuts[std::min(idx, cuts.size() - 1)]);
    }
    thinned.erase(std::unique(thinned.begin(), thinned.end()), thinned.end());
    cuts = thinned;
  }

  std::vector<double> bounds;
  bounds.push_back(lo);
  bounds.insert(bounds.end(), cuts.begin(), cuts.end());
  bounds.push_back(hi);
  const int gaps = static_cast<int>(bounds.size()) - 1;
  const int extra = n_segments - gaps;
  std::vector<int> pieces(static_cast<size_t>(gaps), 1);
  if (extra > 0) {
    const double total = hi - lo;
    std::vector<std::pair<double, int>> frac;  // fractional part, gap index
    int assigned = 0;
    for (int g = 0; g < gaps; ++g) {
      const double want = extra * (bounds[static_cast<size_t>(g + 1)] - bounds[static_cast<size_t>(g)]) / total;
      const int base = static_cast<int>(std::floor(want));
      pieces[static_cast<size_t>(g)] += base;
      assigned += base;
      frac.push_back({want - base, g});
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int r = 0; r < extra - assigned; ++r) {
      pieces[static_cast<size_t>(frac[static_cast<size_t>(r)].second)] += 1;
    }
  }

  std::vector<double> out;
  out.push_back(lo);
  for (int g = 0; g < gaps; ++g) {
    const double a = bounds[static_cast<size_t>(g)], b = bounds[static_cast<size_t>(g + 1)];
    const int k = pieces[static_cast<size_t>(g)];
    for (int j = 1; j <= k; ++j) out.push_back(a + (b - a) * j / k);
  }
  out.back() = hi;
  return out;
}

std::vector<double> slope_sign_changes(const BoundaryChain& c) {
  std::vector<double> out;
  std::vector<std::pair<double, int>> intervals;  // (start p, slope sign)
  auto sgn = [](double x) { return x > kGeomEps ? 1 : (x < -kGeomEps ? -1 : 0); };
  for (size_t i = 0; i + 1 < c.p.size(); ++i) {
    const double w = c.p[i + 1] - c.p[i];
    if (w < kTieEps) {
      out.push_back(c.p[i]);  // vertical jump: structural kink
      continue;
    }
    intervals.push_back({c.p[i], sgn((c.q[i + 1] - c.q[i]) / w)});
  }
  for (size_t i = 0; i + 1 < intervals.size(); ++i) {
    if (intervals[i].second != intervals[i + 1].second) {
      out.push_back(intervals[i + 1].first);
    }
  }
  return out;
}

// Interior Q-bound of a chain over a p interval: minimum (upper chain) or
// maximum (lower chain) across the interval endpoints and enclosed kinks.
double chain_extreme(const BoundaryChain& c, double a, double b, bool minimum) {
  double ext = minimum ? std::min(c.eval(a, true), c.eval(b, true))
                       : std::max(c.eval(a, false), c.eval(b, false));
  for (size_t i = 0; i < c.p.size(); ++i) {
    if (c.p[i] <= a + kTieEps || c.p[i] >= b - kTieEps) continue;
    ext = minimum ? std::min(ext, c.q[i]) : std::max(ext, c.q[i]);
  }
  return ext;
}

const ForSlice& nearest_slice(const PqvFor& region) {
  size_t best = 0;
  double best_d = std::abs(region.slices[0].v_slack - region.op0.v);
  for (size_t i = 1; i < region.slices.size(); ++i) {
    const double d = std::abs(region.slices[i].v_slack - region.op0.v);
    if (d < best_d - kTieEps) {
      best = i;
      best_d = d;
    }
  }
  return region.slices[best];
}

double max_abs_q(const PqvFor& region) {
  double m = 0.0;
  for (const ForSlice& s : region.slices) {
    for (const PqPoint& pt : s.polygon) m = std::max(m, std::abs(pt.q));
  }
  return m;
}

std::vector<PqPoint> lerp_polygon(const ForSlice& a, const ForSlice& b, double t) {
  std::vector<PqPoint> out(a.polygon.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i].p = (1 - t) * a.polygon[i].p + t * b.polygon[i].p;
    out[i].q = (1 - t) * a.polygon[i].q + t * b.polygon[i].q;
  }
  return out;
}

}  // namespace

double polygon_area(const std::vector<PqPoint>& polygon) {
  double a = 0.0;
  const size_t n = polygon.size();
  for (size_t i = 0; i < n; ++i) {
    const PqPoint& u = polygon[i];
    const PqPoint& v = polygon[(i + 1) % n];
    a += u.p * v.q - v.p * u.q;
  }
  return 0.5 * a;
}

bool point_in_polygon(const std::vector<PqPoint>& polygon, double p, double q,
                      double boundary_eps) {
  const size_t n = polygon.size();
  for (size_t i = 0; i < n; ++i) {
    if (point_segment_distance(polygon[i], polygon[(i + 1) % n], p, q) <= boundary_eps) {
      return true;
    }
  }
  bool inside = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const PqPoint& a = polygon[i];
    const PqPoint& b = polygon[j];
    if ((a.q > q) != (b.q > q) && p < (b.p - a.p) * (q - a.q) / (b.q - a.q) + a.p) {
      inside = !inside;
    }
  }
  return inside;
}

double BoundaryChain::eval(double at, bool take_min_on_tie) const {
  const size_t n = p.size();
  if (at <= p.front() + kTieEps) at = p.front();
  if (at >= p.back() - kTieEps) at = p.back();
  // exact-hit ties take the conservative side
  double tie = take_min_on_tie ? 1e300 : -1e300;
  bool hit = false;
  for (size_t i = 0; i < n; ++i) {
    if (std::abs(p[i] - at) < kTieEps) {
      hit = true;
      tie = take_min_on_tie ? std::min(tie, q[i]) : std::max(tie, q[i]);
    }
  }
  if (hit) return tie;
  size_t i = 1;
  while (i < n && p[i] < at) ++i;
  const double w = p[i] - p[i - 1];
  const double t = (at - p[i - 1]) / w;
  return (1 - t) * q[i - 1] + t * q[i];
}

BoundaryChains boundary_chains(const std::vector<PqPoint>& polygon) {
  struct Edge {
    double pa, qa, pb, qb;
  };
  std::vector<Edge> up, lo;
  const size_t n = polygon.size();
  double p_min = polygon[0].p, p_max = polygon[0].p;
  for (const PqPoint& pt : polygon) {
    p_min = std::min(p_min, pt.p);
    p_max = std::max(p_max, pt.p);
  }
  for (size_t i = 0; i < n; ++i) {
    const PqPoint& a = polygon[i];
    const PqPoint& b = polygon[(i + 1) % n];
    if (b.p > a.p + kTieEps) {
      lo.push_back({a.p, a.q, b.p, b.q});
    } else if (a.p > b.p + kTieEps) {
      up.push_back({b.p, b.q, a.p, a.q});
    }
    // near-vertical edges contribute breakpoints through their neighbors
  }
  auto assemble = [&](std::vector<Edge>& edges, const char* side) {
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
      if (x.pa != y.pa) return x.pa < y.pa;
      return x.pb < y.pb;
    });
    if (edges.empty() || std::abs(edges.front().pa - p_min) > kGeomEps ||
        std::abs(edges.back().pb - p_max) > kGeomEps) {
      throw ValidationError(std::string("polygon is not vertically convex (") + side +
                            " boundary does not span the P extent)");
    }
    BoundaryChain chain;
    for (size_t i = 0; i < edges.size(); ++i) {
      if (i > 0) {
        const double prev_pb = edges[i - 1].pb;
        if (edges[i].pa < prev_pb - kGeomEps || edges[i].pa > prev_pb + kGeomEps) {
          throw ValidationError(std::string("polygon is not vertically convex (") + side +
                                " boundary overlaps itself in P)");
        }
        if (std::abs(edges[i].qa - edges[i - 1].qb) > kGeomEps) {
          chain.p.push_back(edges[i - 1].pb);  // vertical jump: keep both q values
          chain.q.push_back(edges[i - 1].qb);
        }
      }
      chain.p.push_back(edges[i].pa);
      chain.q.push_back(edges[i].qa);
    }
    chain.p.push_back(edges.back().pb);
    chain.q.push_back(edges.back().qb);
    return chain;
  };

  BoundaryChains out;
  out.p_min = p_min;
  out.p_max = p_max;
  out.upper = assemble(up, "upper");
  out.lower = assemble(lo, "lower");
  return out;
}

void validate(const PqvFor& region) {
  if (region.bus_id < 0) throw ValidationError("FOR bus_id must be non-negative");
  if (region.slices.empty()) throw ValidationError("FOR needs at least one slice");
  const std::string ctx = "FOR bus " + std::to_string(region.bus_id);
  for (size_t i = 0; i < region.slices.size(); ++i) {
    const ForSlice& s = region.slices[i];
    const std::string sctx = ctx + " slice " + std::to_string(i);
    if (s.v_slack < kHardVLo - kGeomEps || s.v_slack > kHardVHi + kGeomEps) {
      throw ValidationError(sctx + ": v_slack " + std::to_string(s.v_slack) +
                            " outside [0.94, 1.06]");
    }
    if (i > 0 && s.v_slack <= region.slices[i - 1].v_slack + kTieEps) {
      throw ValidationError(ctx + ": slice v_slack values must be strictly increasing");
    }
    if (s.polygon.size() < 3) throw ValidationError(sctx + ": polygon needs >= 3 vertices");
    if (polygon_area(s.polygon) <= 0.0) {
      throw ValidationError(sctx + ": polygon must be counter-clockwise with positive area");
    }
    check_simple(s.polygon, sctx);
  }
  if (region.is_3d()) {
    const size_t nv = region.slices[0].polygon.size();
    for (size_t i = 1; i < region.slices.size(); ++i) {
      if (region.slices[i].polygon.size() != nv) {
        throw ValidationError(ctx + ": all slices must have the same vertex count");
      }
      for (size_t k = 0; k < nv; ++k) {
        if (std::abs(region.slices[i].polygon[k].p - region.slices[0].polygon[k].p) > kGeomEps) {
          throw ValidationError(ctx + ": slices must share one ordered P grid (vertex " +
                                std::to_string(k) + " drifts in P across slices)");
        }
      }
    }
  }
  const ForSlice& near = nearest_slice(region);
  if (!point_in_polygon(near.polygon, region.op0.p, region.op0.q)) {
    throw ValidationError(ctx + ": op0 lies outside the slice nearest its voltage");
  }
}

PqvFor for_from_json_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!root.is_object()) throw ParseError(origin + ": top level must be an object");
  PqvFor region;
  if (!root.contains("bus_id") || !root["bus_id"].is_number_integer()) {
    throw ParseError(origin + ": missing integer 'bus_id'");
  }
  region.bus_id = root["bus_id"].get<int>();
  if (!root.contains("op0") || !root["op0"].is_object()) {
    throw ParseError(origin + ": missing 'op0' object");
  }
  for (const char* key : {"p", "q", "v"}) {
    if (!root["op0"].contains(key) || !root["op0"][key].is_number()) {
      throw ParseError(origin + ": op0 missing numeric '" + std::string(key) + "'");
    }
  }
  region.op0.p = root["op0"]["p"].get<double>();
  region.op0.q = root["op0"]["q"].get<double>();
  region.op0.v = root["op0"]["v"].get<double>();
  if (!root.contains("slices") || !root["slices"].is_array()) {
    throw ParseError(origin + ": missing 'slices' array");
  }
  for (const json& js : root["slices"]) {
    const std::string ctx = origin + ": slice " + std::to_string(region.slices.size());
    ForSlice s;
    if (!js.contains("v_slack") || !js["v_slack"].is_number()) {
      throw ParseError(ctx + ": missing numeric 'v_slack'");
    }
    s.v_slack = js["v_slack"].get<double>();
    if (!js.contains("polygon") || !js["polygon"].is_array()) {
      throw ParseError(ctx + ": missing 'polygon' array");
    }
    std::vector<PqPoint> raw;
    for (const json& jp : js["polygon"]) {
      if (!jp.is_array() || jp.size() != 2 || !jp[0].is_number() || !jp[1].is_number()) {
        throw ParseError(ctx + ": polygon entries must be [p, q] pairs");
      }
      raw.push_back({jp[0].get<double>(), jp[1].get<double>()});
    }
    s.polygon = normalized_polygon(raw, ctx);
    region.slices.push_back(std::move(s));
  }
  validate(region);
  return region;
}

std::string for_to_json_text(const PqvFor& region) {
  json root;
  root["bus_id"] = region.bus_id;
  root["op0"] = {{"p", region.op0.p}, {"q", region.op0.q}, {"v", region.op0.v}};
  root["slices"] = json::array();
  for (const ForSlice& s : region.slices) {
    json js;
    js["v_slack"] = s.v_slack;
    js["polygon"] = json::array();
    for (const PqPoint& pt : s.polygon) js["polygon"].push_back({pt.p, pt.q});
    root["slices"].push_back(js);
  }
  return root.dump(2) + "\n";
}

PqvFor load_for(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open FOR file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return for_from_json_text(buf.str(), path);
}

void save_for(const PqvFor& region, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write FOR file '" + path + "'");
  out << for_to_json_text(region);
}

PqvFor synth_for(int bus_id, std::uint64_t seed, int n_slices) {
  if (n_slices < 1) throw ValidationError("synth_for needs n_slices >= 1");
  SeededRng rng(seed * 0x2545F4914F6CDD1Dull + static_cast<std::uint64_t>(bus_id) + 1);

  PqvFor region;
  region.bus_id = bus_id;
  region.op0 = {0.15, 0.02, 1.0};

  const double p_lo = region.op0.p - rng.uniform(0.35, 0.50);
  const double p_hi = region.op0.p + rng.uniform(0.35, 0.50);
  const double center = 0.5 * (p_lo + p_hi);
  const double half = 0.5 * (p_hi - p_lo);
  const double h_up = rng.uniform(0.28, 0.42);
  const double h_lo = rng.uniform(0.16, 0.28);
  const double notch_p = center + rng.uniform(-0.25, 0.25) * half;
  const double notch_w = rng.uniform(0.18, 0.30) * (p_hi - p_lo);
  const double notch_d = rng.uniform(0.30, 0.45) * h_up;

  auto base_up = [&](double p) {
    const double s = (p - center) / half;
    const double nd = 1.0 - ((p - notch_p) / notch_w) * ((p - notch_p) / notch_w);
    return 0.12 + h_up * (1.0 - 0.75 * s * s) - notch_d * std::max(0.0, nd);
  };
  auto base_lo = [&](double p) {
    const double s = (p - center) / half;
    return 0.10 + h_lo * (1.0 - 0.70 * s * s);
  };

  std::vector<double> vs;
  if (n_slices == 1) {
    vs.push_back(1.0);
  } else {
    for (int l = 0; l < n_slices; ++l) {
      vs.push_back(kHardVLo + (kHardVHi - kHardVLo) * l / (n_slices - 1));
    }
  }
  auto f_cap = [&](double v) { return 1.0 - 0.55 * (v - kHardVLo) / (kHardVHi - kHardVLo); };
  auto f_ind = [&](double v) { return 0.85 + 0.25 * (v - kHardVLo) / (kHardVHi - kHardVLo); };

  // keep op0 comfortably below the capacitive roof at every slice
  double worst_roof = 1e300, min_cap = 1e300;
  for (double v : vs) {
    worst_roof = std::min(worst_roof, f_cap(v) * base_up(region.op0.p));
    min_cap = std::min(min_cap, f_cap(v));
  }
  const double lift = std::max(0.0, (region.op0.q + 0.02 - worst_roof) / min_cap);

  const int n_pts = 9;
  for (double v : vs) {
    ForSlice s;
    s.v_slack = v;
    for (int i = 0; i < n_pts; ++i) {  // lower boundary, left to right
      const double p = p_lo + (p_hi - p_lo) * i / (n_pts - 1);
      s.polygon.push_back({p, -f_ind(v) * base_lo(p)});
    }
    for (int i = n_pts - 1; i >= 0; --i) {  // upper boundary, right to left
      const double p = p_lo + (p_hi - p_lo) * i / (n_pts - 1);
      s.polygon.push_back({p, f_cap(v) * (base_up(p) + lift)});
    }
    region.slices.push_back(std::move(s));
  }
  validate(region);
  return region;
}

PqvFor translate_for(const PqvFor& region, double target_p, double target_q, double target_v) {
  PqvFor out = region;
  const double dp = target_p - region.op0.p;
  const double dq = target_q - region.op0.q;
  for (ForSlice& s : out.slices) {
    for (PqPoint& pt : s.polygon) {
      pt.p += dp;
      pt.q += dq;
    }
  }
  out.op0 = {target_p, target_q, target_v};
  validate(out);
  return out;
}

SegmentedFor segment_2d(const PqvFor& region, int k_max) {
  if (k_max < 1) throw ValidationError("segment_2d needs k_max >= 1");
  validate(region);
  const ForSlice& slice = nearest_slice(region);
  const BoundaryChains chains = boundary_chains(slice.polygon);

  std::vector<double> mandatory = slope_sign_changes(chains.upper);
  const std::vector<double> lower_kinks = slope_sign_changes(chains.lower);
  mandatory.insert(mandatory.end(), lower_kinks.begin(), lower_kinks.end());
  const std::vector<double> bounds = tile_axis(chains.p_min, chains.p_max, mandatory, k_max);

  SegmentedFor seg;
  seg.bus_id = region.bus_id;
  seg.dims = 2;
  seg.op0 = region.op0;
  seg.c_max = 2.0 * max_abs_q(region);
  for (int k = 0; k + 1 < static_cast<int>(bounds.size()); ++k) {
    const double a = bounds[static_cast<size_t>(k)], b = bounds[static_cast<size_t>(k + 1)];
    const ChordFit up = chord_under(chains.upper, a, b);
    const ChordFit lo = chord_over(chains.lower, a, b);
    Segment2D s;
    s.ki = k;
    s.p_c_min = a - region.op0.p;
    s.dp_max = b - a;
    s.m_up = up.m;
    s.m_lo = lo.m;
    s.q_c_init_up = up.at_a - region.op0.q;
    s.q_c_init_lo = lo.at_a - region.op0.q;
    const double gap0 = s.q_c_init_up - s.q_c_init_lo;
    const double gap1 = gap0 + (s.m_up - s.m_lo) * s.dp_max;
    if (gap0 < -kGeomEps || gap1 < -kGeomEps) {
      std::ostringstream msg;
      msg << "segment " << k << " collapsed while staying inside the region "
          << "(inscribed deficit up " << up.shift << ", lo " << lo.shift
          << "); increase k_max";
      throw ValidationError(msg.str());
    }
    seg.seg2.push_back(s);
  }
  return seg;
}

SegmentedFor segment_3d(const PqvFor& region, int k_max, int l_max) {
  if (k_max < 1 || l_max < 1) throw ValidationError("segment_3d needs k_max, l_max >= 1");
  validate(region);
  if (!region.is_3d()) throw ValidationError("segment_3d needs a multi-slice region");

  std::vector<BoundaryChains> chains;
  for (const ForSlice& s : region.slices) chains.push_back(boundary_chains(s.polygon));

  std::vector<double> p_mand;
  for (const BoundaryChains& c : chains) {
    const std::vector<double> u = slope_sign_changes(c.upper);
    const std::vector<double> l = slope_sign_changes(c.lower);
    p_mand.insert(p_mand.end(), u.begin(), u.end());
    p_mand.insert(p_mand.end(), l.begin(), l.end());
  }
  const int n_p = 2 * k_max;  // voltage adds a dimension; P granularity is doubled
  const std::vector<double> p_bounds = tile_axis(chains[0].p_min, chains[0].p_max, p_mand, n_p);

  std::vector<double> v_mand;
  for (size_t l = 1; l + 1 < region.slices.size(); ++l) {
    v_mand.push_back(region.slices[l].v_slack);
  }
  const std::vector<double> v_bounds =
      tile_axis(region.slices.front().v_slack, region.slices.back().v_slack, v_mand, l_max);

  SegmentedFor seg;
  seg.bus_id = region.bus_id;
  seg.dims = 3;
  seg.op0 = region.op0;
  seg.c_max = 2.0 * max_abs_q(region);

  for (int k = 0; k + 1 < static_cast<int>(p_bounds.size()); ++k) {
    const double a = p_bounds[static_cast<size_t>(k)], b = p_bounds[static_cast<size_t>(k + 1)];
    // Per-slice conservative Q bounds over [a, b]; linear in v between slices
    // because stacked vertices share their P ordinates.
    BoundaryChain roof, floor;
    for (size_t l = 0; l < region.slices.size(); ++l) {
      roof.p.push_back(region.slices[l].v_slack);
      roof.q.push_back(chain_extreme(chains[l].upper, a, b, true));
      floor.p.push_back(region.slices[l].v_slack);
      floor.q.push_back(chain_extreme(chains[l].lower, a, b, false));
    }
    for (int l = 0; l + 1 < static_cast<int>(v_bounds.size()); ++l) {
      const double va = v_bounds[static_cast<size_t>(l)], vb = v_bounds[static_cast<size_t>(l + 1)];
      const ChordFit up = chord_under(roof, va, vb);
      const ChordFit lo = chord_over(floor, va, vb);
      Segment3D s;
      s.ki = k;
      s.li = l;
      s.p_c_min = a - region.op0.p;
      s.dp_max = b - a;
      s.v_c_min = va - region.op0.v;
      s.dv_max = vb - va;
      s.m_up = up.m;
      s.m_lo = lo.m;
      s.q_c_init_up = up.at_a - region.op0.q;
      s.q_c_init_lo = lo.at_a - region.op0.q;
      const double gap0 = s.q_c_init_up - s.q_c_init_lo;
      const double gap1 = gap0 + (s.m_up - s.m_lo) * s.dv_max;
      if (gap0 < -kGeomEps || gap1 < -kGeomEps) {
        std::ostringstream msg;
        msg << "segment (" << k << "," << l << ") collapsed while staying inside the region "
            << "(inscribed deficit up " << up.shift << ", lo " << lo.shift
            << "); increase k_max or l_max";
        throw ValidationError(msg.str());
      }
      seg.seg3.push_back(s);
    }
  }
  return seg;
}

bool contains(const PqvFor& region, double p, double q, double v) {
  if (v < kHardVLo - kGeomEps || v > kHardVHi + kGeomEps) {
    throw ValidationError("membership query voltage " + std::to_string(v) +
                          " outside [0.94, 1.06]");
  }
  if (!region.is_3d()) {
    return point_in_polygon(region.slices[0].polygon, p, q);
  }
  if (v < region.slices.front().v_slack - kGeomEps ||
      v > region.slices.back().v_slack + kGeomEps) {
    return false;  // not certified outside the covered voltage range
  }
  size_t hi = 1;
  while (hi + 1 < region.slices.size() && region.slices[hi].v_slack < v) ++hi;
  const ForSlice& sa = region.slices[hi - 1];
  const ForSlice& sb = region.slices[hi];
  const double t = std::clamp((v - sa.v_slack) / (sb.v_slack - sa.v_slack), 0.0, 1.0);
  return point_in_polygon(lerp_polygon(sa, sb, t), p, q);
}

double polyhedral_volume(const PqvFor& region) {
  if (!region.is_3d()) throw ValidationError("volume needs a multi-slice region");
  double vol = 0.0;
  for (size_t l = 0; l + 1 < region.slices.size(); ++l) {
    const ForSlice& a = region.slices[l];
    const ForSlice& b = region.slices[l + 1];
    const double h = b.v_slack - a.v_slack;
    if (h <= 0.0) throw ValidationError("degenerate (zero-height) slice pair");
    const double area_a = std::abs(polygon_area(a.polygon));
    const double area_b = std::abs(polygon_area(b.polygon));
    const double area_m = std::abs(polygon_area(lerp_polygon(a, b, 0.5)));
    vol += h / 6.0 * (area_a + 4.0 * area_m + area_b);  // prismatoid; exact for lerped slabs
  }
  return vol;
}

double polyhedral_volume(const SegmentedFor& seg) {
  if (seg.dims != 3) throw ValidationError("segment volume needs a 3D segmentation");
  double vol = 0.0;
  for (const Segment3D& s : seg.seg3) {
    const double gap0 = std::max(0.0, s.q_c_init_up - s.q_c_init_lo);
    const double gap1 = std::max(0.0, gap0 + (s.m_up - s.m_lo) * s.dv_max);
    vol += s.dp_max * s.dv_max * 0.5 * (gap0 + gap1);
  }
  return vol;
}

}  // namespace flexgrid
