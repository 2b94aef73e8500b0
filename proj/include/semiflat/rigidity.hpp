#pragma once
// Saddle triangulations and length-spectrum certificates.
//
// The first half straightens a triangulated surface into Delaunay position
// by exact in-circle flips. Cocircular quadrilaterals are settled by a
// lexicographic preference between the two diagonals, so rebuilding the
// triangulation of the same surface always lands on the same answer.
//
// The second half certifies edges. For a triangulation edge g0 the goal is
// a finite list of closed curves whose geodesic lengths recover the length
// of g0 through a fixed rational combination. Each construction glues g0 to
// auxiliary geodesic segments that leave its endpoints at controlled angles
// slightly off the straight continuation; every junction then wraps
// strictly more than pi, which keeps the comparison curves geodesic, keeps
// them geodesic under small deformations of the periods, and makes the
// lengths combine telescopically. Which construction applies depends only
// on whether the endpoints of g0 are marked:
//
//   case 3 (both marked)    boundary of a neighborhood of g0, one curve
//   case 1 (loop, unmarked) g0 closed up, when that is a strict geodesic
//   case 2 (two unmarked)   four auxiliary segments, five curves
//   case 4 (one marked)     two auxiliary loops at the unmarked end
//
// A loop that fails the strictness test falls back to the case 2 recipe
// with both endpoints at the same vertex. Certifying every edge pins all
// period coordinates, so the marked length spectrum determines the metric
// in a neighborhood of the base point; the jacobian rank audit at the end
// of certify_surface checks exactly that.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "semiflat/deformation.hpp"
#include "semiflat/develop.hpp"
#include "semiflat/errors.hpp"
#include "semiflat/geodesics.hpp"
#include "semiflat/numeric.hpp"
#include "semiflat/periods.hpp"
#include "semiflat/saddles.hpp"
#include "semiflat/surface.hpp"

namespace semiflat {

// ----------------------------------------------------------- delaunay flips

namespace detail {

// positive when d lies strictly inside the circumcircle of the
// counterclockwise triangle (a, b, c), zero when the four are cocircular
template <class S>
int in_circle_sign(const Vec2<S>& a, const Vec2<S>& b, const Vec2<S>& c, const Vec2<S>& d) {
  Vec2<S> p = a - d, q = b - d, r = c - d;
  S det = norm2(p) * cross(q, r) - norm2(q) * cross(p, r) + norm2(r) * cross(p, q);
  return sign_of(det);
}

// the quadrilateral around side d, developed into d's own triangle chart:
// A -> B is the side, C the far corner on d's side, D the far corner of the
// neighbor
template <class S>
struct FlipQuad {
  Vec2<S> A, B, C, D;
  DevMap<S> m;  // neighbor chart -> d's chart
};

template <class S>
FlipQuad<S> flip_quad(const Surface<S>& s, SlotRef d) {
  SlotRef p = s.partner(d);
  FlipQuad<S> q;
  q.A = chart_corner(s, d);
  q.B = q.A + s.side(d);
  q.C = chart_corner(s, {d.t, prev3(d.i)});
  q.m = cross_door(s, DevMap<S>{}, d);
  q.D = q.m.apply(chart_corner(s, {p.t, prev3(p.i)}));
  return q;
}

// the representative of {w, -w} with positive leading coordinate; used to
// compare the two diagonals of a cocircular quadrilateral
template <class S>
Vec2<S> diagonal_key(Vec2<S> w) {
  if (sign_of(w.x) < 0 || (sign_of(w.x) == 0 && sign_of(w.y) < 0)) return -w;
  return w;
}

template <class S>
bool key_less(const Vec2<S>& a, const Vec2<S>& b) {
  if (!(a.x == b.x)) return a.x < b.x;
  return a.y < b.y;
}

// replace the two triangles around side d by the pair across the other
// diagonal of their quadrilateral; combinatorics, signs, and marks are
// remapped and the result passes full validation
template <class S>
Surface<S> flip(const Surface<S>& s, SlotRef d) {
  SlotRef p = s.partner(d);
  if (p.t == d.t) fail(errc::degenerate_input, "cannot flip a side glued to its own triangle");
  FlipQuad<S> q = flip_quad(s, d);

  // the quadrilateral A, D, B, C is counterclockwise; the new triangles
  // (A, D, C) and (D, B, C) share the diagonal D -> C and both live in d's
  // old chart, so sides inherited from the neighbor pick up its eta
  auto remap = [&](SlotRef o) -> SlotRef {
    if (o == SlotRef{p.t, next3(p.i)}) return {d.t, 0};
    if (o == SlotRef{p.t, prev3(p.i)}) return {p.t, 0};
    if (o == SlotRef{d.t, next3(d.i)}) return {p.t, 1};
    if (o == SlotRef{d.t, prev3(d.i)}) return {d.t, 2};
    return o;
  };
  auto factor = [&](SlotRef o) -> int { return o.t == p.t && !(o == p) ? q.m.eta : 1; };
  auto remap_corner = [&](SlotRef c) -> SlotRef {
    if (c == SlotRef{d.t, d.i}) return {d.t, 0};
    if (c == SlotRef{d.t, next3(d.i)}) return {p.t, 1};
    if (c == SlotRef{d.t, prev3(d.i)}) return {d.t, 2};
    if (c == SlotRef{p.t, p.i}) return {p.t, 1};
    if (c == SlotRef{p.t, next3(p.i)}) return {d.t, 0};
    if (c == SlotRef{p.t, prev3(p.i)}) return {d.t, 1};
    return c;
  };

  SurfaceBuilder<S> b;
  for (int t = 0; t < s.F(); ++t) {
    if (t == d.t)
      b.add_triangle(q.D - q.A, q.C - q.D, q.A - q.C);
    else if (t == p.t)
      b.add_triangle(q.B - q.D, q.C - q.B, q.D - q.C);
    else
      b.add_triangle(s.tris[t].v[0], s.tris[t].v[1], s.tris[t].v[2]);
  }
  for (const Edge& e : s.edges) {
    if (e.a == d || e.a == p) continue;
    b.glue(remap(e.a), remap(e.b), e.s * factor(e.a) * factor(e.b));
  }
  b.glue({d.t, 1}, {p.t, 2}, 1);
  for (const auto& vc : s.classes)
    if (vc.marked) b.mark(remap_corner(vc.corners[0]));
  return build_surface(b);
}

}  // namespace detail

// a triangulation by saddle connections in Delaunay position
template <class S>
struct SaddleTriangulation {
  Surface<S> surface;
  std::vector<SaddleConn<S>> edges;  // zero-door connection per side, smaller orientation
  int flips = 0;
  bool strict = false;  // no cocircular quadrilaterals remain
};

// flip the surface into Delaunay position. Strict in-circle violations are
// flipped first; cocircular quadrilaterals then flip to the lexicographically
// smaller diagonal, which is a strict improvement on a shared circumcircle,
// so the loop settles on a canonical triangulation. Knock-on violations are
// rescanned after every flip and the whole loop is charged against a flip
// budget.
template <class S>
SaddleTriangulation<S> saddle_triangulation(const Surface<S>& s, size_t max_flips = 0) {
  if (max_flips == 0) max_flips = size_t(1000) * size_t(std::max(1, s.E()));
  SaddleTriangulation<S> out;
  out.surface = s;
  size_t done = 0;
  auto spend = [&]() {
    if (++done > max_flips) fail(errc::budget_exceeded, "flip budget exhausted");
  };
  bool again = true;
  while (again) {
    again = false;
    // strict violations first, always from the lowest edge
    for (int e = 0; e < out.surface.E() && !again; ++e) {
      SlotRef d = out.surface.edges[e].a;
      auto q = detail::flip_quad(out.surface, d);
      if (detail::in_circle_sign(q.A, q.B, q.C, q.D) > 0) {
        spend();
        out.surface = detail::flip(out.surface, d);
        ++out.flips;
        again = true;
      }
    }
    if (again) continue;
    // cocircular quadrilaterals: prefer the smaller diagonal
    for (int e = 0; e < out.surface.E() && !again; ++e) {
      SlotRef d = out.surface.edges[e].a;
      if (out.surface.partner(d).t == d.t) continue;
      auto q = detail::flip_quad(out.surface, d);
      if (detail::in_circle_sign(q.A, q.B, q.C, q.D) != 0) continue;
      Vec2<S> cur = detail::diagonal_key(q.B - q.A);
      Vec2<S> alt = detail::diagonal_key(q.C - q.D);
      if (detail::key_less(alt, cur)) {
        spend();
        out.surface = detail::flip(out.surface, d);
        ++out.flips;
        again = true;
      } else if (!detail::key_less(cur, alt)) {
        fail(errc::degenerate_input, "cocircular quadrilateral with equal diagonals");
      }
    }
  }
  out.strict = true;
  for (int e = 0; e < out.surface.E(); ++e) {
    SlotRef d = out.surface.edges[e].a;
    auto q = detail::flip_quad(out.surface, d);
    if (detail::in_circle_sign(q.A, q.B, q.C, q.D) == 0) out.strict = false;
  }
  for (int e = 0; e < out.surface.E(); ++e) {
    SlotRef a = out.surface.edges[e].a;
    SaddleConn<S> g{a, {a.t, next3(a.i)}, {}, out.surface.side(a)};
    SaddleConn<S> r = reverse_connection(out.surface, g);
    out.edges.push_back(detail::oriented_before(r, g) ? r : g);
  }
  return out;
}

// ----------------------------------------------------- directions at a cone

// a direction at a cone point: the corner whose wedge contains it, and the
// ray inside that wedge in the corner's chart
struct ConeRay {
  SlotRef corner;
  DVec ray{1, 0};
};

namespace detail {

// corner cycle around one vertex class with cumulative wedge widths, for
// converting directions to absolute fan angles in [0, cone)
struct VertexFan {
  std::vector<SlotRef> corners;
  std::vector<double> cum;
  double cone = 0;
};

template <class S>
std::vector<VertexFan> vertex_fans(const Surface<S>& s) {
  std::vector<VertexFan> out(s.classes.size());
  for (size_t v = 0; v < s.classes.size(); ++v) {
    VertexFan& f = out[v];
    f.corners = s.classes[v].corners;
    f.cone = double(s.classes[v].cone) * M_PI;
    double acc = 0;
    for (SlotRef c : f.corners) {
      f.cum.push_back(acc);
      acc += s.corner_angle(c).to_radians();
    }
  }
  return out;
}

inline int fan_pos(const VertexFan& f, SlotRef c) {
  for (size_t j = 0; j < f.corners.size(); ++j)
    if (f.corners[j] == c) return int(j);
  fail(errc::combinatorics_mismatch, "corner is not part of the vertex fan");
}

inline double fan_wrap(double t, double cone) {
  double r = std::fmod(t, cone);
  return r < 0 ? r + cone : r;
}

// distance between two absolute fan angles on a cone of the given total
inline double fan_gap(double x, double y, double cone) {
  double d = fan_wrap(x - y, cone);
  return std::min(d, cone - d);
}

template <class S>
double fan_abs(const Surface<S>& s, const VertexFan& f, SlotRef c, const DVec& w) {
  DVec s0 = approx(s.side(c));
  double off = std::atan2(cross(s0, w), dot(s0, w));
  if (off < -1e-9)
    off += 2 * M_PI;  // numerically clockwise of the wedge start: fold around
  else if (off < 0)
    off = 0;
  return fan_wrap(f.cum[size_t(fan_pos(f, c))] + off, f.cone);
}

template <class S>
ConeRay fan_ray(const Surface<S>& s, const VertexFan& f, double theta) {
  theta = fan_wrap(theta, f.cone);
  size_t j = f.cum.size() - 1;
  while (j > 0 && f.cum[j] > theta) --j;
  double off = theta - f.cum[j];
  DVec s0 = approx(s.side(f.corners[j]));
  double n = norm(s0);
  DVec u{s0.x / n, s0.y / n};
  return {f.corners[j], {u.x * std::cos(off) - u.y * std::sin(off),
                         u.x * std::sin(off) + u.y * std::cos(off)}};
}

// corner and vector of the ray pointing back along an oriented connection
// from its endpoint, in the endpoint corner's chart
template <class S>
std::pair<SlotRef, Vec2<S>> back_ray(const Surface<S>& s, const SaddleConn<S>& g) {
  if (g.doors.empty()) return {g.end, -s.side(g.start)};
  SaddleConn<S> r = reverse_connection(s, g);
  return {r.start, r.vec};
}

// counterclockwise sector swept at one vertex from the ray B at corner cA
// to the ray D at corner cB, each ray in its own corner's chart
template <class S>
typename NumTraits<S>::Angle sector_ccw(const Surface<S>& s, SlotRef cA, const Vec2<S>& B,
                                        SlotRef cB, const Vec2<S>& D) {
  using Angle = typename NumTraits<S>::Angle;
  if (cA == cB) {
    int c = sign_of(cross(B, D));
    if (c > 0 || (c == 0 && sign_of(dot(B, D)) < 0)) return Angle::between(B, D);
    if (c == 0) fail(errc::combinatorics_mismatch, "coincident junction rays");
  }
  Angle a = Angle::between(B, -s.side({cA.t, prev3(cA.i)}));
  SlotRef cur = s.next_corner_ccw(cA);
  size_t guard = size_t(s.F()) * 6 + 8, n = 0;
  while (!(cur == cB)) {
    a += s.corner_angle(cur);
    cur = s.next_corner_ccw(cur);
    if (++n > guard) fail(errc::combinatorics_mismatch, "junction rays on different vertices");
  }
  a += Angle::between(s.side(cB), D);
  return a;
}

// doors crossed walking one vertex fan from `from` to `to` on the given
// side; a full cycle when they coincide and `full` is set
template <class S>
std::vector<SlotRef> walk_fan(const Surface<S>& s, SlotRef from, SlotRef to, int side, bool full) {
  std::vector<SlotRef> doors;
  SlotRef cur = from;
  size_t cap = size_t(s.F()) * 6 + 8;
  bool moved = false;
  while (!(cur == to) || (full && !moved)) {
    doors.push_back(fan_door<S>(cur, side));
    cur = fan_step(s, cur, side);
    moved = true;
    if (doors.size() > cap) fail(errc::combinatorics_mismatch, "fan walk did not close");
  }
  return doors;
}

}  // namespace detail

// absolute fan angle of a direction around its vertex, in [0, cone)
template <class S>
double direction_angle(const Surface<S>& s, const ConeRay& r) {
  auto fans = detail::vertex_fans(s);
  return detail::fan_abs(s, fans[size_t(s.class_of(r.corner))], r.corner, r.ray);
}

// the direction at the given absolute fan angle around a vertex class
template <class S>
ConeRay direction_at(const Surface<S>& s, int vclass, double theta) {
  auto fans = detail::vertex_fans(s);
  return detail::fan_ray(s, fans[size_t(vclass)], theta);
}

// ------------------------------------------------- junction word assembly

namespace detail {

template <class S>
struct SeamInfo {
  int vclass = 0;
  bool bounce = false;  // the next part retraces the previous one
  int side = +1;        // fan side the doors wrap around
  typename NumTraits<S>::Angle theta;  // ccw sector from the back ray to the next ray
};

template <class S>
struct ClosedChain {
  std::vector<SlotRef> word;
  std::vector<SeamInfo<S>> seams;  // seams[k] joins parts[k] to parts[k+1 mod n]
  double length = 0;               // sum of the part lengths
};

// concatenate oriented connections into a closed crossing word. At every
// seam the incoming back ray and the outgoing ray span two sectors of the
// vertex cone; the doors wrap the emitted side. A part followed by its own
// reverse is a bounce and wraps the full cone, which is only geodesic at a
// marked point; other marked junctions wrap whichever side measures at
// least pi, and unmarked junctions need both sides weakly above pi for the
// word to tighten onto itself, which the caller checks through the seams.
template <class S>
ClosedChain<S> assemble_closed(const Surface<S>& s, const std::vector<SaddleConn<S>>& parts) {
  using Angle = typename NumTraits<S>::Angle;
  if (parts.empty()) fail(errc::degenerate_input, "empty chain");
  ClosedChain<S> out;
  for (size_t k = 0; k < parts.size(); ++k) {
    const SaddleConn<S>& X = parts[k];
    const SaddleConn<S>& Y = parts[(k + 1) % parts.size()];
    out.word.insert(out.word.end(), X.doors.begin(), X.doors.end());
    out.length += norm(approx(X.vec));

    auto [cA, B] = back_ray(s, X);
    SlotRef cB = Y.start;
    int v = s.class_of(cA);
    if (v != s.class_of(cB))
      fail(errc::combinatorics_mismatch, "chain parts do not meet at one vertex");
    SeamInfo<S> seam;
    seam.vclass = v;
    long m = s.classes[size_t(v)].cone;
    std::vector<SlotRef> doors;
    if (Y == reverse_connection(s, X)) {
      seam.bounce = true;
      seam.side = -1;
      seam.theta = Angle::pi_times(m);
      doors = walk_fan(s, cA, cB, -1, /*full=*/cA == cB);
    } else {
      seam.theta = sector_ccw(s, cA, B, cB, Y.vec);
      bool plus_big = seam.theta.cmp_pi(1) >= 0;
      seam.side = s.classes[size_t(v)].marked && !plus_big ? -1 : +1;
      bool full = cA == cB && (seam.side == +1 ? sign_of(cross(B, Y.vec)) < 0
                                               : sign_of(cross(B, Y.vec)) > 0);
      doors = walk_fan(s, cA, cB, seam.side, full);
    }
    out.word.insert(out.word.end(), doors.begin(), doors.end());
    out.seams.push_back(std::move(seam));
  }
  return out;
}

// strictness of the wrapped seam sector: the emitted side must exceed pi,
// and at an unmarked vertex the opposite side must as well. Bounces wrap
// the full cone and are strict whenever the cone exceeds pi.
template <class S>
bool seam_strict(const Surface<S>& s, const SeamInfo<S>& seam) {
  long m = s.classes[size_t(seam.vclass)].cone;
  if (seam.bounce) return m > 1;
  bool lo = seam.theta.cmp_pi(1) > 0;          // ccw side strictly above pi
  bool hi = seam.theta.cmp_pi(m - 1) < 0;      // cw side strictly above pi
  if (!s.classes[size_t(seam.vclass)].marked) return lo && hi;
  return seam.side == +1 ? lo : hi;
}

}  // namespace detail

// ------------------------------------------------ direction-aimed segments

// a geodesic segment between cone points, as a chain of oriented saddle
// connections meeting at junctions that wrap at least pi
template <class S>
struct ChainSegment {
  std::vector<SaddleConn<S>> parts;
  double length = 0;
  double angle_from = 0;  // achieved gap to the requested outgoing direction
  double angle_to = 0;    // achieved gap to the requested incoming direction
};

// searches chains of saddle connections whose first part leaves near a
// requested direction and whose last part arrives near another. The node
// set for a length cap is every oriented connection up to that length, the
// chain total is held under the same cap, and the search doubles the cap
// twice before giving up. Junction feasibility is decided by a fan-angle
// prefilter in doubles with an exact sector check inside the tolerance
// band.
template <class S>
class DirectionSearch {
 public:
  explicit DirectionSearch(const Surface<S>& s, size_t budget = size_t(1) << 20)
      : s_(&s), budget_(budget), fans_(detail::vertex_fans(s)) {}

  ChainSegment<S> find(int a, const ConeRay& u, int b, const ConeRay& v, double eps,
                       double max_len) {
    if (!(eps > 0)) fail(errc::degenerate_input, "angle tolerance must be positive");
    if (!(max_len > 0)) fail(errc::degenerate_input, "length cap must be positive");
    if (s_->class_of(u.corner) != a || s_->class_of(v.corner) != b)
      fail(errc::degenerate_input, "direction does not sit at the requested vertex");
    double ua = detail::fan_abs(*s_, fans_[size_t(a)], u.corner, u.ray);
    double va = detail::fan_abs(*s_, fans_[size_t(b)], v.corner, v.ray);
    double L = max_len;
    for (int round = 0; round < 3; ++round, L *= 2) {
      const Graph* G = graph_for(L);
      if (!G) break;  // enumeration budget hit: larger caps only cost more
      auto res = search(*G, a, ua, b, va, eps, L);
      if (res) return *res;
    }
    std::ostringstream msg;
    msg << "no segment within " << eps << " of the requested directions up to length " << max_len
        << " (doubled twice)";
    fail(errc::not_found_within_budget, msg.str());
  }

 private:
  struct ONode {
    SaddleConn<S> conn;
    SaddleConn<S> rev;
    Vec2<S> back;  // back ray vector at conn.end
    int cls_from = 0, cls_to = 0;
    double abs_from = 0, abs_back = 0;
    double len = 0;
  };
  struct Graph {
    std::vector<ONode> nodes;
    std::vector<std::vector<int>> by_from;
  };

  const Surface<S>* s_;
  size_t budget_;
  std::vector<detail::VertexFan> fans_;
  std::map<double, Graph> graphs_;

  void add_node(Graph& g, const SaddleConn<S>& c) {
    ONode n;
    n.conn = c;
    n.rev = reverse_connection(*s_, c);
    n.back = detail::back_ray(*s_, c).second;
    n.cls_from = s_->class_of(c.start);
    n.cls_to = s_->class_of(c.end);
    n.abs_from = detail::fan_abs(*s_, fans_[size_t(n.cls_from)], c.start, approx(c.vec));
    n.abs_back = detail::fan_abs(*s_, fans_[size_t(n.cls_to)], n.rev.start, approx(n.rev.vec));
    n.len = norm(approx(c.vec));
    g.by_from[size_t(n.cls_from)].push_back(int(g.nodes.size()));
    g.nodes.push_back(std::move(n));
  }

  const Graph* graph_for(double L) {
    auto it = graphs_.find(L);
    if (it != graphs_.end()) return it->second.nodes.empty() ? nullptr : &it->second;
    Graph& g = graphs_[L];
    g.by_from.assign(s_->classes.size(), {});
    std::vector<SaddleConn<S>> conns;
    try {
      conns = enumerate_saddle_connections(*s_, scalar_from_double<S>(L), budget_);
    } catch (const sf_error& e) {
      if (e.code() == errc::budget_exceeded) return nullptr;
      throw;
    }
    for (const auto& c : conns) {
      add_node(g, c);
      add_node(g, reverse_connection(*s_, c));
    }
    return &g;
  }

  // both fan sectors between arriving along i and leaving along j must
  // reach pi at an unmarked vertex, one of them at a marked vertex
  bool feasible(const Graph& g, int i, int j) const {
    const ONode& x = g.nodes[size_t(i)];
    const ONode& y = g.nodes[size_t(j)];
    int v = x.cls_to;
    if (y.conn == x.rev) return s_->classes[size_t(v)].marked;
    const detail::VertexFan& f = fans_[size_t(v)];
    long m = s_->classes[size_t(v)].cone;
    bool marked = s_->classes[size_t(v)].marked;
    double th = detail::fan_wrap(y.abs_from - x.abs_back, f.cone);
    double tol = 1e-9 * std::max(1.0, f.cone);
    bool lo_in = th >= M_PI + tol, lo_out = th <= M_PI - tol;
    bool hi_in = th <= f.cone - M_PI - tol, hi_out = th >= f.cone - M_PI + tol;
    if (!marked) {
      if (lo_in && hi_in) return true;
      if (lo_out || hi_out) return false;
    } else {
      if (lo_in || hi_in) return true;
      if (lo_out && hi_out) return false;
    }
    auto th_exact = detail::sector_ccw(*s_, x.conn.end, x.back, y.conn.start, y.conn.vec);
    bool lo = th_exact.cmp_pi(1) >= 0, hi = th_exact.cmp_pi(m - 1) <= 0;
    return marked ? (lo || hi) : (lo && hi);
  }

  std::optional<ChainSegment<S>> search(const Graph& g, int a, double ua, int b, double vb,
                                        double eps, double cap) const {
    const double inf = std::numeric_limits<double>::infinity();
    size_t n = g.nodes.size();
    std::vector<double> dist(n, inf);
    std::vector<int> prev(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    for (int i = 0; i < int(n); ++i) {
      const ONode& node = g.nodes[size_t(i)];
      if (node.cls_from != a) continue;
      if (detail::fan_gap(node.abs_from, ua, fans_[size_t(a)].cone) >= eps) continue;
      dist[size_t(i)] = node.len;
      pq.push({node.len, i});
    }
    auto is_goal = [&](int i) {
      const ONode& node = g.nodes[size_t(i)];
      return node.cls_to == b && detail::fan_gap(node.abs_back, vb, fans_[size_t(b)].cone) < eps;
    };
    while (!pq.empty()) {
      auto [d, i] = pq.top();
      pq.pop();
      if (d > dist[size_t(i)]) continue;
      if (is_goal(i)) {
        ChainSegment<S> out;
        std::vector<int> idx;
        for (int k = i; k != -1; k = prev[size_t(k)]) idx.push_back(k);
        std::reverse(idx.begin(), idx.end());
        for (int k : idx) out.parts.push_back(g.nodes[size_t(k)].conn);
        out.length = d;
        out.angle_from =
            detail::fan_gap(g.nodes[size_t(idx.front())].abs_from, ua, fans_[size_t(a)].cone);
        out.angle_to =
            detail::fan_gap(g.nodes[size_t(i)].abs_back, vb, fans_[size_t(b)].cone);
        return out;
      }
      for (int j : g.by_from[size_t(g.nodes[size_t(i)].cls_to)]) {
        if (d + g.nodes[size_t(j)].len > cap) continue;
        if (!(d + g.nodes[size_t(j)].len < dist[size_t(j)])) continue;
        if (!feasible(g, i, j)) continue;
        dist[size_t(j)] = d + g.nodes[size_t(j)].len;
        prev[size_t(j)] = i;
        pq.push({dist[size_t(j)], j});
      }
    }
    return std::nullopt;
  }
};

// one geodesic segment leaving vertex class a within eps of direction u and
// arriving at vertex class b within eps of direction v (measured against
// the reversed segment), shortest first; the total-length cap doubles
// twice before the search reports failure
template <class S>
ChainSegment<S> direction_segment(const Surface<S>& s, int a, const ConeRay& u, int b,
                                  const ConeRay& v, double eps, double max_len,
                                  size_t budget = size_t(1) << 20) {
  DirectionSearch<S> search(s, budget);
  return search.find(a, u, b, v, eps, max_len);
}

// ------------------------------------------------------------ certificates

template <class S>
struct CertifiedCurve {
  std::vector<SlotRef> word;  // closed crossing word handed to tighten
  Geodesic<S> witness;        // tightened representative
  double length = 0;
};

// a certified linear identity: length(edge) == sum coeff[i] * curve length,
// valid verbatim for every metric within validity_radius of the base in the
// sup norm on free periods
template <class S>
struct Certificate {
  SaddleConn<S> edge;
  int case_id = 0;
  bool fallback = false;  // loop certified through the two-endpoint recipe
  std::vector<CertifiedCurve<S>> curves;
  std::vector<double> coeff;
  double validity_radius = 0;
  double epsilon = 0;   // angle margin used by the aimed constructions
  double residual = 0;  // |combination - edge length| at the base metric
};

namespace detail {

template <class S>
CertifiedCurve<S> certify_curve(const Surface<S>& s, const PeriodChart<S>& ch,
                                const ClosedChain<S>& cc, double& min_radius) {
  CertifiedCurve<S> out;
  out.word = cc.word;
  out.witness = tighten(s, cc.word);
  out.length = out.witness.length;
  if (std::abs(out.length - cc.length) > 1e-9 * std::max(1.0, cc.length))
    fail(errc::construction_failed, "comparison curve did not stay tight");
  StabilityRadius r = stability_radius(s, ch, out.witness);
  if (!(r.radius > 0))
    fail(errc::angle_violation, "comparison curve sits on a stability wall (" + r.binding + ")");
  min_radius = std::min(min_radius, r.radius);
  return out;
}

template <class S>
std::vector<SaddleConn<S>> reversed_parts(const Surface<S>& s,
                                          const std::vector<SaddleConn<S>>& parts) {
  std::vector<SaddleConn<S>> out;
  for (size_t k = parts.size(); k-- > 0;) out.push_back(reverse_connection(s, parts[k]));
  return out;
}

// assemble one comparison curve from chains of parts and check that every
// seam joining two different chains wraps strictly above pi; failures
// surface as angle violations so the caller can shrink its angle margin
template <class S>
ClosedChain<S> construction_curve(const Surface<S>& s,
                                  const std::vector<std::vector<SaddleConn<S>>>& chains) {
  std::vector<SaddleConn<S>> parts;
  std::vector<size_t> chain_of;
  for (size_t c = 0; c < chains.size(); ++c)
    for (const auto& p : chains[c]) {
      parts.push_back(p);
      chain_of.push_back(c);
    }
  ClosedChain<S> cc = assemble_closed(s, parts);
  for (size_t k = 0; k < parts.size(); ++k) {
    size_t k2 = (k + 1) % parts.size();
    if (chain_of[k] == chain_of[k2] && !(chains.size() == 1 && parts.size() == 1)) continue;
    if (cc.seams[k].bounce) continue;
    if (!seam_strict(s, cc.seams[k]))
      fail(errc::angle_violation, "construction junction does not wrap strictly above pi");
  }
  return cc;
}

template <class S>
Certificate<S> finish_certificate(const Surface<S>& s, const PeriodChart<S>& ch,
                                  Certificate<S>&& cert,
                                  const std::vector<ClosedChain<S>>& ccs) {
  double min_radius = std::numeric_limits<double>::infinity();
  for (const auto& cc : ccs) cert.curves.push_back(certify_curve(s, ch, cc, min_radius));
  double combo = 0;
  for (size_t i = 0; i < cert.curves.size(); ++i) combo += cert.coeff[i] * cert.curves[i].length;
  double elen = norm(approx(cert.edge.vec));
  cert.residual = std::abs(combo - elen);
  if (cert.residual > 1e-9 * std::max(1.0, elen))
    fail(errc::construction_failed, "certified combination misses the edge length");
  cert.validity_radius = min_radius;
  return std::move(cert);
}

// the two-endpoint recipe: aimed segments leave both endpoints just off the
// straight continuation of the edge. With both endpoints unmarked, four
// segments produce five curves; with the far endpoint marked, two loops at
// the near endpoint produce three curves, one of which bounces at the far
// mark. Angle margins halve after every violation.
template <class S>
Certificate<S> two_point_certificate(const Surface<S>& s, const PeriodChart<S>& ch,
                                     DirectionSearch<S>& search, const SaddleConn<S>& g0,
                                     const SaddleConn<S>& h, int case_id, bool fallback) {
  auto fans = vertex_fans(s);
  int a = s.class_of(h.start), b = s.class_of(h.end);
  double D0 = fan_abs(s, fans[size_t(a)], h.start, approx(h.vec));
  auto [bc, bv] = back_ray(s, h);
  double B0 = fan_abs(s, fans[size_t(b)], bc, approx(bv));
  double L0 = 0;
  for (int e = 0; e < s.E(); ++e) L0 = std::max(L0, norm(approx(s.edge_vector(e))));
  L0 *= 8;  // diameter proxy: all edges are Delaunay short

  auto ray = [&](int cls, double theta) { return fan_ray(s, fans[size_t(cls)], theta); };
  sf_error last(errc::angle_violation, "no attempt ran");
  for (int attempt = 0; attempt < 7; ++attempt) {
    double eps = M_PI / 16 / double(1 << attempt);
    try {
      Certificate<S> cert;
      cert.edge = g0;
      cert.case_id = case_id;
      cert.fallback = fallback;
      cert.epsilon = eps;
      std::vector<ClosedChain<S>> ccs;
      if (case_id == 4) {
        auto g1 = search.find(a, ray(a, D0 + (M_PI + 2 * eps)), a, ray(a, D0 - (M_PI + 2 * eps)),
                              eps, L0);
        auto g2 = search.find(a, ray(a, D0 + (M_PI - 4 * eps)), a, ray(a, D0 - (M_PI - 4 * eps)),
                              eps, L0);
        SaddleConn<S> hr = reverse_connection(s, h);
        ccs.push_back(construction_curve(s, {{h, hr}, g1.parts}));
        ccs.push_back(construction_curve(s, {g1.parts, g2.parts}));
        ccs.push_back(construction_curve(s, {g2.parts}));
        cert.coeff = {0.5, -0.5, 0.5};
      } else {
        auto g1 = search.find(a, ray(a, D0 + (M_PI + 2 * eps)), b, ray(b, B0 - (M_PI + 2 * eps)),
                              eps, L0);
        auto g2 = search.find(a, ray(a, D0 - (M_PI + 2 * eps)), b, ray(b, B0 + (M_PI + 2 * eps)),
                              eps, L0);
        auto g3 = search.find(a, ray(a, D0 + (M_PI - 4 * eps)), b, ray(b, B0 - (M_PI - 4 * eps)),
                              eps, L0);
        auto g4 = search.find(a, ray(a, D0 - (M_PI - 4 * eps)), b, ray(b, B0 + (M_PI - 4 * eps)),
                              eps, L0);
        ccs.push_back(construction_curve(s, {{h}, reversed_parts(s, g1.parts)}));
        ccs.push_back(construction_curve(s, {{h}, reversed_parts(s, g2.parts)}));
        ccs.push_back(construction_curve(s, {g1.parts, reversed_parts(s, g4.parts)}));
        ccs.push_back(construction_curve(s, {g2.parts, reversed_parts(s, g3.parts)}));
        ccs.push_back(construction_curve(s, {g3.parts, reversed_parts(s, g4.parts)}));
        cert.coeff = {0.5, 0.5, -0.5, -0.5, 0.5};
      }
      return finish_certificate(s, ch, std::move(cert), ccs);
    } catch (const sf_error& e) {
      if (e.code() == errc::angle_violation) {
        last = e;
        continue;
      }
      if (e.code() == errc::not_found_within_budget)
        fail(errc::construction_failed, std::string("aimed segment search gave up: ") + e.what());
      throw;
    }
  }
  throw last;
}

template <class S>
Certificate<S> certificate_impl(const Surface<S>& s, const PeriodChart<S>& ch,
                                DirectionSearch<S>& search, const SaddleConn<S>& g0) {
  if (!g0.doors.empty() || !(g0.end == SlotRef{g0.start.t, next3(g0.start.i)}) ||
      !(g0.vec == s.side(g0.start)))
    fail(errc::degenerate_input, "certificates attach to triangulation sides");
  int a = s.class_of(g0.start), b = s.class_of(g0.end);
  bool am = s.classes[size_t(a)].marked, bm = s.classes[size_t(b)].marked;

  if (am && bm) {
    // boundary of a neighborhood of the edge: two parallel copies joined by
    // full wraps at the marked endpoints, at twice the edge length
    Certificate<S> cert;
    cert.edge = g0;
    cert.case_id = 3;
    cert.coeff = {0.5};
    std::vector<ClosedChain<S>> ccs{
        construction_curve(s, {{g0, reverse_connection(s, g0)}})};
    return finish_certificate(s, ch, std::move(cert), ccs);
  }
  if (am != bm) {
    // orient the edge so the marked endpoint is the far one
    SaddleConn<S> h = am ? reverse_connection(s, g0) : g0;
    return two_point_certificate(s, ch, search, g0, h, 4, false);
  }
  if (a == b) {
    // the edge closed up is a candidate geodesic; strictly wedged loops
    // certify themselves at full weight
    auto [cA, B] = back_ray(s, g0);
    auto theta = sector_ccw(s, cA, B, g0.start, g0.vec);
    long m = s.classes[size_t(a)].cone;
    if (theta.cmp_pi(1) > 0 && theta.cmp_pi(m - 1) < 0) {
      try {
        Certificate<S> cert;
        cert.edge = g0;
        cert.case_id = 1;
        cert.coeff = {1.0};
        std::vector<ClosedChain<S>> ccs{construction_curve(s, {{g0}})};
        return finish_certificate(s, ch, std::move(cert), ccs);
      } catch (const sf_error& e) {
        if (e.code() != errc::angle_violation) throw;
        // stability wall away from the endpoints: fall through
      }
    }
    return two_point_certificate(s, ch, search, g0, g0, 1, true);
  }
  return two_point_certificate(s, ch, search, g0, g0, 2, false);
}

// orientation-free key of a closed crossing word, for deduplication
template <class S>
std::vector<std::pair<int, int>> word_key(const Surface<S>& s, const std::vector<SlotRef>& w) {
  std::vector<SlotRef> rev;
  for (size_t k = w.size(); k-- > 0;) rev.push_back(s.partner(w[k]));
  std::vector<SlotRef> f = canonical_rotation(w), r = canonical_rotation(rev);
  auto pack = [](const std::vector<SlotRef>& x) {
    std::vector<std::pair<int, int>> out;
    for (SlotRef d : x) out.push_back({d.t, d.i});
    return out;
  };
  auto pf = pack(f), pr = pack(r);
  return pf < pr ? pf : pr;
}

}  // namespace detail

// certificate for one triangulation edge, given as a zero-door connection
// along a side of s
template <class S>
Certificate<S> certificate_for(const Surface<S>& s, const SaddleConn<S>& g0) {
  DirectionSearch<S> search(s);
  PeriodChart<S> ch = period_chart(s);
  return detail::certificate_impl(s, ch, search, g0);
}

// a full certified triangulation: per-edge certificates, the deduplicated
// family of comparison curves, and the jacobian rank audit showing that the
// certified lengths pin every period direction in the normalized slice
template <class S>
struct RigiditySet {
  SaddleTriangulation<S> tri;
  std::vector<Certificate<S>> certificates;      // parallel to tri.edges
  std::vector<std::vector<SlotRef>> sigma;       // distinct comparison words
  std::vector<double> sigma_lengths;
  std::vector<std::vector<int>> curve_ids;       // per edge, indices into sigma
  SpectrumJacobian<S> jacobian;                  // of the sigma lengths
  int expected_rank = 0;
  size_t sigma_bound = 0;
  double min_validity = 0;
};

template <class S>
RigiditySet<S> certify_surface(const Surface<S>& s) {
  RigiditySet<S> out;
  out.tri = saddle_triangulation(s);
  const Surface<S>& d = out.tri.surface;
  DirectionSearch<S> search(d);
  PeriodChart<S> ch = period_chart(d);

  std::map<std::vector<std::pair<int, int>>, int> seen;
  out.min_validity = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < out.tri.edges.size(); ++k) {
    Certificate<S> cert;
    try {
      cert = detail::certificate_impl(d, ch, search, out.tri.edges[k]);
    } catch (const sf_error& e) {
      fail(e.code(), "edge " + std::to_string(k) + ": " + e.what());
    }
    std::vector<int> ids;
    for (const auto& cv : cert.curves) {
      auto key = detail::word_key(d, cv.witness.word);
      auto it = seen.find(key);
      if (it == seen.end()) {
        it = seen.insert({key, int(out.sigma.size())}).first;
        out.sigma.push_back(cv.witness.word);
        out.sigma_lengths.push_back(cv.length);
      }
      ids.push_back(it->second);
    }
    out.curve_ids.push_back(std::move(ids));
    out.min_validity = std::min(out.min_validity, cert.validity_radius);
    out.certificates.push_back(std::move(cert));
  }

  long g = d.genus(), k = d.V();
  out.sigma_bound = size_t(15 * (2 * g + k - 2));
  if (out.sigma.size() > out.sigma_bound)
    fail(errc::construction_failed, "comparison family exceeds its size bound");
  out.jacobian = spectrum_jacobian(d, out.sigma);
  out.expected_rank = int(4 * g + 2 * k + d.eps - 5);
  if (out.jacobian.rank != out.expected_rank)
    fail(errc::rank_defect, "certified lengths have rank " + std::to_string(out.jacobian.rank) +
                                ", expected " + std::to_string(out.expected_rank));
  return out;
}

// ------------------------------------------------------------------ reports

template <class S>
std::string certificate_report(const RigiditySet<S>& rs) {
  const Surface<S>& d = rs.tri.surface;
  std::ostringstream o;
  o.precision(12);
  StratumSignature sig = d.stratum();
  o << "saddle triangulation: " << d.F() << " triangles, " << d.E() << " edges, "
    << rs.tri.flips << " flips, " << (rs.tri.strict ? "strict" : "with cocircular ties") << "\n";
  o << "stratum: genus " << sig.genus << ", holonomy " << (sig.eps > 0 ? "+1" : "-1")
    << ", cone orders";
  for (long al : sig.alpha) o << " " << al;
  o << "\n";
  for (size_t k = 0; k < rs.certificates.size(); ++k) {
    const Certificate<S>& c = rs.certificates[k];
    o << "edge " << k << ": length " << norm(approx(c.edge.vec)) << ", case " << c.case_id
      << (c.fallback ? " (fallback)" : "") << ", radius " << c.validity_radius << ", residual "
      << c.residual << "\n";
    o << "  combination:";
    for (size_t i = 0; i < c.coeff.size(); ++i)
      o << (i ? " + " : " ") << c.coeff[i] << " * L[" << rs.curve_ids[k][i] << "]";
    o << "\n";
  }
  o << "comparison curves: " << rs.sigma.size() << " distinct (bound " << rs.sigma_bound << ")\n";
  o << "jacobian rank: " << rs.jacobian.rank << " of expected " << rs.expected_rank
    << " on a slice of dimension " << rs.jacobian.slice_dim() << "\n";
  o << "min validity radius: " << rs.min_validity << "\n";
  return o.str();
}

template <class S>
std::string rigidity_csv(const RigiditySet<S>& rs) {
  std::ostringstream o;
  o.precision(17);
  for (size_t i = 0; i < rs.sigma.size(); ++i)
    o << "sigma," << i << "," << rs.sigma_lengths[i] << "\n";
  o << "rank," << rs.jacobian.rank << "," << rs.expected_rank << "\n";
  return o.str();
}

}  // namespace semiflat
