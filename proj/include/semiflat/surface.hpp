#pragma once
// Triangulated flat surfaces with sign-tagged gluings.
//
// A surface is a collection of ccw planar triangles, each given by its three
// edge vectors (summing to zero), together with a pairing of the 3F sides.
// Side i of a triangle runs from corner i to corner i+1. A gluing carries a
// sign s in {+1,-1}; the identification map between the two charts is
// z -> -s*z + c, so the glued side vectors satisfy v_b = -s * v_a. With all
// signs +1 the surface is a translation surface; signs -1 introduce the
// half-turn identifications of a half-translation structure.
//
// Building a surface checks the local geometry (closure, orientation, vector
// compatibility), derives the canonical edge list, the vertex classes with
// their exact cone angles (always integer multiples of pi), the holonomy
// sign, and the genus. Cone points of angle pi (poles) and angle 2*pi must
// be marked; larger cone angles may be left unmarked.

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "semiflat/errors.hpp"
#include "semiflat/numeric.hpp"

namespace semiflat {

inline int next3(int i) { return (i + 1) % 3; }
inline int prev3(int i) { return (i + 2) % 3; }

struct SlotRef {
  int t = -1;
  int i = -1;
  bool operator==(const SlotRef& o) const { return t == o.t && i == o.i; }
  bool operator!=(const SlotRef& o) const { return !(*this == o); }
  bool operator<(const SlotRef& o) const { return t != o.t ? t < o.t : i < o.i; }
  bool valid() const { return t >= 0; }
};

inline std::string to_string(SlotRef s) {
  return std::to_string(s.t) + "." + std::to_string(s.i);
}

template <class S>
struct Triangle {
  std::array<Vec2<S>, 3> v;
};

// one glued side pair; `a` is the lexicographically smaller slot and its
// vector is the edge's canonical vector
struct Edge {
  SlotRef a;
  SlotRef b;
  int s = 1;  // v(b) == -s * v(a)
};

struct VertexClass {
  std::vector<SlotRef> corners;  // ccw cycle around the point
  long cone = 0;                 // total angle = cone * pi
  bool marked = false;
  long order() const { return cone - 2; }
};

struct StratumSignature {
  std::vector<long> alpha;  // cone orders, sorted descending
  int eps = 1;
  int genus = 0;
  long total() const {
    long s = 0;
    for (long a : alpha) s += a;
    return s;
  }
};

template <class S>
class SurfaceBuilder {
 public:
  int add_triangle(Vec2<S> v0, Vec2<S> v1, Vec2<S> v2) {
    tris.push_back({{std::move(v0), std::move(v1), std::move(v2)}});
    return int(tris.size()) - 1;
  }
  void glue(SlotRef a, SlotRef b, int s) { gluings.push_back({a, b, s}); }
  void mark(SlotRef corner) { marks.push_back(corner); }

  std::vector<Triangle<S>> tris;
  struct GluingRec {
    SlotRef a, b;
    int s;
  };
  std::vector<GluingRec> gluings;
  std::vector<SlotRef> marks;
};

template <class S>
class Surface {
 public:
  using Scalar = S;
  using Angle = typename NumTraits<S>::Angle;

  // --- raw data
  std::vector<Triangle<S>> tris;

  // --- derived combinatorics (filled by build_surface)
  std::vector<Edge> edges;                    // canonical order
  std::vector<VertexClass> classes;
  int eps = 1;                                // holonomy sign

  int F() const { return int(tris.size()); }
  int E() const { return int(edges.size()); }
  int V() const { return int(classes.size()); }
  int genus() const { return (2 - V() + E() - F()) / 2; }

  const Vec2<S>& side(SlotRef s) const { return tris[s.t].v[s.i]; }
  SlotRef partner(SlotRef s) const { return partner_[sid(s)]; }
  int gsign(SlotRef s) const { return sign_[sid(s)]; }
  int edge_of(SlotRef s) const { return edge_of_[sid(s)]; }
  // side(s) == slot_coeff(s) * edge_vector(edge_of(s))
  int slot_coeff(SlotRef s) const { return coeff_[sid(s)]; }
  const Vec2<S>& edge_vector(int e) const { return side(edges[e].a); }
  int class_of(SlotRef corner) const { return class_of_[sid(corner)]; }
  bool marked(SlotRef corner) const { return classes[class_of(corner)].marked; }

  // interior angle at a corner, in (0, pi)
  Angle corner_angle(SlotRef c) const {
    return Angle::between(tris[c.t].v[c.i], -tris[c.t].v[prev3(c.i)]);
  }
  // next corner counterclockwise around the same vertex
  SlotRef next_corner_ccw(SlotRef c) const { return partner({c.t, prev3(c.i)}); }
  // next corner clockwise around the same vertex
  SlotRef next_corner_cw(SlotRef c) const {
    SlotRef p = partner({c.t, c.i});
    return {p.t, next3(p.i)};
  }

  S area() const {
    S a{};
    for (const auto& t : tris) a += cross(t.v[0], t.v[1]);
    return a / 2;
  }

  StratumSignature stratum() const {
    long g3 = 3L * genus() + V() - 3;
    if (g3 < 2)
      fail(errc::complexity_too_low,
           "surface has 3g+n-3 = " + std::to_string(g3) + ", need at least 2");
    StratumSignature sig;
    for (const auto& c : classes) sig.alpha.push_back(c.order());
    std::sort(sig.alpha.rbegin(), sig.alpha.rend());
    sig.eps = eps;
    sig.genus = genus();
    if (sig.total() != 4L * genus() - 4)
      fail(errc::gauss_bonnet_violation,
           "cone orders sum to " + std::to_string(sig.total()) + ", expected " +
               std::to_string(4L * genus() - 4));
    return sig;
  }

  // internal
  int sid(SlotRef s) const { return 3 * s.t + s.i; }
  SlotRef from_sid(int id) const { return {id / 3, id % 3}; }

  std::vector<SlotRef> partner_;
  std::vector<int> sign_;
  std::vector<int> edge_of_;
  std::vector<int> coeff_;
  std::vector<int> class_of_;
};

namespace detail {

template <class S>
bool vectors_match(const Vec2<S>& got, const Vec2<S>& want) {
  return got == want;
}
inline bool vectors_match(const DVec& got, const DVec& want) {
  double scale = std::max({1.0, norm(got), norm(want)});
  return norm(got - want) <= 1e-9 * scale;
}

template <class S>
std::optional<long> angle_pi_multiple(const ExactAngle& a) {
  if (!a.residual_zero()) return std::nullopt;
  return a.k;
}
template <class S>
std::optional<long> angle_pi_multiple(const FloatAngle& a) {
  long m = std::lround(a.a / M_PI);
  if (std::fabs(a.a - double(m) * M_PI) > FloatAngle::snap * std::max(1.0, std::fabs(a.a)))
    return std::nullopt;
  return m;
}

}  // namespace detail

template <class S>
Surface<S> build_surface(const SurfaceBuilder<S>& in) {
  Surface<S> srf;
  srf.tris = in.tris;
  const int F = srf.F();
  if (F == 0) fail(errc::degenerate_input, "no triangles");

  // triangle geometry
  for (int t = 0; t < F; ++t) {
    const auto& tv = srf.tris[t].v;
    if (!detail::vectors_match(tv[0] + tv[1] + tv[2], Vec2<S>{}))
      fail(errc::triangle_ineq, "triangle " + std::to_string(t) + " does not close");
    if (sign_of(cross(tv[0], tv[1])) <= 0)
      fail(errc::degenerate_triangle,
           "triangle " + std::to_string(t) + " has non-positive area");
  }

  // gluing pairing
  srf.partner_.assign(3 * F, SlotRef{});
  srf.sign_.assign(3 * F, 0);
  auto check_slot = [&](SlotRef s) {
    if (s.t < 0 || s.t >= F || s.i < 0 || s.i > 2)
      fail(errc::degenerate_input, "slot " + to_string(s) + " out of range");
  };
  for (const auto& g : in.gluings) {
    check_slot(g.a);
    check_slot(g.b);
    if (g.s != 1 && g.s != -1)
      fail(errc::gluing_mismatch, "gluing sign must be +1 or -1");
    if (g.a == g.b)
      fail(errc::gluing_mismatch, "slot " + to_string(g.a) + " glued to itself");
    for (SlotRef s : {g.a, g.b})
      if (srf.partner_[srf.sid(s)].valid())
        fail(errc::gluing_mismatch, "slot " + to_string(s) + " glued twice");
    srf.partner_[srf.sid(g.a)] = g.b;
    srf.partner_[srf.sid(g.b)] = g.a;
    srf.sign_[srf.sid(g.a)] = g.s;
    srf.sign_[srf.sid(g.b)] = g.s;
  }
  for (int id = 0; id < 3 * F; ++id)
    if (!srf.partner_[id].valid())
      fail(errc::unglued_slot, "slot " + to_string(srf.from_sid(id)) + " is unglued");

  // vector compatibility: v_b == -s * v_a
  for (int id = 0; id < 3 * F; ++id) {
    SlotRef a = srf.from_sid(id), b = srf.partner_[id];
    if (srf.sid(b) < id) continue;
    const Vec2<S>& va = srf.side(a);
    Vec2<S> want = srf.sign_[id] == 1 ? -va : va;
    if (!detail::vectors_match(srf.side(b), want))
      fail(errc::gluing_mismatch,
           "sides " + to_string(a) + " and " + to_string(b) + " have incompatible vectors");
  }

  // connectivity over the dual graph
  {
    std::vector<char> seen(F, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!q.empty()) {
      int t = q.front();
      q.pop();
      for (int i = 0; i < 3; ++i) {
        int u = srf.partner_[3 * t + i].t;
        if (!seen[u]) {
          seen[u] = 1;
          ++reached;
          q.push(u);
        }
      }
    }
    if (reached != F) fail(errc::disconnected, "surface is not connected");
  }

  // canonical edge list, ordered by designated (lex-min) slot
  srf.edge_of_.assign(3 * F, -1);
  srf.coeff_.assign(3 * F, 0);
  for (int id = 0; id < 3 * F; ++id) {
    SlotRef a = srf.from_sid(id), b = srf.partner_[id];
    if (srf.sid(b) < id) continue;
    int e = int(srf.edges.size());
    srf.edges.push_back({a, b, srf.sign_[id]});
    srf.edge_of_[srf.sid(a)] = e;
    srf.coeff_[srf.sid(a)] = 1;
    srf.edge_of_[srf.sid(b)] = e;
    srf.coeff_[srf.sid(b)] = -srf.sign_[id];
  }

  // vertex classes: cycles of the ccw corner permutation
  srf.class_of_.assign(3 * F, -1);
  for (int id = 0; id < 3 * F; ++id) {
    if (srf.class_of_[id] >= 0) continue;
    int cid = int(srf.classes.size());
    VertexClass vc;
    SlotRef start = srf.from_sid(id);
    SlotRef c = start;
    typename Surface<S>::Angle total = Surface<S>::Angle::zero();
    do {
      srf.class_of_[srf.sid(c)] = cid;
      vc.corners.push_back(c);
      total += srf.corner_angle(c);
      c = srf.next_corner_ccw(c);
    } while (c != start);
    auto m = detail::angle_pi_multiple<S>(total);
    if (!m || *m < 1)
      fail(errc::bad_cone_angle, "cone angle at corner " + to_string(start) +
                                     " is not a positive multiple of pi");
    vc.cone = *m;
    srf.classes.push_back(std::move(vc));
  }

  // marks
  for (SlotRef c : in.marks) {
    check_slot(c);
    srf.classes[srf.class_of_[srf.sid(c)]].marked = true;
  }
  for (const auto& vc : srf.classes) {
    if (vc.cone == 1 && !vc.marked)
      fail(errc::bad_cone_angle,
           "cone angle pi at corner " + to_string(vc.corners[0]) + " must be marked");
    if (vc.cone == 2 && !vc.marked)
      fail(errc::bad_cone_angle, "regular vertex at corner " + to_string(vc.corners[0]) +
                                     " must be marked or removed");
  }

  // holonomy sign: try to gauge all gluing signs to +1 over a spanning tree
  {
    std::vector<int> g(F, 0);
    g[0] = 1;
    std::queue<int> q;
    q.push(0);
    bool trivial = true;
    std::vector<const Edge*> cotree;
    std::vector<char> tree_edge(srf.edges.size(), 0);
    while (!q.empty()) {
      int t = q.front();
      q.pop();
      for (int i = 0; i < 3; ++i) {
        SlotRef p = srf.partner_[3 * t + i];
        if (g[p.t] == 0) {
          g[p.t] = srf.sign_[3 * t + i] * g[t];
          tree_edge[srf.edge_of_[3 * t + i]] = 1;
          q.push(p.t);
        }
      }
    }
    for (size_t e = 0; e < srf.edges.size(); ++e) {
      if (tree_edge[e]) continue;
      const Edge& ed = srf.edges[e];
      if (ed.s != g[ed.a.t] * g[ed.b.t]) trivial = false;
    }
    srf.eps = trivial ? 1 : -1;
  }

  // parity audit: an odd cone angle multiple can only occur with holonomy -1
  for (const auto& vc : srf.classes)
    if (vc.cone % 2 != 0 && srf.eps == 1)
      throw std::logic_error("odd cone angle on a surface gauged to trivial holonomy");

  if ((srf.V() - srf.E() + srf.F()) % 2 != 0)
    throw std::logic_error("odd Euler characteristic");

  return srf;
}

// ----------------------------------------------------------- transformations

template <class S>
SurfaceBuilder<S> to_builder(const Surface<S>& s) {
  SurfaceBuilder<S> b;
  b.tris = s.tris;
  for (const Edge& e : s.edges) b.glue(e.a, e.b, e.s);
  for (int c = 0; c < s.V(); ++c)
    if (s.classes[c].marked) b.mark(s.classes[c].corners[0]);
  return b;
}

// negate one triangle's vectors and flip its gluing signs; the result is the
// same flat surface presented in a different chart
template <class S>
Surface<S> apply_gauge(const Surface<S>& s, int t) {
  SurfaceBuilder<S> b = to_builder(s);
  for (auto& v : b.tris[t].v) v = -v;
  for (auto& g : b.gluings) {
    if (g.a.t == t) g.s = -g.s;
    if (g.b.t == t) g.s = -g.s;  // a self-gluing flips twice, back to itself
  }
  return build_surface(b);
}

template <class S>
Surface<S> scaled(const Surface<S>& s, const S& factor) {
  if (sign_of(factor) <= 0) fail(errc::degenerate_input, "scale factor must be positive");
  SurfaceBuilder<S> b = to_builder(s);
  for (auto& t : b.tris)
    for (auto& v : t.v) v = v * factor;
  return build_surface(b);
}

// rotate by the angle of a unit vector; exact when scalar and vector are exact
template <class S>
Surface<S> rotated(const Surface<S>& s, const Vec2<S>& unit) {
  if (!detail::vectors_match(Vec2<S>{norm2(unit), S{}}, Vec2<S>{S(1), S{}}))
    fail(errc::degenerate_input, "rotation vector must have unit length");
  SurfaceBuilder<S> b = to_builder(s);
  for (auto& t : b.tris)
    for (auto& v : t.v) v = cmul(v, unit);
  return build_surface(b);
}

// half turn; equals the composite of gauge moves at every triangle
template <class S>
Surface<S> rotated_half_turn(const Surface<S>& s) {
  SurfaceBuilder<S> b = to_builder(s);
  for (auto& t : b.tris)
    for (auto& v : t.v) v = -v;
  return build_surface(b);
}

inline Surface<double> to_float(const Surface<Rational>& s) {
  SurfaceBuilder<double> b;
  for (const auto& t : s.tris)
    b.add_triangle(approx(t.v[0]), approx(t.v[1]), approx(t.v[2]));
  for (const Edge& e : s.edges) b.glue(e.a, e.b, e.s);
  for (int c = 0; c < s.V(); ++c)
    if (s.classes[c].marked) b.mark(s.classes[c].corners[0]);
  return build_surface(b);
}

inline Surface<double> rotated(const Surface<double>& s, double theta) {
  return rotated(s, DVec{std::cos(theta), std::sin(theta)});
}

inline Surface<double> normalized_area(const Surface<double>& s) {
  return scaled(s, 1.0 / std::sqrt(s.area()));
}

inline std::string format_stratum(const StratumSignature& sig) {
  std::string out = "(";
  for (size_t i = 0; i < sig.alpha.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(sig.alpha[i]);
  }
  out += sig.eps > 0 ? ";+1)" : ";-1)";
  return out;
}

}  // namespace semiflat
