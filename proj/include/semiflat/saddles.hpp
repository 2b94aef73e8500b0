#pragma once
// Saddle connection enumeration by unfolding.
//
// Directions leaving a vertex are split among the corners around it: each
// corner owns the half-open wedge from its first side (inclusive) sweeping
// counterclockwise to its second (exclusive), so the wedges tile the cone.
// Scanning one wedge unfolds the triangle chain behind it into the plane
// while narrowing an open direction window. A far corner landing inside the
// window is a connection; rays through it stop there, so its direction is
// removed and the window splits in two. Chains whose entry door lies wholly
// beyond the length cap are pruned, and every unfolded triangle is charged
// against a node budget.

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "semiflat/develop.hpp"
#include "semiflat/errors.hpp"
#include "semiflat/numeric.hpp"
#include "semiflat/surface.hpp"

namespace semiflat {

// geodesic segment between vertices with none in its interior; vec is the
// developed endpoint with the start vertex at the origin, in the orientation
// of the start corner's own chart
template <class S>
struct SaddleConn {
  SlotRef start;               // corner whose wedge holds the outgoing direction
  SlotRef end;                 // corner reached, in the last triangle entered
  std::vector<SlotRef> doors;  // sides crossed, each named in the triangle it exits
  Vec2<S> vec{};

  S len2() const { return norm2(vec); }

  friend bool operator==(const SaddleConn& a, const SaddleConn& b) {
    return a.start == b.start && a.end == b.end && a.doors == b.doors && a.vec == b.vec;
  }
};

// the same unoriented connection traversed the other way
template <class S>
SaddleConn<S> reverse_connection(const Surface<S>& s, const SaddleConn<S>& g) {
  SaddleConn<S> r;
  if (g.doors.empty()) {
    // g runs along the side at its start corner; the reverse runs along the
    // glued copy of that side
    SlotRef p = s.partner(g.start);
    r.start = p;
    r.end = {p.t, next3(p.i)};
    r.vec = s.side(p);
    return r;
  }
  r.start = g.end;
  r.end = g.start;
  r.doors.reserve(g.doors.size());
  int eta = 1;
  for (size_t k = g.doors.size(); k-- > 0;) {
    r.doors.push_back(s.partner(g.doors[k]));
    eta *= s.gsign(g.doors[k]);
  }
  // the reversed chain develops through the inverse isometry: the period
  // flips sign and picks up the chain's orientation sign
  r.vec = eta == 1 ? -g.vec : g.vec;
  return r;
}

namespace detail {

inline bool slot_less(SlotRef a, SlotRef b) { return a.t != b.t ? a.t < b.t : a.i < b.i; }

// total order on oriented connections; start corner plus period already
// determine the ray, the door chain separates reverses cheaply first
template <class S>
bool oriented_before(const SaddleConn<S>& a, const SaddleConn<S>& b) {
  if (!(a.start == b.start)) return slot_less(a.start, b.start);
  if (a.doors.size() != b.doors.size()) return a.doors.size() < b.doors.size();
  for (size_t k = 0; k < a.doors.size(); ++k)
    if (!(a.doors[k] == b.doors[k])) return slot_less(a.doors[k], b.doors[k]);
  if (!(a.vec.x == b.vec.x)) return a.vec.x < b.vec.x;
  return a.vec.y < b.vec.y;
}

template <class S>
S seg_dist2(const Vec2<S>& a, const Vec2<S>& b) {
  Vec2<S> e = b - a;
  if (sign_of(dot(e, -a)) <= 0) return norm2(a);
  if (sign_of(dot(e, -b)) >= 0) return norm2(b);
  S c = cross(a, b);
  return c * c / norm2(e);
}

template <class S>
struct WedgeNode {
  SlotRef door;                // side about to be crossed, in its own triangle
  DevMap<S> map;               // door.t's chart -> start-vertex chart
  Vec2<S> lo, hi;              // open direction window, counterclockwise, width < pi
  std::vector<SlotRef> doors;  // chain so far, ending with door
};

template <class S>
void scan_wedge(const Surface<S>& s, SlotRef c, const S& len2, size_t budget, size_t& spent,
                std::vector<SaddleConn<S>>& out) {
  // the wedge's first side is the one direction on the closed window edge
  // and is itself a connection; everything else runs through the open cone
  if (!(len2 < norm2(s.side(c)))) out.push_back({c, {c.t, next3(c.i)}, {}, s.side(c)});
  std::vector<WedgeNode<S>> stack;
  auto push = [&](SlotRef door, const DevMap<S>& m, const Vec2<S>& wl, const Vec2<S>& wh,
                  std::vector<SlotRef> chain) {
    if (sign_of(cross(wl, wh)) <= 0) return;  // empty window
    auto [r, l] = dev_gate(s, m, door);
    if (len2 < seg_dist2(r, l)) return;  // whole door out of reach
    chain.push_back(door);
    stack.push_back({door, m, wl, wh, std::move(chain)});
  };
  DevMap<S> base{1, -chart_corner(s, c)};
  push({c.t, next3(c.i)}, base, s.side(c), -s.side({c.t, prev3(c.i)}), {});
  while (!stack.empty()) {
    WedgeNode<S> n = std::move(stack.back());
    stack.pop_back();
    if (++spent > budget) fail(errc::budget_exceeded, "unfolding exceeded the triangle budget");
    SlotRef q = s.partner(n.door);
    DevMap<S> m = cross_door(s, n.map, n.door);
    SlotRef far{q.t, prev3(q.i)};
    Vec2<S> C = m.apply(chart_corner(s, far));
    // the new corner, the window ends, and the door endpoints all sit in one
    // open half-plane, so cross signs order their directions faithfully
    int a = sign_of(cross(n.lo, C)), b = sign_of(cross(C, n.hi));
    if (a > 0 && b > 0) {
      if (!(len2 < norm2(C))) out.push_back({c, far, n.doors, C});
      push({q.t, next3(q.i)}, m, n.lo, C, n.doors);
      push({q.t, prev3(q.i)}, m, C, n.hi, std::move(n.doors));
    } else if (a <= 0) {
      // corner clockwise of the whole window: only the far left door goes on
      push({q.t, prev3(q.i)}, m, n.lo, n.hi, std::move(n.doors));
    } else {
      push({q.t, next3(q.i)}, m, n.lo, n.hi, std::move(n.doors));
    }
  }
}

}  // namespace detail

// every saddle connection of length at most max_len, one representative per
// unoriented class, sorted by length then by start corner and period
template <class S>
std::vector<SaddleConn<S>> enumerate_saddle_connections(const Surface<S>& s, const S& max_len,
                                                        size_t budget = size_t(1) << 20) {
  if (sign_of(max_len) <= 0) fail(errc::degenerate_input, "length cap must be positive");
  S len2 = max_len * max_len;
  std::vector<SaddleConn<S>> all;
  size_t spent = 0;
  for (int t = 0; t < int(s.tris.size()); ++t)
    for (int i = 0; i < 3; ++i) detail::scan_wedge(s, {t, i}, len2, budget, spent, all);
  // the scan finds each oriented connection exactly once; keep the smaller
  // key of every reverse pair
  std::vector<SaddleConn<S>> kept;
  kept.reserve(all.size() / 2);
  for (auto& g : all) {
    SaddleConn<S> r = reverse_connection(s, g);
    if (!detail::oriented_before(r, g)) kept.push_back(std::move(g));
  }
  std::sort(kept.begin(), kept.end(), [](const SaddleConn<S>& x, const SaddleConn<S>& y) {
    S nx = norm2(x.vec), ny = norm2(y.vec);
    if (!(nx == ny)) return nx < ny;
    return detail::oriented_before(x, y);
  });
  return kept;
}

// connections whose endpoint classes are {a, b} as an unordered pair, loops
// included when a == b; a plain filter over the full enumeration
template <class S>
std::vector<SaddleConn<S>> enumerate_segments(const Surface<S>& s, int a, int b, const S& max_len,
                                              size_t budget = size_t(1) << 20) {
  std::vector<SaddleConn<S>> all = enumerate_saddle_connections(s, max_len, budget);
  std::vector<SaddleConn<S>> out;
  for (auto& g : all) {
    int u = s.class_of(g.start), v = s.class_of(g.end);
    if ((u == a && v == b) || (u == b && v == a)) out.push_back(std::move(g));
  }
  return out;
}

}  // namespace semiflat
