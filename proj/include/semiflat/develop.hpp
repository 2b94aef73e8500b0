#pragma once
// Developing triangle chains into the plane.
//
// Each triangle has a local chart with corner 0 at the origin, corner 1 at
// v0, corner 2 at v0+v1. Crossing a door (a glued side) transports between
// the two triangles' charts by z -> s*z + c, where s is the gluing sign; the
// development of a chain of crossings composes these transitions into maps
// z -> eta*z + u with eta = product of the signs. A closed chain's final map
// is the holonomy of the corresponding loop.

#include <vector>

#include "semiflat/errors.hpp"
#include "semiflat/surface.hpp"

namespace semiflat {

template <class S>
Vec2<S> chart_corner(const Surface<S>& s, SlotRef c) {
  switch (c.i) {
    case 0: return {};
    case 1: return s.tris[c.t].v[0];
    default: return s.tris[c.t].v[0] + s.tris[c.t].v[1];
  }
}

template <class S>
struct DevMap {
  int eta = 1;
  Vec2<S> u{};

  Vec2<S> apply(const Vec2<S>& z) const { return (eta == 1 ? z : -z) + u; }
  Vec2<S> dir(const Vec2<S>& d) const { return eta == 1 ? d : -d; }
};

// development map of the triangle behind `door`, given the map of the
// triangle in front of it
template <class S>
DevMap<S> cross_door(const Surface<S>& s, const DevMap<S>& a, SlotRef door) {
  SlotRef p = s.partner(door);
  int sg = s.gsign(door);
  // chart transition phi(z) = sg*z + c identifies the two sides, matching
  // the door's start corner with the far side's end corner
  Vec2<S> c = chart_corner(s, {p.t, next3(p.i)}) - chart_corner(s, door) * S(sg);
  DevMap<S> b;
  b.eta = a.eta * sg;
  Vec2<S> ec = a.eta * sg == 1 ? c : -c;
  b.u = a.u - ec;
  return b;
}

// developed endpoints of a door as seen by a traveler about to cross it:
// first = right endpoint (the door slot's start corner), second = left
template <class S>
std::pair<Vec2<S>, Vec2<S>> dev_gate(const Surface<S>& s, const DevMap<S>& a, SlotRef door) {
  return {a.apply(chart_corner(s, door)), a.apply(chart_corner(s, {door.t, next3(door.i)}))};
}

// develop a chain of door crossings; maps[j] is the map of doors[j]'s
// triangle, maps[n] the map of the final triangle entered
template <class S>
std::vector<DevMap<S>> develop_chain(const Surface<S>& s, const std::vector<SlotRef>& doors) {
  std::vector<DevMap<S>> maps;
  maps.reserve(doors.size() + 1);
  maps.push_back({});
  for (size_t j = 0; j < doors.size(); ++j) {
    if (j > 0 && s.partner(doors[j - 1]).t != doors[j].t)
      fail(errc::combinatorics_mismatch,
           "door " + to_string(doors[j]) + " does not follow door " +
               to_string(doors[j - 1]));
    maps.push_back(cross_door(s, maps.back(), doors[j]));
  }
  return maps;
}

// --------------------------------------------------------------------------
// integer shadow of the development
//
// Every developed point is an integer combination of edge vectors: chart
// corners are sums of sides, and door transitions only negate and translate.
// Tracking the coefficients alongside the numeric development yields exact
// linear expansions of segments and holonomies in the edge periods, which is
// what period-coordinate derivatives and perturbation bounds are built from.

using EdgeCombo = std::vector<int>;  // coefficient per edge vector

template <class S>
EdgeCombo corner_combo(const Surface<S>& s, SlotRef c) {
  EdgeCombo n(size_t(s.E()), 0);
  if (c.i >= 1) n[s.edge_of({c.t, 0})] += s.slot_coeff({c.t, 0});
  if (c.i == 2) n[s.edge_of({c.t, 1})] += s.slot_coeff({c.t, 1});
  return n;
}

template <class S>
Vec2<S> eval_combo(const Surface<S>& s, const EdgeCombo& n) {
  Vec2<S> v{};
  for (int e = 0; e < s.E(); ++e)
    if (n[e] != 0) v += s.edge_vector(e) * S(n[e]);
  return v;
}

// coefficient-level counterpart of DevMap: z -> eta*z + sum_e u[e]*period_e
struct ComboDev {
  int eta = 1;
  EdgeCombo u;
};

inline EdgeCombo combo_apply(const ComboDev& a, const EdgeCombo& n) {
  EdgeCombo out = a.u;
  for (size_t e = 0; e < n.size(); ++e) out[e] += a.eta * n[e];
  return out;
}

// mirrors cross_door coefficient by coefficient
template <class S>
ComboDev cross_door_combo(const Surface<S>& s, const ComboDev& a, SlotRef door) {
  SlotRef p = s.partner(door);
  int sg = s.gsign(door);
  EdgeCombo c = corner_combo(s, SlotRef{p.t, next3(p.i)});
  EdgeCombo d = corner_combo(s, door);
  for (size_t e = 0; e < c.size(); ++e) c[e] -= sg * d[e];
  ComboDev b;
  b.eta = a.eta * sg;
  int m = a.eta * sg == 1 ? 1 : -1;
  b.u = a.u;
  for (size_t e = 0; e < c.size(); ++e) b.u[e] -= m * c[e];
  return b;
}

template <class S>
std::vector<ComboDev> develop_chain_combo(const Surface<S>& s, const std::vector<SlotRef>& doors) {
  std::vector<ComboDev> maps;
  maps.reserve(doors.size() + 1);
  maps.push_back({1, EdgeCombo(size_t(s.E()), 0)});
  for (SlotRef d : doors) maps.push_back(cross_door_combo(s, maps.back(), d));
  return maps;
}

}  // namespace semiflat
