#pragma once
// Tightening free homotopy classes of closed curves to geodesic
// representatives.
//
// A class is given combinatorially as a cyclic crossing word: the sequence
// of doors (triangle sides) a transverse loop exits through. Tightening
// either finds a straight closed representative (a cylinder curve, when the
// corridor holonomy is a nonzero translation and the corridor is wide
// enough) or a polygonal representative pinned at vertices. A pinned
// representative is a cyclic alternation of straight segments and junctions;
// at each junction the path wraps a vertex, crossing a block of doors
// incident to it. It is geodesic when at every junction the wrapped sector
// measures at least pi (automatic for taut paths) and, at unmarked
// vertices, the opposite sector does too. Junctions at marked vertices have
// no constraint on the opposite side: the class cannot be pushed across a
// marked point.
//
// Contractible words and loops around a single marked point have no
// geodesic representative; both reduce to zero length here and are rejected
// as inessential. Words with orientation-reversing holonomy are tightened
// via their double, which always has trivial translation holonomy; the
// reported length is halved.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "semiflat/develop.hpp"
#include "semiflat/errors.hpp"
#include "semiflat/numeric.hpp"
#include "semiflat/periods.hpp"
#include "semiflat/surface.hpp"

namespace semiflat {

// ---------------------------------------------------------------------------
// crossing words

template <class S>
void validate_cyclic_word(const Surface<S>& s, const std::vector<SlotRef>& word) {
  if (word.empty()) fail(errc::degenerate_input, "empty crossing word");
  for (size_t j = 0; j < word.size(); ++j) {
    SlotRef d = word[j];
    if (d.t < 0 || d.t >= s.F() || d.i < 0 || d.i > 2)
      fail(errc::degenerate_input, "door " + to_string(d) + " out of range");
    SlotRef n = word[(j + 1) % word.size()];
    if (s.partner(d).t != n.t)
      fail(errc::combinatorics_mismatch,
           "door " + to_string(n) + " does not follow door " + to_string(d));
  }
}

// delete immediate backtracks (a door followed by its partner), cyclically
template <class S>
std::vector<SlotRef> reduce_cyclic_spurs(const Surface<S>& s, const std::vector<SlotRef>& word) {
  std::vector<SlotRef> out;
  for (SlotRef d : word) {
    if (!out.empty() && d == s.partner(out.back()))
      out.pop_back();
    else
      out.push_back(d);
  }
  while (out.size() >= 2 && out.front() == s.partner(out.back())) {
    out.pop_back();
    out.erase(out.begin());
  }
  return out;
}

// spur reduction for an open door chain (used when splicing junctions)
template <class S>
std::vector<SlotRef> reduce_linear_spurs(const Surface<S>& s, const std::vector<SlotRef>& word) {
  std::vector<SlotRef> out;
  for (SlotRef d : word) {
    if (!out.empty() && d == s.partner(out.back()))
      out.pop_back();
    else
      out.push_back(d);
  }
  return out;
}

// lexicographically smallest rotation, for deterministic comparison
inline std::vector<SlotRef> canonical_rotation(std::vector<SlotRef> word) {
  if (word.size() < 2) return word;
  size_t n = word.size(), best = 0;
  for (size_t r = 1; r < n; ++r) {
    for (size_t k = 0; k < n; ++k) {
      SlotRef a = word[(best + k) % n], b = word[(r + k) % n];
      if (b < a) {
        best = r;
        break;
      }
      if (a < b) break;
    }
  }
  std::rotate(word.begin(), word.begin() + best, word.end());
  return word;
}

template <class S>
DevMap<S> word_holonomy(const Surface<S>& s, const std::vector<SlotRef>& word) {
  validate_cyclic_word(s, word);
  return develop_chain(s, word).back();
}

// ---------------------------------------------------------------------------
// funnel: taut path through a corridor of gates
//
// Gates are the developed door segments in crossing order, each split into
// the endpoint on the traveler's right (the door slot's start corner) and on
// the left. The taut path from `start` to `target` through all gates is a
// polyline whose interior vertices are gate endpoints; only those wrap
// events are returned. The corridor is a triangle strip, for which the
// restart-based funnel scan is exact.

template <class S>
struct Gate {
  Vec2<S> r, l;
};

struct FunnelWrap {
  int gate;  // index of the gate whose endpoint was wrapped
  int side;  // +1 left endpoint, -1 right
};

template <class S>
std::vector<FunnelWrap> funnel_path(const Vec2<S>& start, const std::vector<Gate<S>>& gates,
                                    const Vec2<S>& target) {
  std::vector<FunnelWrap> out;
  Vec2<S> apex = start, pl = start, pr = start;
  long li = -1, ri = -1;
  size_t i = 0;
  size_t guard = 0, guard_max = (gates.size() + 2) * (gates.size() + 2) * 4 + 64;
  while (i <= gates.size()) {
    if (++guard > guard_max) fail(errc::budget_exceeded, "funnel scan did not terminate");
    const Vec2<S>& gl = i < gates.size() ? gates[i].l : target;
    const Vec2<S>& gr = i < gates.size() ? gates[i].r : target;
    // right endpoint: adopt while it narrows the funnel, wrap the left
    // point once it crosses over
    if (pr == apex || sign_of(cross(pr - apex, gr - apex)) >= 0) {
      if (pl == apex || sign_of(cross(pl - apex, gr - apex)) <= 0) {
        pr = gr;
        ri = long(i);
      } else {
        out.push_back({int(li), +1});
        apex = pl;
        pr = pl;
        ri = li;
        i = size_t(li + 1);
        continue;
      }
    }
    if (pl == apex || sign_of(cross(pl - apex, gl - apex)) <= 0) {
      if (pr == apex || sign_of(cross(pr - apex, gl - apex)) >= 0) {
        pl = gl;
        li = long(i);
      } else {
        out.push_back({int(ri), -1});
        apex = pr;
        pl = pr;
        li = ri;
        i = size_t(ri + 1);
        continue;
      }
    }
    ++i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// pinned representatives

struct Pin {
  SlotRef c_in;   // corner where the incoming segment ends
  SlotRef c_out;  // corner where the outgoing segment starts
  std::vector<SlotRef> block;  // doors crossed while wrapping the vertex
  int side = 0;                // +1 wrapped from the left chain, -1 right
};

template <class S>
struct Geodesic {
  enum class Kind { cylinder, pinned };
  Kind kind = Kind::pinned;
  std::vector<SlotRef> word;  // reduced crossing word, canonical rotation
  bool doubled = false;       // tightened as the double of the input word
  double length = 0;

  // cylinder representative: a straight closed curve at a fixed level of
  // the projection z -> cross(core, z)
  Vec2<S> core{};
  S offset{};

  // pinned representative
  std::vector<Pin> pins;
  std::vector<std::vector<SlotRef>> intervals;  // doors strictly between pins
  std::vector<Vec2<S>> segments;                // developed inter-pin vectors
  std::vector<S> seg_norm2;
};

struct TightenOptions {
  int max_rounds = 4000;
};

namespace detail {

// corner reached by crossing the next fan door around the wrapped vertex
template <class S>
SlotRef fan_step(const Surface<S>& s, SlotRef c, int side) {
  if (side == +1) return s.partner({c.t, prev3(c.i)});
  SlotRef p = s.partner({c.t, c.i});
  return {p.t, next3(p.i)};
}

template <class S>
SlotRef fan_door(SlotRef c, int side) {
  return side == +1 ? SlotRef{c.t, prev3(c.i)} : SlotRef{c.t, c.i};
}

// walk a junction's block and collect the corner instance in every fan
// triangle; verifies the block is a consistent wrap of one vertex
template <class S>
std::vector<SlotRef> junction_corners(const Surface<S>& s, const Pin& pin) {
  std::vector<SlotRef> cs{pin.c_in};
  SlotRef cur = pin.c_in;
  for (SlotRef d : pin.block) {
    if (!(d == fan_door<S>(cur, pin.side)))
      fail(errc::combinatorics_mismatch, "junction block is not a vertex fan");
    cur = fan_step(s, cur, pin.side);
    cs.push_back(cur);
  }
  if (!(cur == pin.c_out))
    fail(errc::combinatorics_mismatch, "junction block does not reach its exit corner");
  return cs;
}

// sector angle swept by the wrapped side of a junction. ray_in points from
// the vertex back along the incoming segment (in c_in's chart), ray_out
// along the outgoing segment (in c_out's chart). Computed as exact wedge
// pieces through the fan, so windings past a full turn are counted.
template <class S>
typename NumTraits<S>::Angle junction_press_angle(const Surface<S>& s, const Pin& pin,
                                                  const Vec2<S>& ray_in, const Vec2<S>& ray_out) {
  using Angle = typename NumTraits<S>::Angle;
  std::vector<SlotRef> cs = junction_corners(s, pin);
  auto wedge_start = [&](SlotRef c) { return s.side(c); };
  auto wedge_end = [&](SlotRef c) { return -s.side({c.t, prev3(c.i)}); };
  Angle a{};
  if (pin.side == +1) {
    a += Angle::between(ray_in, wedge_end(cs.front()));
    for (size_t l = 1; l + 1 < cs.size(); ++l) a += s.corner_angle(cs[l]);
    a += Angle::between(wedge_start(cs.back()), ray_out);
  } else {
    a += Angle::between(wedge_start(cs.front()), ray_in);
    for (size_t l = 1; l + 1 < cs.size(); ++l) a += s.corner_angle(cs[l]);
    a += Angle::between(ray_out, wedge_end(cs.back()));
  }
  return a;
}

// doors around the pin's vertex on the side opposite its block
template <class S>
std::vector<SlotRef> junction_complement(const Surface<S>& s, const Pin& pin) {
  std::vector<SlotRef> doors;
  SlotRef cur = pin.c_in;
  int side = -pin.side;
  size_t cap = size_t(s.F()) * 6 + 8;
  while (!(cur == pin.c_out)) {
    doors.push_back(fan_door<S>(cur, side));
    cur = fan_step(s, cur, side);
    if (doors.size() > cap)
      fail(errc::combinatorics_mismatch, "junction complement walk did not close");
  }
  return doors;
}

// build pins from funnel wraps over a door chain. Runs of consecutive
// doors sharing the wrapped endpoint are claimed greedily in order;
// `doors[k]` may be claimed by at most one pin.
template <class S>
std::vector<std::pair<Pin, std::pair<size_t, size_t>>> pins_from_wraps(
    const Surface<S>& s, const std::vector<SlotRef>& doors, const std::vector<FunnelWrap>& wraps) {
  auto persists = [&](size_t j, int side) {
    int pi = s.partner(doors[j]).i;
    return side == +1 ? doors[j + 1].i == prev3(pi) : doors[j + 1].i == next3(pi);
  };
  std::vector<std::pair<Pin, std::pair<size_t, size_t>>> out;
  size_t lo = 0;
  for (size_t k = 0; k < wraps.size(); ++k) {
    size_t a = size_t(wraps[k].gate), b = a;
    int side = wraps[k].side;
    size_t hi = k + 1 < wraps.size() ? size_t(wraps[k + 1].gate) - 1 : doors.size() - 1;
    while (a > lo && persists(a - 1, side)) --a;
    while (b < hi && persists(b, side)) ++b;
    Pin pin;
    pin.side = side;
    SlotRef pb = s.partner(doors[b]);
    if (side == +1) {
      pin.c_in = {doors[a].t, next3(doors[a].i)};
      pin.c_out = pb;
    } else {
      pin.c_in = doors[a];
      pin.c_out = {pb.t, next3(pb.i)};
    }
    pin.block.assign(doors.begin() + a, doors.begin() + b + 1);
    out.push_back({std::move(pin), {a, b}});
    lo = b + 1;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// tighten

namespace detail {

template <class S>
struct PinnedState {
  std::vector<Pin> pins;
  std::vector<std::vector<SlotRef>> intervals;  // intervals[j]: pin j -> pin j+1
};

template <class S>
std::vector<SlotRef> state_word(const Surface<S>& s, const PinnedState<S>& st) {
  std::vector<SlotRef> w;
  for (size_t j = 0; j < st.pins.size(); ++j) {
    w.insert(w.end(), st.pins[j].block.begin(), st.pins[j].block.end());
    w.insert(w.end(), st.intervals[j].begin(), st.intervals[j].end());
  }
  return reduce_cyclic_spurs(s, w);
}

template <class S>
struct IntervalDev {
  Vec2<S> seg{};
  int eta_last = 1;
};

// retighten interval j; fills `dev` and returns taut, or returns the new
// pin runs the taut path wraps
template <class S>
std::vector<std::pair<Pin, std::pair<size_t, size_t>>> tighten_interval(
    const Surface<S>& s, const PinnedState<S>& st, size_t j, IntervalDev<S>& dev) {
  const Pin& from = st.pins[j];
  const Pin& to = st.pins[(j + 1) % st.pins.size()];
  const std::vector<SlotRef>& doors = st.intervals[j];
  if (doors.empty()) {
    if (from.c_out.t != to.c_in.t)
      fail(errc::combinatorics_mismatch, "empty interval between different triangles");
    dev.seg = chart_corner(s, to.c_in) - chart_corner(s, from.c_out);
    dev.eta_last = 1;
    return {};
  }
  if (doors.front().t != from.c_out.t)
    fail(errc::combinatorics_mismatch, "interval does not start at its junction triangle");
  auto maps = develop_chain(s, doors);
  if (s.partner(doors.back()).t != to.c_in.t)
    fail(errc::combinatorics_mismatch, "interval does not end at its junction triangle");
  Vec2<S> p = chart_corner(s, from.c_out);
  Vec2<S> q = maps.back().apply(chart_corner(s, to.c_in));
  std::vector<Gate<S>> gates;
  gates.reserve(doors.size());
  for (size_t k = 0; k < doors.size(); ++k) {
    auto [r, l] = dev_gate(s, maps[k], doors[k]);
    gates.push_back({r, l});
  }
  auto wraps = funnel_path(p, gates, q);
  if (wraps.empty()) {
    // a gate endpoint lying exactly on the chord's interior is a vertex the
    // path runs through; the planar funnel passes collinear points, so pin
    // such vertices here (a turn through a cone of angle pi develops its two
    // legs onto one straight line, making this exact case routine)
    Vec2<S> v = q - p;
    auto interior = [&](const Vec2<S>& e) {
      return sign_of(cross(v, e - p)) == 0 && sign_of(dot(e - p, v)) > 0 &&
             sign_of(dot(q - e, v)) > 0;
    };
    std::vector<FunnelWrap> touch;
    for (size_t k = 0; k < gates.size(); ++k) {
      if (interior(gates[k].l))
        touch.push_back({int(k), +1});
      else if (interior(gates[k].r))
        touch.push_back({int(k), -1});
    }
    if (!touch.empty()) return pins_from_wraps(s, doors, touch);
    dev.seg = v;
    dev.eta_last = maps.back().eta;
    return {};
  }
  return pins_from_wraps(s, doors, wraps);
}

// split interval j around newly pinned runs
template <class S>
void insert_pins(PinnedState<S>& st, size_t j,
                 const std::vector<std::pair<Pin, std::pair<size_t, size_t>>>& runs) {
  const std::vector<SlotRef> doors = st.intervals[j];
  std::vector<Pin> pins;
  std::vector<std::vector<SlotRef>> before;
  size_t prev = 0;
  for (const auto& [pin, range] : runs) {
    before.push_back({doors.begin() + prev, doors.begin() + range.first});
    pins.push_back(pin);
    prev = range.second + 1;
  }
  std::vector<SlotRef> after(doors.begin() + prev, doors.end());

  std::vector<Pin> np;
  std::vector<std::vector<SlotRef>> ni;
  for (size_t k = 0; k <= j; ++k) {
    np.push_back(st.pins[k]);
    if (k < j) ni.push_back(st.intervals[k]);
  }
  ni.push_back(before.front());
  for (size_t k = 0; k < pins.size(); ++k) {
    np.push_back(pins[k]);
    ni.push_back(k + 1 < pins.size() ? before[k + 1] : after);
  }
  for (size_t k = j + 1; k < st.pins.size(); ++k) {
    np.push_back(st.pins[k]);
    ni.push_back(st.intervals[k]);
  }
  st.pins = std::move(np);
  st.intervals = std::move(ni);
}

}  // namespace detail

template <class S>
struct GeodesicCheck {
  bool ok = true;
  std::string reason;
};

template <class S>
GeodesicCheck<S> verify_geodesic(const Surface<S>& s, const Geodesic<S>& g);

template <class S>
Geodesic<S> tighten(const Surface<S>& s, std::vector<SlotRef> word, TightenOptions opt = {}) {
  using Angle = typename NumTraits<S>::Angle;
  validate_cyclic_word(s, word);
  word = reduce_cyclic_spurs(s, word);
  if (word.empty()) fail(errc::inessential_curve, "crossing word is contractible");

  int rounds = 0;
  auto spend = [&] {
    if (++rounds > opt.max_rounds)
      fail(errc::budget_exceeded, "tightening exceeded its operation budget");
  };

  bool doubled = false;
  {
    DevMap<S> h = develop_chain(s, word).back();
    if (h.eta == -1) {
      // orientation-reversing holonomy: tighten the double, report half
      std::vector<SlotRef> w2 = word;
      w2.insert(w2.end(), word.begin(), word.end());
      word = std::move(w2);
      doubled = true;
      h = develop_chain(s, word).back();
      if (h.eta != 1 || !is_zero(h.u))
        fail(errc::combinatorics_mismatch, "doubled word should have trivial holonomy");
    }
  }

  // outer loop: a junction collapse at the last remaining pin restarts the
  // pipeline on the rerouted word
  while (true) {
    spend();
    // fix the development base before anything geometric: core and offset
    // are stored relative to the canonical rotation's first chart
    word = canonical_rotation(word);
    auto maps = develop_chain(s, word);
    DevMap<S> h = maps.back();
    size_t n = word.size();

    if (!is_zero(h.u)) {
      // straight closed representatives exist iff some level of the
      // projection along the holonomy vector clears every gate
      bool have = false;
      S min_l{}, max_r{};
      for (size_t j = 0; j < n; ++j) {
        auto [r, l] = dev_gate(s, maps[j], word[j]);
        S pl = cross(h.u, l), pr = cross(h.u, r);
        if (!have) {
          min_l = pl;
          max_r = pr;
          have = true;
        } else {
          if (pl < min_l) min_l = pl;
          if (pr > max_r) max_r = pr;
        }
      }
      if (max_r < min_l) {
        Geodesic<S> g;
        g.kind = Geodesic<S>::Kind::cylinder;
        g.word = word;
        g.doubled = doubled;
        g.core = h.u;
        g.offset = (min_l + max_r) / S(2);
        g.length = norm(approx(h.u)) / (doubled ? 2.0 : 1.0);
        auto chk = verify_geodesic(s, g);
        if (!chk.ok) fail(errc::nonconvergent, "cylinder verification failed: " + chk.reason);
        return g;
      }
    }

    // bootstrap: break the cycle at an anchor on the first gate and pull
    // the anchored loop taut; its wrap points seed the pinned state
    auto [r0, l0] = dev_gate(s, maps[0], word[0]);
    Vec2<S> anchor = (r0 + l0) * (S(1) / S(2));
    std::vector<Gate<S>> gates;
    std::vector<SlotRef> inner(word.begin() + 1, word.end());
    for (size_t k = 0; k < inner.size(); ++k) {
      auto [r, l] = dev_gate(s, maps[k + 1], inner[k]);
      gates.push_back({r, l});
    }
    auto wraps = funnel_path(anchor, gates, h.apply(anchor));
    if (wraps.empty()) {
      if (is_zero(h.u)) fail(errc::inessential_curve, "crossing word is contractible");
      // anchored loop is already straight: degenerate cylinder through the
      // anchor level (the corridor pinches to this single level)
      Geodesic<S> g;
      g.kind = Geodesic<S>::Kind::cylinder;
      g.word = word;
      g.doubled = doubled;
      g.core = h.u;
      g.offset = cross(h.u, anchor);
      g.length = norm(approx(h.u)) / (doubled ? 2.0 : 1.0);
      auto chk = verify_geodesic(s, g);
      if (!chk.ok) fail(errc::nonconvergent, "cylinder verification failed: " + chk.reason);
      return g;
    }

    detail::PinnedState<S> st;
    {
      auto runs = detail::pins_from_wraps(s, inner, wraps);
      size_t first_a = runs.front().second.first;
      for (size_t k = 0; k < runs.size(); ++k) {
        st.pins.push_back(runs[k].first);
        size_t b = runs[k].second.second;
        if (k + 1 < runs.size()) {
          st.intervals.push_back(
              {inner.begin() + b + 1, inner.begin() + runs[k + 1].second.first});
        } else {
          // wrap-around interval through the anchor door
          std::vector<SlotRef> iv(inner.begin() + b + 1, inner.end());
          iv.push_back(word[0]);
          iv.insert(iv.end(), inner.begin(), inner.begin() + first_a);
          st.intervals.push_back(std::move(iv));
        }
      }
    }

    // pinned iteration: retighten intervals, merge touching junctions,
    // reroute junctions whose opposite sector is too narrow
    bool restart_word = false;
    std::vector<detail::IntervalDev<S>> devs;
    while (true) {
      spend();
      size_t m = st.pins.size();
      devs.assign(m, {});
      bool inserted = false;
      for (size_t j = 0; j < m; ++j) {
        detail::IntervalDev<S> dv;
        auto runs = detail::tighten_interval(s, st, j, dv);
        if (runs.empty()) {
          devs[j] = dv;
          continue;
        }
        detail::insert_pins(st, j, runs);
        inserted = true;
        break;
      }
      if (inserted) continue;

      // merge junction pairs connected by a zero-length segment
      bool all_zero = true;
      long zero_at = -1;
      for (size_t j = 0; j < m; ++j) {
        if (is_zero(devs[j].seg)) {
          if (zero_at < 0) zero_at = long(j);
        } else {
          all_zero = false;
        }
      }
      if (all_zero) fail(errc::inessential_curve, "class retracts to a point");
      if (zero_at >= 0) {
        size_t j = size_t(zero_at), k = (j + 1) % m;
        const Pin& a = st.pins[j];
        const Pin& b = st.pins[k];
        // both junctions sit at the same point, so they wrap one vertex and
        // the doors between them must continue its fan; absorb them
        if (a.side != b.side)
          fail(errc::nonconvergent, "zero-length segment between incompatible junctions");
        SlotRef cur = a.c_out;
        for (SlotRef d : st.intervals[j]) {
          if (!(d == detail::fan_door<S>(cur, a.side)))
            fail(errc::nonconvergent, "zero-length segment between incompatible junctions");
          cur = detail::fan_step(s, cur, a.side);
        }
        if (!(cur == b.c_in))
          fail(errc::nonconvergent, "zero-length segment between incompatible junctions");
        Pin merged;
        merged.c_in = a.c_in;
        merged.c_out = b.c_out;
        merged.side = a.side;
        merged.block = a.block;
        merged.block.insert(merged.block.end(), st.intervals[j].begin(), st.intervals[j].end());
        merged.block.insert(merged.block.end(), b.block.begin(), b.block.end());
        detail::PinnedState<S> ns;
        for (size_t t = 0; t < m; ++t) {
          if (t == j) continue;
          if (t == k) {
            ns.pins.push_back(merged);
          } else {
            ns.pins.push_back(st.pins[t]);
          }
          if (t != j) ns.intervals.push_back(st.intervals[t]);
        }
        st = std::move(ns);
        continue;
      }

      // junction angle conditions: pushing the path across a vertex whose
      // opposite sector is below pi strictly shortens it, and the rerouted
      // class may well be a cylinder, so restart the whole pipeline on the
      // rerouted word rather than patching the pinned state
      bool dissolved = false;
      for (size_t j = 0; j < m; ++j) {
        size_t prev = (j + m - 1) % m;
        Vec2<S> in_dir = devs[prev].eta_last == 1 ? devs[prev].seg : -devs[prev].seg;
        Vec2<S> ray_in = -in_dir;
        Vec2<S> ray_out = devs[j].seg;
        Angle alpha = detail::junction_press_angle(s, st.pins[j], ray_in, ray_out);
        if (alpha.cmp_pi(1) < 0) {
          // a wrap below pi is never taut; it is an artifact of the anchored
          // bootstrap funnel. Dissolve the pin into its neighbor intervals
          // and retighten: the interval funnel re-wraps the vertex only if
          // the chord genuinely bends there.
          if (m == 1) fail(errc::nonconvergent, "taut junction with wrapped sector below pi");
          std::vector<SlotRef> merged = st.intervals[prev];
          merged.insert(merged.end(), st.pins[j].block.begin(), st.pins[j].block.end());
          merged.insert(merged.end(), st.intervals[j].begin(), st.intervals[j].end());
          detail::PinnedState<S> ns;
          for (size_t t = 0; t < m; ++t) {
            if (t == j) continue;
            ns.pins.push_back(st.pins[t]);
            ns.intervals.push_back(t == prev ? merged : st.intervals[t]);
          }
          st = std::move(ns);
          dissolved = true;
          break;
        }
        const VertexClass& vc = s.classes[s.class_of(st.pins[j].c_in)];
        if (vc.marked) continue;
        if (alpha.cmp_pi(vc.cone - 1) <= 0) continue;
        std::vector<SlotRef> comp = detail::junction_complement(s, st.pins[j]);
        std::vector<SlotRef> w2;
        for (size_t t = 0; t < m; ++t) {
          if (t == j)
            w2.insert(w2.end(), comp.begin(), comp.end());
          else
            w2.insert(w2.end(), st.pins[t].block.begin(), st.pins[t].block.end());
          w2.insert(w2.end(), st.intervals[t].begin(), st.intervals[t].end());
        }
        word = reduce_cyclic_spurs(s, w2);
        if (word.empty()) fail(errc::inessential_curve, "crossing word is contractible");
        restart_word = true;
        break;
      }
      if (dissolved) continue;
      if (restart_word) break;

      // geodesic reached
      Geodesic<S> g;
      g.kind = Geodesic<S>::Kind::pinned;
      g.doubled = doubled;
      g.pins = st.pins;
      g.intervals = st.intervals;
      double len = 0;
      for (size_t j = 0; j < m; ++j) {
        g.segments.push_back(devs[j].seg);
        g.seg_norm2.push_back(norm2(devs[j].seg));
        len += norm(approx(devs[j].seg));
      }
      g.length = len / (doubled ? 2.0 : 1.0);
      g.word = canonical_rotation(detail::state_word(s, st));
      auto chk = verify_geodesic(s, g);
      if (!chk.ok) fail(errc::nonconvergent, "pinned verification failed: " + chk.reason);
      return g;
    }
  }
}

// ---------------------------------------------------------------------------
// independent verification of a tightened representative

template <class S>
GeodesicCheck<S> verify_geodesic(const Surface<S>& s, const Geodesic<S>& g) {
  using Angle = typename NumTraits<S>::Angle;
  auto no = [](std::string why) { return GeodesicCheck<S>{false, std::move(why)}; };
  try {
    if (g.word.empty()) return no("empty crossing word");
    validate_cyclic_word(s, g.word);

    if (g.kind == Geodesic<S>::Kind::cylinder) {
      auto maps = develop_chain(s, g.word);
      DevMap<S> h = maps.back();
      if (h.eta != 1) return no("closed straight curve with reversing holonomy");
      if (is_zero(h.u)) return no("cylinder with zero holonomy vector");
      if (!detail::vectors_match(h.u, g.core)) return no("holonomy vector mismatch");
      for (size_t j = 0; j < g.word.size(); ++j) {
        auto [r, l] = dev_gate(s, maps[j], g.word[j]);
        if (sign_of(cross(h.u, l) - g.offset) < 0) return no("representative exits a gate on the left");
        if (sign_of(cross(h.u, r) - g.offset) > 0) return no("representative exits a gate on the right");
      }
      double want = norm(approx(h.u)) / (g.doubled ? 2.0 : 1.0);
      if (std::abs(want - g.length) > 1e-9 * (1 + std::abs(want))) return no("length mismatch");
      return {};
    }

    size_t m = g.pins.size();
    if (m == 0 || g.intervals.size() != m || g.segments.size() != m)
      return no("malformed pinned data");
    std::vector<int> etas(m, 1);
    double len = 0;
    for (size_t j = 0; j < m; ++j) {
      const Pin& from = g.pins[j];
      const Pin& to = g.pins[(j + 1) % m];
      const auto& doors = g.intervals[j];
      Vec2<S> p = chart_corner(s, from.c_out);
      Vec2<S> q;
      if (doors.empty()) {
        if (from.c_out.t != to.c_in.t) return no("empty interval between different triangles");
        q = chart_corner(s, to.c_in);
      } else {
        if (doors.front().t != from.c_out.t) return no("interval starts in the wrong triangle");
        auto maps = develop_chain(s, doors);
        if (s.partner(doors.back()).t != to.c_in.t) return no("interval ends in the wrong triangle");
        q = maps.back().apply(chart_corner(s, to.c_in));
        etas[j] = maps.back().eta;
        // the straight segment must cross every gate, in order
        Vec2<S> v = q - p;
        S prev_num{}, prev_den{};
        bool have_prev = false;
        for (size_t k = 0; k < doors.size(); ++k) {
          auto [r, l] = dev_gate(s, maps[k], doors[k]);
          // gate endpoints may lie on the segment only at its own endpoints;
          // anywhere else the path runs through a vertex and must pin there
          auto through = [&](const Vec2<S>& e) {
            return sign_of(cross(v, e - p)) == 0 && !(e == p) && !(e - p == v) &&
                   sign_of(dot(e - p, v)) > 0 && sign_of(dot(v - (e - p), v)) > 0;
          };
          if (sign_of(cross(v, l - p)) < 0) return no("segment exits its corridor on the left");
          if (sign_of(cross(v, r - p)) > 0) return no("segment exits its corridor on the right");
          if (through(l) || through(r)) return no("segment interior passes through a vertex");
          S den = cross(v, l - r);
          if (sign_of(den) == 0) continue;  // segment runs along this gate
          S num = cross(l - p, l - r);
          // intersection parameter num/den along the segment: require
          // 0 <= t_k <= 1 and monotone
          if (sign_of(den) < 0) {
            num = -num;
            den = -den;
          }
          if (sign_of(num) < 0 || num > den) return no("gate crossed outside the segment");
          if (have_prev && num * prev_den < prev_num * den) return no("gates crossed out of order");
          prev_num = num;
          prev_den = den;
          have_prev = true;
        }
      }
      if (!(q - p == g.segments[j])) return no("stored segment mismatch");
      if (is_zero(g.segments[j])) return no("zero-length segment");
      len += norm(approx(g.segments[j]));
    }
    for (size_t j = 0; j < m; ++j) {
      size_t prev = (j + m - 1) % m;
      Vec2<S> in_dir = etas[prev] == 1 ? g.segments[prev] : -g.segments[prev];
      Angle alpha = detail::junction_press_angle(s, g.pins[j], -in_dir, g.segments[j]);
      if (alpha.cmp_pi(1) < 0) return no("wrapped sector below pi");
      const VertexClass& vc = s.classes[s.class_of(g.pins[j].c_in)];
      if (!vc.marked && alpha.cmp_pi(vc.cone - 1) > 0)
        return no("opposite sector below pi at an unmarked vertex");
    }
    double want = len / (g.doubled ? 2.0 : 1.0);
    if (std::abs(want - g.length) > 1e-9 * (1 + std::abs(want))) return no("length mismatch");
    return {};
  } catch (const sf_error& e) {
    return no(e.what());
  }
}

// ---------------------------------------------------------------------------
// straight-line shooting, for generating crossing words

// follow a ray from an interior point until the trajectory returns to its
// start (exactly); returns the crossing word of that closed straight loop
template <class S>
std::vector<SlotRef> shoot_word(const Surface<S>& s, int t, Vec2<S> p, Vec2<S> d,
                                int max_steps = 4096) {
  static_assert(NumTraits<S>::exact, "closure detection needs exact arithmetic");
  if (is_zero(d)) fail(errc::degenerate_input, "zero shooting direction");
  // closure is detected on the state after the first crossing: the start
  // point lies mid-triangle, so it is that entry state which recurs
  int t1 = -1;
  Vec2<S> p1{}, d1{};
  std::vector<SlotRef> doors;
  for (int step = 0; step < max_steps; ++step) {
    // exit side: positive ray parameter, crossing point interior
    int exit = -1;
    S bt{};
    for (int i = 0; i < 3; ++i) {
      Vec2<S> a = chart_corner(s, {t, i});
      Vec2<S> w = chart_corner(s, {t, next3(i)}) - a;
      S den = cross(d, w);
      if (sign_of(den) == 0) continue;
      S tau = cross(a - p, w) / den;
      if (sign_of(tau) <= 0) continue;
      S sig = cross(d, p - a) / den;
      if (sign_of(sig) < 0 || sig > S(1)) continue;
      if (sign_of(sig) == 0 || sig == S(1))
        fail(errc::degenerate_input, "trajectory hits a vertex");
      if (exit < 0 || tau < bt) {
        exit = i;
        bt = tau;
      }
    }
    if (exit < 0) fail(errc::degenerate_input, "trajectory found no exit side");
    SlotRef door{t, exit};
    doors.push_back(door);
    // advance to the crossing point: the entry door then meets the ray at
    // parameter zero in the next triangle and cannot be picked again
    Vec2<S> x = p + d * bt;
    SlotRef q = s.partner(door);
    int sg = s.gsign(door);
    Vec2<S> c = chart_corner(s, {q.t, next3(q.i)}) - chart_corner(s, door) * S(sg);
    p = (sg == 1 ? x : -x) + c;
    d = sg == 1 ? d : -d;
    t = q.t;
    if (doors.size() == 1) {
      t1 = t;
      p1 = p;
      d1 = d;
    } else if (t == t1 && p == p1 && d == d1) {
      return {doors.begin() + 1, doors.end()};
    }
  }
  fail(errc::budget_exceeded, "trajectory did not close");
}

// follow a ray from a vertex corner until it hits another vertex exactly
template <class S>
struct RayHit {
  std::vector<SlotRef> doors;
  SlotRef end_corner;
  Vec2<S> period;  // straight vector in the final triangle's chart
};

template <class S>
RayHit<S> trace_from_corner(const Surface<S>& s, SlotRef c, Vec2<S> d, int max_steps = 4096) {
  if (is_zero(d)) fail(errc::degenerate_input, "zero tracing direction");
  if (sign_of(cross(s.side(c), d)) <= 0 ||
      sign_of(cross(d, -s.side({c.t, prev3(c.i)}))) <= 0)
    fail(errc::degenerate_input, "direction not interior to the corner wedge");
  int t = c.t;
  Vec2<S> p = chart_corner(s, c);
  // p stays the ray origin in the current chart; the parameter along the
  // ray is chart-independent, so crossings must advance it strictly
  S t_last{};
  RayHit<S> hit;
  for (int step = 0; step < max_steps; ++step) {
    int exit = -1;
    S bt{}, bs{};
    for (int i = 0; i < 3; ++i) {
      Vec2<S> a = chart_corner(s, {t, i});
      Vec2<S> w = chart_corner(s, {t, next3(i)}) - a;
      S den = cross(d, w);
      if (sign_of(den) == 0) continue;
      S tau = cross(a - p, w) / den;
      if (!(t_last < tau)) continue;
      S sig = cross(d, p - a) / den;
      if (sign_of(sig) < 0 || sig > S(1)) continue;
      if (exit < 0 || tau < bt) {
        exit = i;
        bt = tau;
        bs = sig;
      }
    }
    if (exit < 0) fail(errc::degenerate_input, "trajectory found no exit side");
    if (sign_of(bs) == 0 || bs == S(1)) {
      hit.end_corner = sign_of(bs) == 0 ? SlotRef{t, exit} : SlotRef{t, next3(exit)};
      hit.period = d * bt;
      return hit;
    }
    SlotRef door{t, exit};
    hit.doors.push_back(door);
    t_last = bt;
    SlotRef q = s.partner(door);
    int sg = s.gsign(door);
    Vec2<S> cc = chart_corner(s, {q.t, next3(q.i)}) - chart_corner(s, door) * S(sg);
    p = (sg == 1 ? p : -p) + cc;
    d = sg == 1 ? d : -d;
    t = q.t;
  }
  fail(errc::not_found_within_budget, "trajectory hit no vertex within the step budget");
}

// ---------------------------------------------------------------------------
// period expansions and perturbation budgets

// exact expansion of the representative's straight pieces in the edge
// periods: one combination per pinned segment, or a single combination for
// the cylinder holonomy. Evaluating a combination on the surface's edge
// vectors reproduces the stored vector exactly.
template <class S>
std::vector<EdgeCombo> segment_expansions(const Surface<S>& s, const Geodesic<S>& g) {
  std::vector<EdgeCombo> out;
  if (g.kind == Geodesic<S>::Kind::cylinder) {
    auto maps = develop_chain_combo(s, g.word);
    out.push_back(maps.back().u);  // eta is +1 for a cylinder word
    return out;
  }
  size_t m = g.pins.size();
  out.reserve(m);
  for (size_t j = 0; j < m; ++j) {
    ComboDev a{1, EdgeCombo(size_t(s.E()), 0)};
    for (SlotRef d : g.intervals[j]) a = cross_door_combo(s, a, d);
    EdgeCombo q = combo_apply(a, corner_combo(s, g.pins[(j + 1) % m].c_in));
    EdgeCombo p = corner_combo(s, g.pins[j].c_out);
    for (size_t e = 0; e < q.size(); ++e) q[e] -= p[e];
    out.push_back(std::move(q));
  }
  return out;
}

// geodesic lengths of a list of classes, in input order
template <class S>
std::vector<double> spectrum(const Surface<S>& s, const std::vector<std::vector<SlotRef>>& words) {
  std::vector<double> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(tighten(s, w).length);
  return out;
}

// Certified perturbation budget for a tightened representative.
//
// radius is a sup-norm ball in chart coordinates: whenever every free period
// moves by less than radius, the perturbed surface is still valid and the
// same crossing word tightens to a representative with the same pins,
// intervals, and gate crossings. The budget chains first-order Lipschitz
// bounds (each slack divided by an explicit rate, with doubled margins for
// curvature of the bounds), so it is conservative but sound. radius is 0
// exactly when some junction sector sits at pi, a segment grazes its
// corridor, or a cylinder corridor has zero width.
struct StabilityRadius {
  double radius = 0;        // sup-norm budget on free periods; 0 on a wall
  double angle_slack = 0;   // min junction sector slack in radians (pinned)
  double length_slack = 0;  // min segment length, or corridor width (cylinder)
  std::string binding;      // constraint that set the radius
};

namespace detail {

inline double combo_weight(const std::vector<double>& kappa, const EdgeCombo& n) {
  double w = 0;
  for (size_t e = 0; e < n.size(); ++e)
    if (n[e] != 0) w += std::abs(n[e]) * kappa[e];
  return w;
}

}  // namespace detail

template <class S>
StabilityRadius stability_radius(const Surface<S>& s, const PeriodChart<S>& ch,
                                 const Geodesic<S>& g) {
  using Angle = typename NumTraits<S>::Angle;
  const double inf = std::numeric_limits<double>::infinity();

  // movement rate of each edge period under a unit sup-norm chart step
  std::vector<double> kappa(size_t(s.E()), 0.0);
  for (int e = 0; e < s.E(); ++e)
    for (int j = 0; j < ch.dim(); ++j) kappa[e] += std::abs(to_double(ch.expand[e][j]));

  StabilityRadius out;
  out.angle_slack = inf;
  out.length_slack = inf;
  double budget = inf;
  std::string binding = "unconstrained";
  bool wall = false;
  auto consider = [&](double cand, const char* what) {
    if (!wall && cand < budget) {
      budget = cand;
      binding = what;
    }
  };
  auto hit_wall = [&](const char* what) {
    if (!wall) {
      wall = true;
      binding = what;
    }
  };

  // the perturbed surface must stay valid: triangles keep their orientation
  for (int t = 0; t < s.F(); ++t) {
    DVec v0 = approx(s.tris[t].v[0]), v1 = approx(s.tris[t].v[1]);
    double area2 = cross(v0, v1);
    double rate = kappa[s.edge_of({t, 0})] * norm(v1) + kappa[s.edge_of({t, 1})] * norm(v0);
    if (rate > 0) consider(area2 / (4 * rate), "triangle orientation");
  }
  // keep every first-order bound honest: no constituent vector may move by
  // more than a quarter of its length
  for (int e = 0; e < s.E(); ++e)
    if (kappa[e] > 0) consider(norm(approx(s.edge_vector(e))) / (4 * kappa[e]), "edge travel");

  auto expans = segment_expansions(s, g);
  std::vector<double> segw(expans.size());
  for (size_t j = 0; j < expans.size(); ++j) segw[j] = detail::combo_weight(kappa, expans[j]);

  if (g.kind == Geodesic<S>::Kind::cylinder) {
    DVec u = approx(g.core);
    double ulen = norm(u);
    if (segw[0] > 0) consider(ulen / (4 * segw[0]), "holonomy travel");
    auto maps = develop_chain(s, g.word);
    auto cmaps = develop_chain_combo(s, g.word);
    double lo = inf, hi = -inf, rate = 0;
    for (size_t k = 0; k < g.word.size(); ++k) {
      auto [r, l] = dev_gate(s, maps[k], g.word[k]);
      EdgeCombo rc = combo_apply(cmaps[k], corner_combo(s, g.word[k]));
      EdgeCombo lc = combo_apply(cmaps[k], corner_combo(s, SlotRef{g.word[k].t, next3(g.word[k].i)}));
      lo = std::min(lo, cross(u, approx(l)));
      hi = std::max(hi, cross(u, approx(r)));
      rate = std::max(rate, segw[0] * norm(approx(l)) + ulen * detail::combo_weight(kappa, lc));
      rate = std::max(rate, segw[0] * norm(approx(r)) + ulen * detail::combo_weight(kappa, rc));
    }
    double gap = lo - hi;
    out.length_slack = gap / ulen;  // corridor width
    if (gap <= 0)
      hit_wall("closed corridor");
    else if (rate > 0)
      consider(gap / (4 * rate), "corridor width");
  } else {
    size_t m = g.pins.size();
    std::vector<double> seglen(m);
    std::vector<int> etas(m, 1);
    for (size_t j = 0; j < m; ++j) {
      seglen[j] = norm(approx(g.segments[j]));
      out.length_slack = std::min(out.length_slack, seglen[j]);
      if (segw[j] > 0) consider(seglen[j] / (4 * segw[j]), "segment travel");
    }

    // every interior gate must keep clearance from the straight segment
    for (size_t j = 0; j < m; ++j) {
      const auto& doors = g.intervals[j];
      if (doors.empty()) continue;
      auto maps = develop_chain(s, doors);
      etas[j] = maps.back().eta;
      auto cmaps = develop_chain_combo(s, doors);
      Vec2<S> p_ex = chart_corner(s, g.pins[j].c_out);
      Vec2<S> q_ex = p_ex + g.segments[j];
      double wp = detail::combo_weight(kappa, corner_combo(s, g.pins[j].c_out));
      DVec p = approx(p_ex), v = approx(g.segments[j]);
      auto clearance = [&](const Vec2<S>& e_ex, const EdgeCombo& ec, int sgn) {
        if (e_ex == p_ex || e_ex == q_ex) return;  // the pins themselves
        DVec d = approx(e_ex) - p;
        double margin = sgn * cross(v, d) / seglen[j];
        if (margin <= 0) {
          hit_wall("corridor contact");
          return;
        }
        double we = detail::combo_weight(kappa, ec);
        double rate = segw[j] * (norm(d) + margin) / seglen[j] + we + wp;
        if (rate > 0) consider(margin / (4 * rate), "corridor clearance");
      };
      for (size_t k = 0; k < doors.size(); ++k) {
        auto [r, l] = dev_gate(s, maps[k], doors[k]);
        clearance(l, combo_apply(cmaps[k], corner_combo(s, SlotRef{doors[k].t, next3(doors[k].i)})), +1);
        clearance(r, combo_apply(cmaps[k], corner_combo(s, doors[k])), -1);
      }
    }

    // junction sectors must stay strictly beyond pi on the wrapped side and,
    // at unmarked vertices, on the opposite side as well
    for (size_t j = 0; j < m; ++j) {
      size_t prev = (j + m - 1) % m;
      Vec2<S> in_dir = etas[prev] == 1 ? g.segments[prev] : -g.segments[prev];
      Angle alpha = detail::junction_press_angle(s, g.pins[j], -in_dir, g.segments[j]);
      const VertexClass& vc = s.classes[s.class_of(g.pins[j].c_in)];
      double a = alpha.to_radians();
      double slack = a - M_PI;
      bool exact_wall = alpha.cmp_pi(1) == 0;
      if (!vc.marked) {
        slack = std::min(slack, double(vc.cone - 1) * M_PI - a);
        exact_wall = exact_wall || alpha.cmp_pi(vc.cone - 1) == 0;
      }
      out.angle_slack = std::min(out.angle_slack, slack);
      if (exact_wall || slack <= 0) {
        hit_wall("junction sector at pi");
        continue;
      }
      // angular movement rate: the two boundary rays are segments, the fan
      // wedges are bounded by triangle sides; each ray of each wedge moves
      // its angles at most twice its relative travel
      double rate = 2 * (segw[prev] / seglen[prev] + segw[j] / seglen[j]);
      for (SlotRef c : detail::junction_corners(s, g.pins[j])) {
        for (SlotRef sd : {SlotRef{c.t, c.i}, SlotRef{c.t, prev3(c.i)}}) {
          double len = norm(approx(s.side(sd)));
          rate += 2 * kappa[s.edge_of(sd)] / len;
        }
      }
      consider(slack / (4 * rate), "junction angle");
    }
  }

  out.binding = binding;
  if (wall || !std::isfinite(budget)) {
    out.radius = 0;
    if (!wall && !std::isfinite(budget)) out.binding = "no free periods";
    return out;
  }
  out.radius = budget / 2;
  return out;
}

template <class S>
StabilityRadius stability_radius(const Surface<S>& s, const Geodesic<S>& g) {
  return stability_radius(s, period_chart(s), g);
}

}  // namespace semiflat
