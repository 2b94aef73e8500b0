#pragma once
// Standard maximal train tracks over a pants decomposition.
//
// A pants decomposition is a cuff-slot pairing: each pants has three cuff
// slots, and every slot is either glued to one other slot (the glued pair is a
// pants curve) or capped by a marked point. The track runs the pants curves
// themselves as chains of branches and places a fixed interior model in every
// pants, one of three cases by marked-point count:
//   0 marks: three branches, one joining each pair of cuffs;
//   1 mark:  a connector between the two cuffs, plus a stem from the second
//            cuff to a wrap branch around the marked point;
//   2 marks: a stem from the lone cuff to a wrap branch.
// Every interior branch reaching a pants curve merges into it turning right;
// the mirror track merges turning left. All switches are trivalent, and the
// complementary regions are trigons plus one marked monogon per marked point,
// which build_tracks verifies by walking the ribbon structure.
//
// Weights on branches satisfy one linear condition per switch (the wide side
// carries the sum of the two tangent branches); the solution space has
// dimension 6g+2n-6. Measuring a weight vector against every pants curve plus
// one transversal per pants curve determines it completely, and
// recovery_matrix returns the exact rational inverse, assembled from
// per-pants closed forms and a walk around each collar.
//
// Pants decomposition files:
//   # comment
//   pants 0
//   pants 1
//   cuff 0.0 glue 1.0
//   cuff 0.2 marked
// Slot p.s is cuff s (0..2) of pants p; pants ids are consecutive from zero
// and every gluing is written once.

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "semiflat/errors.hpp"
#include "semiflat/io.hpp"
#include "semiflat/numeric.hpp"

namespace semiflat {

struct PantsDecomposition {
  int npants = 0;
  std::vector<int> partner;               // 3*npants entries; -1 = marked cap
  std::vector<std::array<int, 2>> curve;  // glued pairs, lower slot first
  std::vector<int> slot_curve;            // per slot: curve index, -1 if marked
  int genus = 0;
  int marks = 0;

  int slots() const { return 3 * npants; }
  int curve_count() const { return int(curve.size()); }
  int marks_of(int p) const {
    int m = 0;
    for (int s = 0; s < 3; ++s) m += partner[3 * p + s] == -1;
    return m;
  }
  std::vector<int> cuffs_of(int p) const {  // global slot ids, ascending
    std::vector<int> out;
    for (int s = 0; s < 3; ++s)
      if (partner[3 * p + s] != -1) out.push_back(3 * p + s);
    return out;
  }
};

namespace detail {

inline std::string cuff_str(int slot) {
  return std::to_string(slot / 3) + "." + std::to_string(slot % 3);
}

}  // namespace detail

inline PantsDecomposition build_pants(int npants, std::vector<int> partner) {
  if (npants <= 0 || int(partner.size()) != 3 * npants)
    fail(errc::degenerate_input, "pants count and cuff table disagree");
  PantsDecomposition pd;
  pd.npants = npants;
  pd.partner = std::move(partner);
  pd.slot_curve.assign(pd.slots(), -1);
  for (int s = 0; s < pd.slots(); ++s) {
    int q = pd.partner[s];
    if (q == -1) {
      ++pd.marks;
      continue;
    }
    if (q < 0 || q >= pd.slots())
      fail(errc::unglued_slot,
           "cuff " + detail::cuff_str(s) + " is neither glued nor marked");
    if (q == s)
      fail(errc::gluing_mismatch, "cuff " + detail::cuff_str(s) + " glued to itself");
    if (pd.partner[q] != s)
      fail(errc::gluing_mismatch, "cuff gluing is not mutual at " + detail::cuff_str(s));
    if (s < q) {
      pd.slot_curve[s] = pd.slot_curve[q] = int(pd.curve.size());
      pd.curve.push_back({s, q});
    }
  }
  std::vector<char> vis(pd.npants, 0);
  std::vector<int> stack{0};
  vis[0] = 1;
  while (!stack.empty()) {
    int p = stack.back();
    stack.pop_back();
    for (int s = 0; s < 3; ++s) {
      int q = pd.partner[3 * p + s];
      if (q < 0 || vis[q / 3]) continue;
      vis[q / 3] = 1;
      stack.push_back(q / 3);
    }
  }
  for (int p = 0; p < pd.npants; ++p)
    if (!vis[p]) fail(errc::disconnected, "decomposition splits into separate pieces");
  pd.genus = (pd.npants - pd.marks + 2) / 2;
  return pd;
}

inline PantsDecomposition parse_pants(std::istream& in) {
  std::vector<int> partner;
  int npants = 0;
  int lineno = 0;
  std::string line;
  auto ctx = [&]() { return " (line " + std::to_string(lineno) + ")"; };
  auto slot_of = [&](const std::string& tok) {
    SlotRef r = detail::parse_slot(tok);
    if (r.t < 0 || r.t >= npants)
      fail(errc::parse_error, "unknown pants in '" + tok + "'" + ctx());
    if (r.i < 0 || r.i > 2)
      fail(errc::parse_error, "cuff slot must be 0..2 in '" + tok + "'" + ctx());
    return 3 * r.t + r.i;
  };
  auto set = [&](int slot, int to) {
    if (partner[slot] != -2)
      fail(errc::gluing_mismatch,
           "cuff " + detail::cuff_str(slot) + " specified twice" + ctx());
    partner[slot] = to;
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(detail::strip_comment(line));
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "pants") {
      int id;
      if (!(ls >> id)) fail(errc::parse_error, "pants needs an id" + ctx());
      if (id != npants)
        fail(errc::parse_error, "pants ids must be consecutive from 0" + ctx());
      ++npants;
      partner.resize(3 * npants, -2);
    } else if (kw == "cuff") {
      std::string ref, verb;
      if (!(ls >> ref >> verb)) fail(errc::parse_error, "cuff needs a slot and a verb" + ctx());
      int a = slot_of(ref);
      if (verb == "glue") {
        std::string ref2;
        if (!(ls >> ref2)) fail(errc::parse_error, "glue needs a target slot" + ctx());
        int b = slot_of(ref2);
        if (a == b)
          fail(errc::gluing_mismatch, "cuff " + detail::cuff_str(a) + " glued to itself" + ctx());
        set(a, b);
        set(b, a);
      } else if (verb == "marked") {
        set(a, -1);
      } else {
        fail(errc::parse_error, "cuff verb must be glue or marked" + ctx());
      }
    } else {
      fail(errc::parse_error, "unknown keyword '" + kw + "'" + ctx());
    }
  }
  return build_pants(npants, std::move(partner));
}

inline PantsDecomposition load_pants(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open '" + path + "'");
  try {
    return parse_pants(in);
  } catch (const sf_error& e) {
    throw sf_error(e.code(), std::string(e.what()) + " [" + path + "]");
  }
}

inline std::string serialize_pants(const PantsDecomposition& pd) {
  std::ostringstream os;
  for (int p = 0; p < pd.npants; ++p) os << "pants " << p << "\n";
  for (const auto& c : pd.curve)
    os << "cuff " << detail::cuff_str(c[0]) << " glue " << detail::cuff_str(c[1]) << "\n";
  for (int s = 0; s < pd.slots(); ++s)
    if (pd.partner[s] == -1) os << "cuff " << detail::cuff_str(s) << " marked\n";
  return os.str();
}

using WeightVector = std::vector<Rational>;

struct TrainTrack {
  int turn = 1;  // +1: approaching branches merge to the right; -1: to the left
  int genus = 0;
  int marks = 0;
  int nbranches = 0;
  std::vector<std::string> name;  // one stable id per branch

  // A switch joins the wide side to two branches tangent on the narrow side;
  // weights obey w[big] = w[small] + w[end]. Entries are half-edge ids
  // (2*branch + side), so a branch can meet the same switch with both ends.
  struct Switch {
    int big, small, end;
  };
  std::vector<Switch> switches;

  // Per pants curve: the arcs the curve is cut into, with the interior branch
  // attaching between arc[k] and arc[k+1] and the side it comes from
  // (+1 = the lower glued slot's pants, -1 = the partner's).
  struct Collar {
    std::vector<int> arc;
    std::vector<int> end;  // branch ids
    std::vector<int> side;
  };
  std::vector<Collar> collars;

  // Interior branches per pants, by role:
  //   0 marks: {joins cuffs 0-1, joins 1-2, joins 2-0}
  //   1 mark:  {connector, stem, wrap}
  //   2 marks: {stem, wrap, unused}
  struct PantsModel {
    int marks = 0;
    std::array<int, 3> b{{-1, -1, -1}};
  };
  std::vector<PantsModel> pants;

  std::vector<int> slot_curve;  // copied from the decomposition
  std::vector<std::array<int, 2>> curve_slots;

  static int branch_of(int half) { return half >> 1; }
};

// Complementary regions, read off the ribbon structure. Every region of a
// well-formed track is a disk whose boundary alternates branch sides and
// switch corners; the corner between the two tangent branches is a cusp.
struct RegionCensus {
  std::vector<int> cusps;  // per region
  int monogons = 0;
  int trigons = 0;
  int faces() const { return int(cusps.size()); }
};

inline RegionCensus region_census(const TrainTrack& t) {
  const int H = 2 * t.nbranches;
  const int V = int(t.switches.size());
  std::vector<std::array<int, 3>> cyc(V);
  std::vector<int> at(H, -1), pos(H, -1);
  for (int s = 0; s < V; ++s) {
    const auto& sw = t.switches[s];
    cyc[s] = t.turn > 0 ? std::array<int, 3>{{sw.big, sw.small, sw.end}}
                        : std::array<int, 3>{{sw.big, sw.end, sw.small}};
    for (int k = 0; k < 3; ++k) {
      int h = cyc[s][k];
      if (h < 0 || h >= H || at[h] >= 0)
        fail(errc::construction_failed, "switch tables attach a half edge twice");
      at[h] = s;
      pos[h] = k;
    }
  }
  for (int h = 0; h < H; ++h)
    if (at[h] < 0) fail(errc::construction_failed, "switch tables leave a half edge loose");

  RegionCensus rc;
  std::vector<char> seen(H, 0);
  for (int h0 = 0; h0 < H; ++h0) {
    if (seen[h0]) continue;
    int cusps = 0, h = h0;
    do {
      seen[h] = 1;
      int g = h ^ 1;  // cross the branch, then turn at the far switch
      int s = at[g], k = pos[g];
      if (k == 1) ++cusps;  // the corner after cyc[1] lies between the tangent pair
      h = cyc[s][(k + 1) % 3];
    } while (h != h0);
    rc.cusps.push_back(cusps);
    if (cusps == 1) ++rc.monogons;
    if (cusps == 3) ++rc.trigons;
  }
  return rc;
}

namespace detail {

inline TrainTrack assemble_track(const PantsDecomposition& pd, int turn) {
  TrainTrack t;
  t.turn = turn;
  t.genus = pd.genus;
  t.marks = pd.marks;
  t.slot_curve = pd.slot_curve;
  t.curve_slots = pd.curve;
  auto fresh = [&](std::string nm) {
    t.name.push_back(std::move(nm));
    return t.nbranches++;
  };

  // interior models; ends[slot] lists the attaching half edges along the cuff
  std::vector<std::vector<int>> ends(pd.slots());
  t.pants.resize(pd.npants);
  for (int p = 0; p < pd.npants; ++p) {
    auto& pm = t.pants[p];
    pm.marks = pd.marks_of(p);
    std::string pref = "p" + std::to_string(p) + ".";
    if (pm.marks == 0) {
      for (int u = 0; u < 3; ++u)
        pm.b[u] = fresh(pref + "j" + std::to_string(u) + std::to_string((u + 1) % 3));
      for (int u = 0; u < 3; ++u)
        ends[3 * p + u] = {2 * pm.b[(u + 2) % 3] + 1, 2 * pm.b[u]};
    } else if (pm.marks == 1) {
      auto cuffs = pd.cuffs_of(p);
      pm.b[0] = fresh(pref + "conn");
      pm.b[1] = fresh(pref + "stem");
      pm.b[2] = fresh(pref + "wrap");
      ends[cuffs[0]] = {2 * pm.b[0]};
      ends[cuffs[1]] = {2 * pm.b[0] + 1, 2 * pm.b[1]};
      t.switches.push_back({2 * pm.b[1] + 1, 2 * pm.b[2], 2 * pm.b[2] + 1});
    } else if (pm.marks == 2) {
      auto cuffs = pd.cuffs_of(p);
      pm.b[0] = fresh(pref + "stem");
      pm.b[1] = fresh(pref + "wrap");
      ends[cuffs[0]] = {2 * pm.b[0]};
      t.switches.push_back({2 * pm.b[0] + 1, 2 * pm.b[1], 2 * pm.b[1] + 1});
    } else {
      fail(errc::construction_failed,
           "pants " + std::to_string(p) + " has no cuff to carry the track");
    }
  }

  // collars: cut each pants curve at its attachment points; the two sides
  // alternate around the circle, the partner side running in reverse
  for (int j = 0; j < pd.curve_count(); ++j) {
    int sa = pd.curve[j][0], sb = pd.curve[j][1];
    const auto& ea = ends[sa];
    std::vector<int> eb(ends[sb].rbegin(), ends[sb].rend());
    std::vector<std::pair<int, int>> seq;  // (half edge, side)
    for (size_t ia = 0, ib = 0; ia < ea.size() || ib < eb.size();) {
      if (ia < ea.size()) seq.push_back({ea[ia++], +1});
      if (ib < eb.size()) seq.push_back({eb[ib++], -1});
    }
    const int m = int(seq.size());
    TrainTrack::Collar col;
    for (int k = 0; k < m; ++k)
      col.arc.push_back(fresh("c" + std::to_string(j) + ".a" + std::to_string(k)));
    for (int k = 0; k < m; ++k) {
      int below = 2 * col.arc[k] + 1;        // top half of the arc below the switch
      int above = 2 * col.arc[(k + 1) % m];  // bottom half of the arc above
      auto [half, side] = seq[k];
      col.end.push_back(TrainTrack::branch_of(half));
      col.side.push_back(side);
      bool grows = (side > 0) == (turn > 0);  // which way the merge runs along the curve
      t.switches.push_back(grows ? TrainTrack::Switch{above, below, half}
                                 : TrainTrack::Switch{below, above, half});
    }
    t.collars.push_back(std::move(col));
  }
  return t;
}

inline void audit_regions(const TrainTrack& t) {
  RegionCensus rc = region_census(t);
  int want = 4 * t.genus + 2 * t.marks - 4;
  if (rc.faces() != want || rc.monogons != t.marks || rc.monogons + rc.trigons != rc.faces())
    fail(errc::construction_failed,
         "complementary regions are off: " + std::to_string(rc.faces()) + " regions, " +
             std::to_string(rc.monogons) + " monogons, " + std::to_string(rc.trigons) +
             " trigons for genus " + std::to_string(t.genus) + " with " +
             std::to_string(t.marks) + " marks");
}

}  // namespace detail

inline std::pair<TrainTrack, TrainTrack> build_tracks(const PantsDecomposition& pd) {
  if (pd.curve_count() < 2)
    fail(errc::complexity_too_low, "need at least two pants curves, got " +
                                       std::to_string(pd.curve_count()));
  std::pair<TrainTrack, TrainTrack> out{detail::assemble_track(pd, +1),
                                        detail::assemble_track(pd, -1)};
  detail::audit_regions(out.first);
  detail::audit_regions(out.second);
  return out;
}

template <class S>
bool satisfies_switches(const TrainTrack& t, const std::vector<S>& w) {
  for (const auto& sw : t.switches) {
    S lhs = w[TrainTrack::branch_of(sw.big)];
    S rhs = w[TrainTrack::branch_of(sw.small)] + w[TrainTrack::branch_of(sw.end)];
    if (!(lhs == rhs)) return false;
  }
  return true;
}

// exact kernel of the switch conditions; the reduction mirrors period_chart
inline std::vector<WeightVector> weight_space_basis(const TrainTrack& t) {
  const int E = t.nbranches, V = int(t.switches.size());
  std::vector<std::vector<Rational>> m(V, std::vector<Rational>(E));
  for (int r = 0; r < V; ++r) {
    m[r][TrainTrack::branch_of(t.switches[r].big)] += 1;
    m[r][TrainTrack::branch_of(t.switches[r].small)] -= 1;
    m[r][TrainTrack::branch_of(t.switches[r].end)] -= 1;
  }

  std::vector<int> pivot_col;
  std::vector<char> is_pivot(E, 0);
  for (int r = 0; r < V; ++r) {
    for (size_t p = 0; p < pivot_col.size(); ++p) {
      const Rational& f = m[r][pivot_col[p]];
      if (sign_of(f) == 0) continue;
      Rational factor = f;
      for (int c = 0; c < E; ++c) m[r][c] -= factor * m[p][c];
    }
    int pc = -1;
    for (int c = 0; c < E; ++c)
      if (sign_of(m[r][c]) != 0) {
        pc = c;
        break;
      }
    if (pc < 0) continue;  // dependent row
    Rational inv = m[r][pc];
    for (int c = 0; c < E; ++c) m[r][c] /= inv;
    int dst = int(pivot_col.size());
    if (dst != r) m[dst] = std::move(m[r]);
    pivot_col.push_back(pc);
    is_pivot[pc] = 1;
  }
  const int rank = int(pivot_col.size());
  for (int p = rank - 1; p >= 0; --p) {
    for (int q = 0; q < p; ++q) {
      const Rational& f = m[q][pivot_col[p]];
      if (sign_of(f) == 0) continue;
      Rational factor = f;
      for (int c = 0; c < E; ++c) m[q][c] -= factor * m[p][c];
    }
  }

  std::vector<WeightVector> basis;
  for (int c = 0; c < E; ++c) {
    if (is_pivot[c]) continue;
    WeightVector v(E);
    v[c] = 1;
    for (int p = 0; p < rank; ++p) v[pivot_col[p]] = -m[p][c];
    basis.push_back(std::move(v));
  }
  return basis;
}

// A strictly positive solution of the switch conditions. Interior weights are
// chosen so that the attaching weights on the two sides of every pants curve
// sum to a common per-curve target (raised iteratively until each pants can
// realize its three targets), then the collar arcs are lifted high enough to
// stay positive. Some gluing patterns force a zero branch and admit no such
// weight; those fail rather than return a boundary point.
inline WeightVector strictly_positive_weight(const TrainTrack& t) {
  const int C = int(t.collars.size());
  const int P = int(t.pants.size());
  std::vector<long> x(C, 2);
  bool settled = false;
  for (int round = 0; round < 64 + 16 * P && !settled; ++round) {
    settled = true;
    for (int p = 0; p < P; ++p) {
      const auto& pm = t.pants[p];
      if (pm.marks == 0) {
        std::array<long*, 3> s;
        for (int u = 0; u < 3; ++u) s[u] = &x[t.slot_curve[3 * p + u]];
        for (int u = 0; u < 3; ++u) {
          long a = *s[u], b = *s[(u + 1) % 3], c = *s[(u + 2) % 3];
          if (a >= b + c) {
            *s[(u + 1) % 3] = a - c + 1;
            settled = false;
          }
        }
      } else if (pm.marks == 1) {
        int c1 = -1, c2 = -1;
        for (int u = 0; u < 3; ++u)
          if (t.slot_curve[3 * p + u] >= 0) (c1 < 0 ? c1 : c2) = 3 * p + u;
        int kx = t.slot_curve[c1], ky = t.slot_curve[c2];
        if (kx == ky)
          fail(errc::construction_failed,
               "no strictly positive weight: pants " + std::to_string(p) +
                   " pins its stem to zero");
        if (x[ky] <= x[kx]) {
          x[ky] = x[kx] + 2;
          settled = false;
        }
      }
    }
  }
  if (!settled)
    fail(errc::construction_failed, "no strictly positive weight found for this gluing");

  WeightVector w(t.nbranches);
  for (int p = 0; p < P; ++p) {
    const auto& pm = t.pants[p];
    if (pm.marks == 0) {
      std::array<long, 3> s;
      for (int u = 0; u < 3; ++u) s[u] = x[t.slot_curve[3 * p + u]];
      for (int u = 0; u < 3; ++u)
        w[pm.b[u]] = Rational(s[u] + s[(u + 1) % 3] - s[(u + 2) % 3], 2);
    } else if (pm.marks == 1) {
      int c1 = -1, c2 = -1;
      for (int u = 0; u < 3; ++u)
        if (t.slot_curve[3 * p + u] >= 0) (c1 < 0 ? c1 : c2) = 3 * p + u;
      Rational stem = x[t.slot_curve[c2]] - x[t.slot_curve[c1]];
      w[pm.b[0]] = x[t.slot_curve[c1]];
      w[pm.b[1]] = stem;
      w[pm.b[2]] = stem / 2;
    } else {
      int cuff = -1;
      for (int u = 0; u < 3; ++u)
        if (t.slot_curve[3 * p + u] >= 0) cuff = 3 * p + u;
      Rational stem = x[t.slot_curve[cuff]];
      w[pm.b[0]] = stem;
      w[pm.b[1]] = stem / 2;
    }
  }
  for (int j = 0; j < C; ++j) {
    const auto& col = t.collars[j];
    const int m = int(col.arc.size());
    std::vector<Rational> delta(m + 1);
    for (int k = 0; k < m; ++k)
      delta[k + 1] = delta[k] + Rational(col.side[k] * t.turn) * w[col.end[k]];
    if (sign_of(delta[m]) != 0)
      fail(errc::construction_failed, "collar walk fails to close around curve " +
                                          std::to_string(j));
    Rational lo = 0;
    for (int k = 0; k < m; ++k)
      if (delta[k] < lo) lo = delta[k];
    for (int k = 0; k < m; ++k) w[col.arc[k]] = Rational(1) - lo + delta[k];
  }
  return w;
}

// the measurement system: every pants curve, then one transversal per pants
// curve; rows [0,C) are the curves, rows [C,2C) the transversals
struct SigmaSystem {
  int curves = 0;
  std::vector<std::string> name;
  std::vector<std::vector<std::pair<int, int>>> crossings;  // (branch, multiplicity)
};

namespace detail {

// the interior branch a transversal crosses inside one pants, entering
// through the given cuff slot: always the branch avoiding that cuff, except
// that a two-marked pants is crossed through its stem
inline int interior_pin(const TrainTrack& t, int slot) {
  int p = slot / 3, u = slot % 3;
  const auto& pm = t.pants[p];
  if (pm.marks == 0) return pm.b[(u + 1) % 3];
  if (pm.marks == 1) {
    int c1 = -1;
    for (int s = 0; s < 3; ++s)
      if (t.slot_curve[3 * p + s] >= 0) {
        c1 = 3 * p + s;
        break;
      }
    return slot == c1 ? pm.b[1] : pm.b[2];
  }
  return pm.b[0];
}

struct TransversePlan {
  bool handle = false;  // both sides of the curve lie in one pants
  int far_arc = 1;      // second collar arc crossed (two-pants case)
  int pin_a = -1, pin_b = -1;
  int join = -1;  // handle case: the interior branch joining the glued slots
};

inline TransversePlan transverse_plan(const TrainTrack& t, int j) {
  TransversePlan tp;
  int sa = t.curve_slots[j][0], sb = t.curve_slots[j][1];
  tp.handle = sa / 3 == sb / 3;
  if (tp.handle) {
    const auto& pm = t.pants[sa / 3];
    if (pm.marks == 0) {
      int u = sa % 3, v = sb % 3;
      tp.join = ((u + 1) % 3 == v) ? pm.b[u] : pm.b[v];
    } else {
      tp.join = pm.b[0];
    }
  } else {
    tp.far_arc = int(t.collars[j].arc.size()) >= 3 ? 2 : 1;
    tp.pin_a = interior_pin(t, sa);
    tp.pin_b = interior_pin(t, sb);
  }
  return tp;
}

}  // namespace detail

inline SigmaSystem sigma_system(const PantsDecomposition& pd, const TrainTrack& t) {
  if (pd.curve_count() != int(t.collars.size()) || pd.slot_curve != t.slot_curve)
    fail(errc::combinatorics_mismatch, "track was built from a different decomposition");
  const int C = int(t.collars.size());
  SigmaSystem sg;
  sg.curves = C;
  sg.name.resize(2 * C);
  sg.crossings.resize(2 * C);
  auto add = [&](int row, int branch, int mult) {
    for (auto& e : sg.crossings[row])
      if (e.first == branch) {
        e.second += mult;
        return;
      }
    sg.crossings[row].push_back({branch, mult});
  };
  for (int j = 0; j < C; ++j) {
    sg.name[j] = "P" + std::to_string(j);
    sg.name[C + j] = "T" + std::to_string(j);
    const auto& col = t.collars[j];
    for (size_t k = 0; k < col.end.size(); ++k)
      if (col.side[k] > 0) add(j, col.end[k], 1);
    auto tp = detail::transverse_plan(t, j);
    add(C + j, col.arc[0], 1);
    if (tp.handle) {
      add(C + j, tp.join, 1);
    } else {
      add(C + j, col.arc[tp.far_arc], 1);
      add(C + j, tp.pin_a, 1);
      add(C + j, tp.pin_b, 1);
    }
  }
  return sg;
}

inline Rational intersect(const SigmaSystem& sg, int j, const WeightVector& w) {
  Rational total;
  for (const auto& [b, mult] : sg.crossings[j]) total += Rational(mult) * w[b];
  return total;
}

inline std::vector<Rational> intersect_all(const SigmaSystem& sg, const WeightVector& w) {
  std::vector<Rational> out(sg.crossings.size());
  for (size_t j = 0; j < sg.crossings.size(); ++j) out[j] = intersect(sg, int(j), w);
  return out;
}

using RecoveryMatrix = std::vector<std::vector<Rational>>;  // nbranches x 2C

inline WeightVector apply_recovery(const RecoveryMatrix& a, const std::vector<Rational>& iv) {
  WeightVector w(a.size());
  for (size_t r = 0; r < a.size(); ++r) {
    Rational acc;
    for (size_t c = 0; c < iv.size(); ++c) acc += a[r][c] * iv[c];
    w[r] = acc;
  }
  return w;
}

// The exact inverse of the measurement map on the switch-condition space.
// Interior branches come from per-pants closed forms over the adjacent curve
// measurements; each collar is then solved from its transversal and walked
// around. The result is audited against the crossing data on a full basis.
inline RecoveryMatrix recovery_matrix(const TrainTrack& t, const SigmaSystem& sg) {
  const int C = int(t.collars.size());
  const int M = 2 * C;
  if (sg.curves != C) fail(errc::combinatorics_mismatch, "sigma system size mismatch");
  RecoveryMatrix a(t.nbranches, std::vector<Rational>(M));
  const Rational half(1, 2);

  for (int p = 0; p < int(t.pants.size()); ++p) {
    const auto& pm = t.pants[p];
    if (pm.marks == 0) {
      std::array<int, 3> k;
      for (int u = 0; u < 3; ++u) k[u] = t.slot_curve[3 * p + u];
      int du = -1, dv = -1;
      for (int u = 0; u < 3 && du < 0; ++u)
        for (int v = u + 1; v < 3; ++v)
          if (k[u] == k[v]) {
            du = u;
            dv = v;
            break;
          }
      if (du < 0) {
        // each joint is half the sum of its own two cuffs' measurements
        // minus the opposite one
        for (int u = 0; u < 3; ++u) {
          a[pm.b[u]][k[u]] += half;
          a[pm.b[u]][k[(u + 1) % 3]] += half;
          a[pm.b[u]][k[(u + 2) % 3]] -= half;
        }
      } else {
        // two cuffs glued to each other: the other two joints are forced
        // equal, and the shared joint absorbs the rest
        int dw = 3 - du - dv;
        int shared = ((du + 1) % 3 == dv) ? pm.b[du] : pm.b[dv];
        for (int u = 0; u < 3; ++u) {
          if (pm.b[u] == shared) continue;
          a[pm.b[u]][k[dw]] += half;
        }
        a[shared][k[du]] += 1;
        a[shared][k[dw]] -= half;
      }
    } else if (pm.marks == 1) {
      int c1 = -1, c2 = -1;
      for (int u = 0; u < 3; ++u)
        if (t.slot_curve[3 * p + u] >= 0) (c1 < 0 ? c1 : c2) = 3 * p + u;
      int kx = t.slot_curve[c1], ky = t.slot_curve[c2];
      a[pm.b[0]][kx] += 1;
      if (kx != ky) {
        a[pm.b[1]][ky] += 1;
        a[pm.b[1]][kx] -= 1;
        a[pm.b[2]][ky] += half;
        a[pm.b[2]][kx] -= half;
      }
      // kx == ky pins stem and wrap to zero; their rows stay empty
    } else {
      int cuff = -1;
      for (int u = 0; u < 3; ++u)
        if (t.slot_curve[3 * p + u] >= 0) cuff = 3 * p + u;
      int kx = t.slot_curve[cuff];
      a[pm.b[0]][kx] += 1;
      a[pm.b[1]][kx] += half;
    }
  }

  for (int j = 0; j < C; ++j) {
    const auto& col = t.collars[j];
    const int m = int(col.arc.size());
    std::vector<std::vector<Rational>> delta(m, std::vector<Rational>(M));
    for (int k = 0; k + 1 < m; ++k) {
      delta[k + 1] = delta[k];
      Rational sign(col.side[k] * t.turn);
      for (int c = 0; c < M; ++c) delta[k + 1][c] += sign * a[col.end[k]][c];
    }
    auto tp = detail::transverse_plan(t, j);
    std::vector<Rational> base(M);
    base[C + j] = 1;
    if (tp.handle) {
      for (int c = 0; c < M; ++c) base[c] -= a[tp.join][c];
    } else {
      for (int c = 0; c < M; ++c) {
        base[c] -= delta[tp.far_arc][c] + a[tp.pin_a][c] + a[tp.pin_b][c];
        base[c] *= half;
      }
    }
    for (int k = 0; k < m; ++k)
      for (int c = 0; c < M; ++c) a[col.arc[k]][c] = base[c] + delta[k][c];
  }

  for (const auto& b : weight_space_basis(t)) {
    if (apply_recovery(a, intersect_all(sg, b)) != b)
      fail(errc::singular_system, "crossing data does not invert the weight space");
  }
  return a;
}

// weight vectors and measurement vectors as CSV keyed by stable names
inline std::string weight_csv(const TrainTrack& t, const WeightVector& w) {
  std::ostringstream os;
  os << "branch,weight\n";
  for (int i = 0; i < t.nbranches; ++i)
    os << t.name[i] << ',' << format_scalar(w[i]) << "\n";
  return os.str();
}

inline std::string intersection_csv(const SigmaSystem& sg, const std::vector<Rational>& iv) {
  std::ostringstream os;
  os << "curve,value\n";
  for (size_t j = 0; j < iv.size(); ++j) os << sg.name[j] << ',' << format_scalar(iv[j]) << "\n";
  return os.str();
}

namespace detail {

inline std::vector<Rational> parse_named_csv(std::istream& in, const std::string& header,
                                             const std::vector<std::string>& names) {
  std::vector<Rational> out(names.size());
  std::vector<char> have(names.size(), 0);
  std::string line;
  int lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = strip_comment(line);
    if (body.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto comma = body.find(',');
    if (comma == std::string::npos)
      fail(errc::parse_error, "expected name,value (line " + std::to_string(lineno) + ")");
    std::istringstream ks(body.substr(0, comma)), vs(body.substr(comma + 1));
    std::string key, val;
    ks >> key;
    vs >> val;
    if (!saw_header) {
      if (key + "," + val != header)
        fail(errc::parse_error, "expected header '" + header + "'");
      saw_header = true;
      continue;
    }
    size_t idx = names.size();
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == key) {
        idx = i;
        break;
      }
    if (idx == names.size())
      fail(errc::parse_error, "unknown row '" + key + "' (line " + std::to_string(lineno) + ")");
    if (have[idx])
      fail(errc::parse_error, "row '" + key + "' given twice (line " + std::to_string(lineno) + ")");
    have[idx] = 1;
    try {
      out[idx] = parse_rational(val);
    } catch (const std::invalid_argument& e) {
      fail(errc::parse_error, std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  for (size_t i = 0; i < names.size(); ++i)
    if (!have[i]) fail(errc::parse_error, "missing row '" + names[i] + "'");
  return out;
}

}  // namespace detail

inline WeightVector parse_weight_csv(const TrainTrack& t, std::istream& in) {
  return detail::parse_named_csv(in, "branch,weight", t.name);
}

inline std::vector<Rational> parse_intersection_csv(const SigmaSystem& sg, std::istream& in) {
  return detail::parse_named_csv(in, "curve,value", sg.name);
}

}  // namespace semiflat
