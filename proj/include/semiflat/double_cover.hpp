#pragma once
// Orientation double cover of the holonomy character.
//
// A surface with holonomy sign -1 admits a connected degree-2 cover on which
// all gluings become translations. Each triangle lifts to two copies, one
// carrying the original vectors and one their negatives; sign +1 gluings
// connect equal levels, sign -1 gluings swap them, and every cover gluing
// has sign +1. The deck involution swaps the two copies of each triangle;
// transported period assignments split the cover's chart into its +1 and -1
// eigenspaces, and the base surface's own periods land in the -1 part.

#include <vector>

#include "semiflat/errors.hpp"
#include "semiflat/periods.hpp"
#include "semiflat/surface.hpp"

namespace semiflat {

template <class S>
struct DoubleCover {
  Surface<S> cover;

  // cover triangle 2t+l is copy l of base triangle t
  static SlotRef lift_slot(SlotRef base, int level) {
    return {2 * base.t + level, base.i};
  }
  static int base_tri(int cover_tri) { return cover_tri / 2; }
  static int level(int cover_tri) { return cover_tri % 2; }
  // deck involution on cover slots: swap the copy bit
  static SlotRef invol_slot(SlotRef cs) { return {cs.t ^ 1, cs.i}; }
};

template <class S>
DoubleCover<S> double_cover(const Surface<S>& s) {
  if (s.eps != -1)
    fail(errc::trivial_holonomy_input,
         "holonomy is already trivial; the double cover would be disconnected");
  SurfaceBuilder<S> b;
  for (int t = 0; t < s.F(); ++t) {
    const auto& v = s.tris[t].v;
    b.add_triangle(v[0], v[1], v[2]);
    b.add_triangle(-v[0], -v[1], -v[2]);
  }
  for (const Edge& e : s.edges) {
    if (e.s == 1) {
      b.glue(DoubleCover<S>::lift_slot(e.a, 0), DoubleCover<S>::lift_slot(e.b, 0), 1);
      b.glue(DoubleCover<S>::lift_slot(e.a, 1), DoubleCover<S>::lift_slot(e.b, 1), 1);
    } else {
      b.glue(DoubleCover<S>::lift_slot(e.a, 0), DoubleCover<S>::lift_slot(e.b, 1), 1);
      b.glue(DoubleCover<S>::lift_slot(e.a, 1), DoubleCover<S>::lift_slot(e.b, 0), 1);
    }
  }
  for (const auto& vc : s.classes)
    if (vc.marked)
      for (int l = 0; l < 2; ++l) b.mark(DoubleCover<S>::lift_slot(vc.corners[0], l));
  DoubleCover<S> dc{build_surface(b)};
  if (dc.cover.eps != 1)
    throw std::logic_error("double cover did not trivialize the holonomy");
  return dc;
}

// Action of the deck involution on the cover's chart coordinates: transport
// a period assignment Z to (T Z)(e) = c * Z(e'), where e' is the edge image
// of e's designated slot and c that image slot's coefficient. The matrix is
// an involution, and the cover's own periods (the lifted base structure)
// form a -1 eigenvector.
template <class S>
std::vector<std::vector<S>> involution_chart_action(const DoubleCover<S>& dc,
                                                    const PeriodChart<S>& ch) {
  const auto& cv = dc.cover;
  const int D = ch.dim();
  std::vector<std::vector<S>> A(D, std::vector<S>(D, S{}));
  for (int idx = 0; idx < D; ++idx) {
    SlotRef ia = DoubleCover<S>::invol_slot(cv.edges[ch.free_edges[idx]].a);
    int ep = cv.edge_of(ia);
    S c = S(cv.slot_coeff(ia));
    for (int j = 0; j < D; ++j) A[idx][j] = c * ch.expand[ep][j];
  }
  return A;
}

template <class S>
int matrix_rank(std::vector<std::vector<S>> m) {
  if (m.empty()) return 0;
  const int R = int(m.size()), C = int(m[0].size());
  int rank = 0;
  for (int c = 0; c < C && rank < R; ++c) {
    int piv = -1;
    for (int r = rank; r < R; ++r)
      if (detail::pivot_usable(m[r][c])) {
        piv = r;
        break;
      }
    if (piv < 0) continue;
    std::swap(m[rank], m[piv]);
    S inv = m[rank][c];
    for (int cc = c; cc < C; ++cc) m[rank][cc] /= inv;
    for (int r = 0; r < R; ++r) {
      if (r == rank || sign_of(m[r][c]) == 0) continue;
      S f = m[r][c];
      for (int cc = c; cc < C; ++cc) m[r][cc] -= f * m[rank][cc];
    }
    ++rank;
  }
  return rank;
}

template <class S>
struct CoverEigenSplit {
  int dim_plus = 0;
  int dim_minus = 0;
};

template <class S>
CoverEigenSplit<S> cover_eigen_split(const DoubleCover<S>& dc, const PeriodChart<S>& ch) {
  auto A = involution_chart_action(dc, ch);
  const int D = ch.dim();
  // audit: the transport is an involution
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) {
      S v{};
      for (int k = 0; k < D; ++k) v += A[i][k] * A[k][j];
      if (!(v == S(i == j ? 1 : 0)))
        throw std::logic_error("deck transport is not an involution");
    }
  // audit: the lifted base periods are a -1 eigenvector
  auto z0 = free_periods(dc.cover, ch);
  for (int i = 0; i < D; ++i) {
    Vec2<S> v{};
    for (int j = 0; j < D; ++j) v += z0[j] * A[i][j];
    if (!detail::vectors_match(v, -z0[i]))
      throw std::logic_error("base periods are not a -1 eigenvector of the deck transport");
  }
  auto plus = A, minus = A;
  for (int i = 0; i < D; ++i) {
    plus[i][i] -= S(1);   // kernel of A - I  = +1 eigenspace
    minus[i][i] += S(1);  // kernel of A + I  = -1 eigenspace
  }
  CoverEigenSplit<S> out;
  out.dim_plus = D - matrix_rank(plus);
  out.dim_minus = D - matrix_rank(minus);
  return out;
}

}  // namespace semiflat
