#pragma once
// Period coordinates for the deformation space of a surface.
//
// The edge vectors satisfy one closure relation per triangle: the signed sum
// of its three slots' canonical edge vectors vanishes. Eliminating these
// relations leaves a set of free edges whose (complex) periods parametrize
// all nearby surfaces with the same combinatorics. The expected rank is F-1
// when the holonomy is trivial (the relation rows carry exactly one linear
// dependence, given by the gauge signs) and F otherwise, so the chart has
// complex dimension 2g+k-1 or 2g+k-2 for genus g and k vertex classes.

#include <vector>

#include "semiflat/errors.hpp"
#include "semiflat/surface.hpp"

namespace semiflat {

// one row per triangle over the canonical edges; entries are -2..2
template <class S>
std::vector<std::vector<long>> relation_matrix(const Surface<S>& s) {
  std::vector<std::vector<long>> rows(s.F(), std::vector<long>(s.E(), 0));
  for (int t = 0; t < s.F(); ++t)
    for (int i = 0; i < 3; ++i)
      rows[t][s.edge_of({t, i})] += s.slot_coeff({t, i});
  return rows;
}

namespace detail {

template <class S>
bool pivot_usable(const S& v) {
  return sign_of(v) != 0;
}
inline bool pivot_usable(double v) { return std::fabs(v) > 1e-9; }

}  // namespace detail

template <class S>
struct PeriodChart {
  std::vector<int> free_edges;          // chart coordinates, in edge order
  std::vector<std::vector<S>> expand;   // E x dim: edge period in chart terms
  int rank = 0;
  int dim() const { return int(free_edges.size()); }
};

// deterministic echelon reduction: rows in triangle order, first usable
// column as pivot, exact arithmetic for rational scalars
template <class S>
PeriodChart<S> period_chart(const Surface<S>& s) {
  const int E = s.E(), F = s.F();
  auto irows = relation_matrix(s);
  std::vector<std::vector<S>> m(F, std::vector<S>(E));
  for (int r = 0; r < F; ++r)
    for (int c = 0; c < E; ++c) m[r][c] = S(irows[r][c]);

  std::vector<int> pivot_col;
  std::vector<char> is_pivot(E, 0);
  for (int r = 0; r < F; ++r) {
    for (size_t p = 0; p < pivot_col.size(); ++p) {
      const S& f = m[r][pivot_col[p]];
      if (sign_of(f) == 0) continue;
      S factor = f;
      for (int c = 0; c < E; ++c) m[r][c] -= factor * m[p][c];
    }
    int pc = -1;
    for (int c = 0; c < E; ++c)
      if (detail::pivot_usable(m[r][c])) {
        pc = c;
        break;
      }
    if (pc < 0) continue;  // dependent row
    S inv = m[r][pc];
    for (int c = 0; c < E; ++c) m[r][c] /= inv;
    int dst = int(pivot_col.size());
    if (dst != r) m[dst] = std::move(m[r]);
    pivot_col.push_back(pc);
    is_pivot[pc] = 1;
  }

  PeriodChart<S> ch;
  ch.rank = int(pivot_col.size());
  int expected = F - (s.eps == 1 ? 1 : 0);
  if (ch.rank != expected)
    fail(errc::rank_defect, "closure relations have rank " + std::to_string(ch.rank) +
                                ", expected " + std::to_string(expected));

  // back substitution to reduced echelon form
  for (int p = ch.rank - 1; p >= 0; --p) {
    for (int q = 0; q < p; ++q) {
      const S& f = m[q][pivot_col[p]];
      if (sign_of(f) == 0) continue;
      S factor = f;
      for (int c = 0; c < E; ++c) m[q][c] -= factor * m[p][c];
    }
  }

  for (int c = 0; c < E; ++c)
    if (!is_pivot[c]) ch.free_edges.push_back(c);
  const int D = ch.dim();
  ch.expand.assign(E, std::vector<S>(D, S{}));
  for (int j = 0; j < D; ++j) ch.expand[ch.free_edges[j]][j] = S(1);
  for (int p = 0; p < ch.rank; ++p)
    for (int j = 0; j < D; ++j) ch.expand[pivot_col[p]][j] = -m[p][ch.free_edges[j]];
  return ch;
}

template <class S>
std::vector<Vec2<S>> free_periods(const Surface<S>& s, const PeriodChart<S>& ch) {
  std::vector<Vec2<S>> z;
  z.reserve(ch.dim());
  for (int e : ch.free_edges) z.push_back(s.edge_vector(e));
  return z;
}

// expand chart coordinates to the full edge-period vector
template <class S>
std::vector<Vec2<S>> all_periods(const PeriodChart<S>& ch, const std::vector<Vec2<S>>& z) {
  std::vector<Vec2<S>> out(ch.expand.size());
  for (size_t e = 0; e < ch.expand.size(); ++e) {
    Vec2<S> v{};
    for (int j = 0; j < ch.dim(); ++j) v += z[j] * ch.expand[e][j];
    out[e] = v;
  }
  return out;
}

// rebuild the surface with new chart coordinates; combinatorics, gluing
// signs, and marks are kept, and the usual validation runs on the result
template <class S>
Surface<S> with_free_periods(const Surface<S>& s, const PeriodChart<S>& ch,
                             const std::vector<Vec2<S>>& z) {
  if (int(z.size()) != ch.dim())
    fail(errc::degenerate_input, "expected " + std::to_string(ch.dim()) +
                                     " chart coordinates, got " + std::to_string(z.size()));
  auto zeta = all_periods(ch, z);
  SurfaceBuilder<S> b = to_builder(s);
  for (int t = 0; t < s.F(); ++t)
    for (int i = 0; i < 3; ++i)
      b.tris[t].v[i] = zeta[s.edge_of({t, i})] * S(s.slot_coeff({t, i}));
  return build_surface(b);
}

template <class S>
Surface<S> perturbed(const Surface<S>& s, const PeriodChart<S>& ch,
                     const std::vector<Vec2<S>>& delta) {
  auto z = free_periods(s, ch);
  if (delta.size() != z.size())
    fail(errc::degenerate_input, "perturbation size mismatch");
  for (size_t j = 0; j < z.size(); ++j) z[j] += delta[j];
  return with_free_periods(s, ch, z);
}

}  // namespace semiflat
