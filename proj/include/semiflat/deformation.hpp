#pragma once
// Length-spectrum analysis in period coordinates.
//
// The length of a geodesic class is a sum of moduli of its segment vectors,
// and each segment vector is a fixed integer combination of edge periods as
// long as the perturbation stays inside the class's stability radius. That
// makes curve lengths piecewise-smooth functions of the free periods, with
// exact analytic gradients. This header provides
//   - directional foliation intersections and the integral identity that
//     recovers a geodesic's length from them,
//   - the spectrum Jacobian of a curve system restricted to the normalized
//     slice (fixed area, rotation quotiented out), with singular values,
//     rank, and null space,
//   - a predictor-corrector walker that follows a null direction while
//     holding the whole spectrum constant.
//
// Intersections are evaluated on the flat geodesic representative. At the
// finitely many directions where that representative is not the
// foliation-minimizer the pointwise value can overshoot, but those
// directions form a measure-zero set, so every integral below is unaffected.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "semiflat/errors.hpp"
#include "semiflat/geodesics.hpp"
#include "semiflat/numeric.hpp"
#include "semiflat/periods.hpp"
#include "semiflat/surface.hpp"

namespace semiflat {

// ---------------------------------------------------------------------------
// foliation intersections

// segment vectors of the representative, with the doubling divisor
template <class S>
std::vector<DVec> segment_vectors(const Geodesic<S>& g) {
  std::vector<DVec> zs;
  if (g.kind == Geodesic<S>::Kind::cylinder) {
    zs.push_back(approx(g.core));
  } else {
    zs.reserve(g.segments.size());
    for (const auto& z : g.segments) zs.push_back(approx(z));
  }
  return zs;
}

// intersection of the class with the measured foliation in direction theta:
// sum over segments of |Re(e^{i theta} z)|, halved when the representative
// is the double of the input word
template <class S>
double foliation_intersection(const Surface<S>&, const Geodesic<S>& g, double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  double total = 0;
  for (const DVec& z : segment_vectors(g)) total += std::abs(c * z.x - s * z.y);
  return total / (g.doubled ? 2.0 : 1.0);
}

struct FoliationSample {
  double theta = 0;
  std::vector<double> values;  // one intersection per sampled class
};

template <class S>
std::vector<FoliationSample> sample_foliation(const Surface<S>& s,
                                              const std::vector<Geodesic<S>>& reps, int count) {
  if (count <= 0) fail(errc::degenerate_input, "sample count must be positive");
  std::vector<FoliationSample> out(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) {
    out[k].theta = M_PI * k / count;
    out[k].values.reserve(reps.size());
    for (const auto& g : reps) out[k].values.push_back(foliation_intersection(s, g, out[k].theta));
  }
  return out;
}

namespace detail {

template <class F>
double simpson_adaptive(F&& f, double a, double b, double fa, double fm, double fb, double whole,
                        double eps, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6 * (fa + 4 * flm + fm);
  double right = (b - m) / 6 * (fm + 4 * frm + fb);
  double both = left + right;
  if (depth <= 0 || std::abs(both - whole) <= 15 * eps) return both + (both - whole) / 15;
  return simpson_adaptive(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) +
         simpson_adaptive(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

// the integrand has kinks, so start from a fixed split before adapting
template <class F>
double integrate_adaptive(F&& f, double a, double b, double eps) {
  const int pieces = 8;
  double total = 0, w = (b - a) / pieces;
  for (int k = 0; k < pieces; ++k) {
    double x0 = a + k * w, x1 = x0 + w, xm = 0.5 * (x0 + x1);
    double f0 = f(x0), fm = f(xm), f1 = f(x1);
    double whole = w / 6 * (f0 + 4 * fm + f1);
    total += simpson_adaptive(f, x0, x1, f0, fm, f1, whole, eps / pieces, 48);
  }
  return total;
}

}  // namespace detail

// Checks the integral identity  length = 1/2 * integral_0^pi i(theta) dtheta.
// The exact mode integrates each segment's |Re(e^{i theta} z)| piecewise
// against its antiderivative Im(e^{i theta} z), splitting at the one sign
// change in [0, pi); the quadrature mode integrates the summed intersection
// function by adaptive Simpson as an independent cross-check.
struct LengthFormulaCheck {
  double length = 0;
  double exact_integral = 0;
  double quadrature_integral = 0;
  double exact_residual = 0;      // |exact - length| / length
  double quadrature_residual = 0;
};

template <class S>
LengthFormulaCheck verify_length_formula(const Surface<S>& s, const Geodesic<S>& g) {
  LengthFormulaCheck out;
  out.length = g.length;
  double div = g.doubled ? 2.0 : 1.0;

  double exact = 0;
  for (const DVec& z : segment_vectors(g)) {
    double phi = std::atan2(z.y, z.x);
    double star = std::fmod(M_PI / 2 - phi, M_PI);
    if (star < 0) star += M_PI;
    // antiderivative of Re(e^{i t} z) is Im(e^{i t} z)
    auto F = [&](double t) { return std::sin(t) * z.x + std::cos(t) * z.y; };
    exact += std::abs(F(star) - F(0)) + std::abs(F(M_PI) - F(star));
  }
  out.exact_integral = exact / (2 * div);

  auto f = [&](double t) { return foliation_intersection(s, g, t); };
  double eps = 1e-12 * (1 + std::abs(g.length));
  out.quadrature_integral = detail::integrate_adaptive(f, 0.0, M_PI, eps) / 2;

  double scale = std::abs(g.length) > 0 ? std::abs(g.length) : 1.0;
  out.exact_residual = std::abs(out.exact_integral - g.length) / scale;
  out.quadrature_residual = std::abs(out.quadrature_integral - g.length) / scale;
  return out;
}

// ---------------------------------------------------------------------------
// spectrum Jacobian on the normalized slice

namespace detail {

struct SvdCols {
  std::vector<double> sigma;            // descending
  std::vector<std::vector<double>> u;   // left vectors, one per sigma
  std::vector<std::vector<double>> v;   // right vectors, one per sigma
};

// one-sided Jacobi on the columns; plenty for the small dense matrices here
inline SvdCols jacobi_svd(std::vector<std::vector<double>> a) {
  size_t nc = a.size();
  size_t m = nc ? a[0].size() : 0;
  std::vector<std::vector<double>> v(nc, std::vector<double>(nc, 0.0));
  for (size_t k = 0; k < nc; ++k) v[k][k] = 1;
  auto col_dot = [&](size_t p, size_t q) {
    double t = 0;
    for (size_t i = 0; i < m; ++i) t += a[p][i] * a[q][i];
    return t;
  };
  for (int sweep = 0; sweep < 64; ++sweep) {
    bool rotated = false;
    for (size_t p = 0; p + 1 < nc; ++p) {
      for (size_t q = p + 1; q < nc; ++q) {
        double app = col_dot(p, p), aqq = col_dot(q, q), apq = col_dot(p, q);
        if (std::abs(apq) <= 1e-15 * std::sqrt(app * aqq)) continue;
        double th = 0.5 * std::atan2(2 * apq, app - aqq);
        double cs = std::cos(th), sn = std::sin(th);
        for (size_t i = 0; i < m; ++i) {
          double x = a[p][i], y = a[q][i];
          a[p][i] = cs * x + sn * y;
          a[q][i] = -sn * x + cs * y;
        }
        for (size_t i = 0; i < nc; ++i) {
          double x = v[p][i], y = v[q][i];
          v[p][i] = cs * x + sn * y;
          v[q][i] = -sn * x + cs * y;
        }
        rotated = true;
      }
    }
    if (!rotated) break;
  }
  SvdCols out;
  std::vector<size_t> order(nc);
  std::vector<double> sig(nc);
  for (size_t k = 0; k < nc; ++k) {
    order[k] = k;
    sig[k] = std::sqrt(col_dot(k, k));
  }
  std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) { return sig[x] > sig[y]; });
  for (size_t k : order) {
    out.sigma.push_back(sig[k]);
    std::vector<double> uk(m, 0.0);
    if (sig[k] > 0)
      for (size_t i = 0; i < m; ++i) uk[i] = a[k][i] / sig[k];
    out.u.push_back(std::move(uk));
    out.v.push_back(v[k]);
  }
  return out;
}

inline double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double t = 0;
  for (size_t i = 0; i < a.size(); ++i) t += a[i] * b[i];
  return t;
}

inline double vec_norm(const std::vector<double>& a) { return std::sqrt(vec_dot(a, a)); }

}  // namespace detail

// Gradients of the curve lengths with respect to the free periods,
// restricted to the normalized slice: directions that fix the total area to
// first order and are orthogonal to the simultaneous rotation of all
// periods. Rows come from the exact integer expansions of the segments, so
// they are analytic, not numeric differences.
template <class S>
struct SpectrumJacobian {
  PeriodChart<S> chart;
  std::vector<Geodesic<S>> reps;            // tightened curves, input order
  std::vector<double> lengths;
  double joint_radius = 0;                  // min stability radius over reps
  std::vector<std::vector<double>> slice;   // orthonormal slice directions in real chart coords
  std::vector<std::vector<double>> rows;    // per-curve gradients in slice coords
  std::vector<double> sigma;                // singular values, descending
  std::vector<std::vector<double>> left;    // left singular vectors (length = #curves)
  std::vector<std::vector<double>> right;   // right singular vectors (slice coords)
  int rank = 0;
  std::vector<std::vector<double>> null_basis;  // orthonormal, slice coords

  int slice_dim() const { return int(slice.size()); }
  int nullity() const { return slice_dim() - rank; }
};

template <class S>
SpectrumJacobian<S> spectrum_jacobian(const Surface<S>& s,
                                      const std::vector<std::vector<SlotRef>>& curves) {
  SpectrumJacobian<S> out;
  out.chart = period_chart(s);
  const int d = out.chart.dim();
  const int n = 2 * d;
  if (n < 3) fail(errc::construction_failed, "chart too small for a normalized slice");

  out.joint_radius = std::numeric_limits<double>::infinity();
  for (const auto& w : curves) {
    Geodesic<S> g = tighten(s, w);
    StabilityRadius r = stability_radius(s, out.chart, g);
    if (!(r.radius > 0))
      fail(errc::unstable_point,
           "curve " + std::to_string(out.reps.size()) + " sits on a stability wall (" +
               r.binding + ")");
    out.joint_radius = std::min(out.joint_radius, r.radius);
    out.lengths.push_back(g.length);
    out.reps.push_back(std::move(g));
  }
  if (curves.empty()) out.joint_radius = 0;

  // expand matrix in doubles, d columns per edge
  std::vector<std::vector<double>> E(size_t(s.E()), std::vector<double>(size_t(d), 0.0));
  for (int e = 0; e < s.E(); ++e)
    for (int j = 0; j < d; ++j) E[e][j] = to_double(out.chart.expand[e][j]);

  // area gradient over the real coordinates (Re x_0, Im x_0, ...)
  std::vector<double> agrad(size_t(n), 0.0);
  for (int t = 0; t < s.F(); ++t) {
    DVec v0 = approx(s.tris[t].v[0]), v1 = approx(s.tris[t].v[1]);
    int e0 = s.edge_of({t, 0}), e1 = s.edge_of({t, 1});
    double c0 = s.slot_coeff({t, 0}), c1 = s.slot_coeff({t, 1});
    for (int j = 0; j < d; ++j) {
      double E0 = E[e0][j] * c0, E1 = E[e1][j] * c1;
      agrad[2 * j] += 0.5 * (E0 * v1.y - v0.y * E1);
      agrad[2 * j + 1] += 0.5 * (-E0 * v1.x + v0.x * E1);
    }
  }
  // simultaneous rotation of all periods: delta x_j = i x_j
  auto x0 = free_periods(s, out.chart);
  std::vector<double> rot(size_t(n), 0.0);
  for (int j = 0; j < d; ++j) {
    rot[2 * j] = -to_double(x0[j].y);
    rot[2 * j + 1] = to_double(x0[j].x);
  }

  double an = detail::vec_norm(agrad);
  if (!(an > 1e-12)) fail(errc::construction_failed, "area gradient vanished");
  for (double& t : agrad) t /= an;
  double ar = detail::vec_dot(agrad, rot);
  for (int i = 0; i < n; ++i) rot[i] -= ar * agrad[i];
  double rn = detail::vec_norm(rot);
  if (!(rn > 1e-12)) fail(errc::construction_failed, "rotation direction vanished");
  for (double& t : rot) t /= rn;

  for (int k = 0; k < n && int(out.slice.size()) < n - 2; ++k) {
    std::vector<double> v(size_t(n), 0.0);
    v[size_t(k)] = 1;
    double ca = detail::vec_dot(v, agrad), cr = detail::vec_dot(v, rot);
    for (int i = 0; i < n; ++i) v[size_t(i)] -= ca * agrad[size_t(i)] + cr * rot[size_t(i)];
    for (const auto& u : out.slice) {
      double cu = detail::vec_dot(v, u);
      for (int i = 0; i < n; ++i) v[size_t(i)] -= cu * u[size_t(i)];
    }
    double nv = detail::vec_norm(v);
    if (nv > 1e-8) {
      for (double& t : v) t /= nv;
      out.slice.push_back(std::move(v));
    }
  }
  if (int(out.slice.size()) != n - 2)
    fail(errc::construction_failed, "slice basis incomplete");

  // analytic rows: d|z|/dx via the integer expansion of each segment
  for (size_t i = 0; i < out.reps.size(); ++i) {
    const Geodesic<S>& g = out.reps[i];
    auto ex = segment_expansions(s, g);
    auto zs = segment_vectors(g);
    double div = g.doubled ? 2.0 : 1.0;
    std::vector<double> full(size_t(n), 0.0);
    for (size_t si = 0; si < ex.size(); ++si) {
      double zl = norm(zs[si]);
      for (int j = 0; j < d; ++j) {
        double c = 0;
        for (int e = 0; e < s.E(); ++e)
          if (ex[si][size_t(e)] != 0) c += ex[si][size_t(e)] * E[e][j];
        if (c == 0) continue;
        full[2 * j] += (zs[si].x / zl) * c / div;
        full[2 * j + 1] += (zs[si].y / zl) * c / div;
      }
    }
    std::vector<double> row(out.slice.size());
    for (size_t cidx = 0; cidx < out.slice.size(); ++cidx)
      row[cidx] = detail::vec_dot(full, out.slice[cidx]);
    out.rows.push_back(std::move(row));
  }

  // singular value analysis of the rows
  size_t nc = out.slice.size();
  std::vector<std::vector<double>> cols(nc, std::vector<double>(out.rows.size()));
  for (size_t cidx = 0; cidx < nc; ++cidx)
    for (size_t i = 0; i < out.rows.size(); ++i) cols[cidx][i] = out.rows[i][cidx];
  detail::SvdCols svd = detail::jacobi_svd(std::move(cols));
  out.sigma = svd.sigma;
  out.left = svd.u;
  out.right = svd.v;
  double smax = out.sigma.empty() ? 0 : out.sigma[0];
  double tau = 1e-9 * smax;
  out.rank = 0;
  for (double sg : out.sigma)
    if (sg > tau && sg > 0) ++out.rank;
  for (size_t k = size_t(out.rank); k < out.right.size(); ++k)
    out.null_basis.push_back(out.right[k]);
  return out;
}

// minimum-norm least-squares solution of rows * delta = rhs, in slice coords
template <class S>
std::vector<double> solve_slice(const SpectrumJacobian<S>& sj, const std::vector<double>& rhs) {
  std::vector<double> delta(sj.slice.size(), 0.0);
  double tau = sj.sigma.empty() ? 0 : 1e-9 * sj.sigma[0];
  for (size_t k = 0; k < sj.sigma.size(); ++k) {
    if (!(sj.sigma[k] > tau) || sj.sigma[k] == 0) continue;
    double c = detail::vec_dot(sj.left[k], rhs) / sj.sigma[k];
    for (size_t i = 0; i < delta.size(); ++i) delta[i] += c * sj.right[k][i];
  }
  return delta;
}

// ---------------------------------------------------------------------------
// isospectral paths

// contribution count of the deformation dimension estimate: twice the
// number of unmarked cone points, minus 2g, plus the holonomy sign, plus one
template <class S>
int isospectral_dim_bound(const Surface<S>& s) {
  int k0 = 0;
  for (const auto& vc : s.classes)
    if (!vc.marked) ++k0;
  return 2 * k0 - 2 * s.genus() + s.eps + 1;
}

// widest open sector (mod pi) avoided by all segment directions; a large
// gap is a cheap proxy for the curve system not filling every direction
template <class S>
double direction_gap(const std::vector<Geodesic<S>>& reps) {
  std::vector<double> dirs;
  for (const auto& g : reps)
    for (const DVec& z : segment_vectors(g)) {
      double a = std::fmod(std::atan2(z.y, z.x), M_PI);
      if (a < 0) a += M_PI;
      dirs.push_back(a);
    }
  if (dirs.empty()) return M_PI;
  std::sort(dirs.begin(), dirs.end());
  double best = dirs.front() + M_PI - dirs.back();
  for (size_t i = 0; i + 1 < dirs.size(); ++i) best = std::max(best, dirs[i + 1] - dirs[i]);
  return best;
}

template <class S>
struct IsospectralPath {
  std::vector<Surface<S>> points;           // visited surfaces, start included
  std::vector<std::vector<double>> coords;  // real chart coordinates per point
  std::vector<double> drift;                // max relative spectrum deviation per point
  std::vector<double> target;               // the spectrum being preserved
  double step = 0;
  int slice_dim = 0;
  int rank = 0;
  int nullity = 0;
  bool hit_wall = false;
  std::string wall_reason;
  // context for the dimension report; informational, never a guarantee
  int dim_bound = 0;
  double dir_gap = 0;

  int steps_taken() const { return int(points.size()) - 1; }
};

// Walk the level set of the curve-system length function: step along a unit
// null direction of the slice Jacobian, then Newton-correct the spectrum
// back to its starting value. Each step is capped by half the joint
// stability radius, and the re-tightened crossing words are required to
// match the starting ones, so the walk never silently changes combinatorial
// regime. A failing step is halved up to seven times; if the first step
// fails at every size the walk throws, otherwise it returns the partial
// path with hit_wall set.
template <class S>
IsospectralPath<S> follow_isospectral_path(const Surface<S>& s,
                                           const std::vector<std::vector<SlotRef>>& curves,
                                           int steps, double h, double drift_tol = 1e-8) {
  if (curves.empty()) fail(errc::degenerate_input, "no curves to preserve");
  if (steps < 0 || !(h > 0)) fail(errc::degenerate_input, "bad path parameters");

  IsospectralPath<S> out;
  out.step = h;
  Surface<S> cur = s;
  SpectrumJacobian<S> sj = spectrum_jacobian(cur, curves);
  const int d = sj.chart.dim();
  const int n = 2 * d;
  out.slice_dim = sj.slice_dim();
  out.rank = sj.rank;
  out.nullity = sj.nullity();
  if (out.nullity <= 0)
    fail(errc::nullity_zero, "spectrum gradients fill the slice; no isospectral direction");
  out.target = sj.lengths;
  out.dim_bound = isospectral_dim_bound(s);
  out.dir_gap = direction_gap(sj.reps);

  std::vector<std::vector<SlotRef>> ref_words;
  std::vector<bool> ref_double;
  std::vector<bool> ref_cyl;
  for (const auto& g : sj.reps) {
    ref_words.push_back(g.word);
    ref_double.push_back(g.doubled);
    ref_cyl.push_back(g.kind == Geodesic<S>::Kind::cylinder);
  }
  auto same_regime = [&](const SpectrumJacobian<S>& t) {
    for (size_t i = 0; i < t.reps.size(); ++i) {
      if (!(t.reps[i].word == ref_words[i])) return false;
      if (t.reps[i].doubled != ref_double[i]) return false;
      if ((t.reps[i].kind == Geodesic<S>::Kind::cylinder) != ref_cyl[i]) return false;
    }
    return true;
  };
  auto drift_of = [&](const std::vector<double>& lens) {
    double m = 0;
    for (size_t i = 0; i < lens.size(); ++i)
      m = std::max(m, std::abs(lens[i] - out.target[i]) / out.target[i]);
    return m;
  };
  auto coords_of = [&](const Surface<S>& sp) {
    auto z = free_periods(sp, sj.chart);
    std::vector<double> xr(static_cast<size_t>(n));
    for (int j = 0; j < d; ++j) {
      xr[2 * j] = to_double(z[j].x);
      xr[2 * j + 1] = to_double(z[j].y);
    }
    return xr;
  };
  auto rebuild = [&](const std::vector<double>& xr) {
    std::vector<Vec2<S>> z(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j)
      z[size_t(j)] = {scalar_from_double<S>(xr[2 * j]), scalar_from_double<S>(xr[2 * j + 1])};
    return with_free_periods(cur, sj.chart, z);
  };

  out.points.push_back(cur);
  out.coords.push_back(coords_of(cur));
  out.drift.push_back(0);

  std::vector<double> prev_dir;  // previous step direction, full coordinates
  for (int step = 0; step < steps; ++step) {
    if (sj.nullity() <= 0) {
      out.hit_wall = true;
      out.wall_reason = "isospectral direction vanished at step " + std::to_string(step);
      break;
    }
    // null direction in full coordinates, oriented for continuity
    std::vector<double> dir(size_t(n), 0.0);
    for (size_t cidx = 0; cidx < sj.slice.size(); ++cidx)
      for (int i = 0; i < n; ++i) dir[size_t(i)] += sj.null_basis[0][cidx] * sj.slice[cidx][size_t(i)];
    if (!prev_dir.empty() && detail::vec_dot(dir, prev_dir) < 0)
      for (double& t : dir) t = -t;

    double hs = std::min(h, 0.5 * sj.joint_radius);
    bool committed = false;
    for (int attempt = 0; attempt < 7 && !committed; ++attempt, hs /= 2) {
      std::vector<double> x = out.coords.back();
      for (int i = 0; i < n; ++i) x[size_t(i)] += hs * dir[size_t(i)];
      Surface<S> trial;
      SpectrumJacobian<S> tj;
      try {
        trial = rebuild(x);
        tj = spectrum_jacobian(trial, curves);
      } catch (const sf_error&) {
        continue;
      }
      if (!same_regime(tj)) continue;
      double dr = drift_of(tj.lengths);
      bool broke = false;
      for (int it = 0; it < 10 && dr > 0.1 * drift_tol; ++it) {
        std::vector<double> resid(curves.size());
        for (size_t i = 0; i < curves.size(); ++i) resid[i] = out.target[i] - tj.lengths[i];
        auto ds = solve_slice(tj, resid);
        for (size_t cidx = 0; cidx < tj.slice.size(); ++cidx)
          for (int i = 0; i < n; ++i) x[size_t(i)] += ds[cidx] * tj.slice[cidx][size_t(i)];
        try {
          trial = rebuild(x);
          tj = spectrum_jacobian(trial, curves);
        } catch (const sf_error&) {
          broke = true;
          break;
        }
        if (!same_regime(tj)) {
          broke = true;
          break;
        }
        dr = drift_of(tj.lengths);
      }
      if (broke || dr > drift_tol) continue;
      cur = std::move(trial);
      sj = std::move(tj);
      prev_dir = std::move(dir);
      out.points.push_back(cur);
      out.coords.push_back(std::move(x));
      out.drift.push_back(dr);
      committed = true;
    }
    if (!committed) {
      if (out.points.size() == 1)
        fail(errc::stability_wall, "first step failed at every size down from " + std::to_string(h));
      out.hit_wall = true;
      out.wall_reason = "step " + std::to_string(step) + " exhausted its halvings";
      break;
    }
  }
  return out;
}

}  // namespace semiflat
