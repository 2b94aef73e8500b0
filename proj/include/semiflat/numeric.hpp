#pragma once
// Exact rational scalars, planar vectors, and exact angle accumulation.
//
// Surfaces built from rational input keep every combinatorial decision exact:
// orientation tests are rational sign tests, and angles are tracked as
// (integer multiple of pi, rational residual direction) pairs so that
// "angle >= pi" and "cone angle is k*pi" are decided without floating point.
// Float-backed surfaces (after rotate/normalize) use the same algorithms with
// double scalars and snap tolerances.

#include <boost/multiprecision/cpp_int.hpp>

#include <climits>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace semiflat {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }
inline double to_double(double d) { return d; }

// exact binary expansion of a double, for feeding numeric iterates back
// into exact arithmetic
inline Rational rational_from_double(double x) {
  if (x == 0) return Rational(0);
  if (!std::isfinite(x)) throw std::invalid_argument("non-finite value has no rational form");
  int e = 0;
  double m = std::frexp(x, &e);
  auto mant = static_cast<long long>(std::ldexp(m, 53));
  e -= 53;
  Rational r(mant);
  BigInt pow = BigInt(1) << (e < 0 ? -e : e);
  return e < 0 ? r / Rational(pow) : r * Rational(pow);
}

template <class S>
S scalar_from_double(double x);
template <>
inline Rational scalar_from_double<Rational>(double x) { return rational_from_double(x); }
template <>
inline double scalar_from_double<double>(double x) { return x; }

inline int sign_of(const Rational& v) { return v.sign(); }
inline int sign_of(double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

// ---------------------------------------------------------------- vectors

template <class S>
struct Vec2 {
  S x{};
  S y{};

  Vec2() = default;
  Vec2(S xx, S yy) : x(std::move(xx)), y(std::move(yy)) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Vec2 operator*(const S& s) const { return {x * s, y * s}; }
  bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }
  bool operator!=(const Vec2& o) const { return !(*this == o); }
};

using QVec = Vec2<Rational>;
using DVec = Vec2<double>;

template <class S>
S cross(const Vec2<S>& a, const Vec2<S>& b) {
  return a.x * b.y - a.y * b.x;
}
template <class S>
S dot(const Vec2<S>& a, const Vec2<S>& b) {
  return a.x * b.x + a.y * b.y;
}
template <class S>
S norm2(const Vec2<S>& a) {
  return a.x * a.x + a.y * a.y;
}
// complex multiplication (vectors as complex numbers)
template <class S>
Vec2<S> cmul(const Vec2<S>& a, const Vec2<S>& b) {
  return {a.x * b.x - a.y * b.y, a.x * b.y + a.y * b.x};
}
template <class S>
Vec2<S> conj(const Vec2<S>& a) {
  return {a.x, -a.y};
}
template <class S>
bool is_zero(const Vec2<S>& a) {
  return sign_of(a.x) == 0 && sign_of(a.y) == 0;
}
template <class S>
DVec approx(const Vec2<S>& a) {
  return {to_double(a.x), to_double(a.y)};
}
inline double norm(const DVec& a) { return std::hypot(a.x, a.y); }
template <class S>
double norm_approx(const Vec2<S>& a) {
  return norm(approx(a));
}

template <class S>
bool lex_less(const Vec2<S>& a, const Vec2<S>& b) {
  if (a.x != b.x) return a.x < b.x;
  return a.y < b.y;
}

// ------------------------------------------------------------- formatting

inline std::string format_rational(const Rational& r) {
  std::ostringstream os;
  if (denominator(r) == 1) {
    os << numerator(r);
  } else {
    os << numerator(r) << '/' << denominator(r);
  }
  return os.str();
}

inline std::string format_scalar(const Rational& r) { return format_rational(r); }
inline std::string format_scalar(double d) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

// Decimal integer parse; cpp_int's own string constructor reads a leading
// zero as an octal prefix, which is wrong for our formats.
inline std::optional<BigInt> parse_bigint_dec(const std::string& s) {
  size_t i = 0;
  bool neg = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) neg = s[i++] == '-';
  if (i >= s.size()) return std::nullopt;
  BigInt v = 0;
  for (; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
    v = v * 10 + (s[i] - '0');
  }
  return neg ? -v : v;
}

// Parse "p/q", integers, and plain decimals ("1.25", "-0.5e-2") exactly.
inline Rational parse_rational(const std::string& tok) {
  auto bad = [&]() -> Rational {
    throw std::invalid_argument("bad rational literal: '" + tok + "'");
  };
  if (tok.empty()) return bad();
  auto slash = tok.find('/');
  if (slash != std::string::npos) {
    auto num = parse_bigint_dec(tok.substr(0, slash));
    auto den = parse_bigint_dec(tok.substr(slash + 1));
    if (!num || !den || *den == 0) return bad();
    return Rational(*num, *den);
  }
  // decimal with optional exponent
  std::string s = tok;
  int exp10 = 0;
  auto epos = s.find_first_of("eE");
  if (epos != std::string::npos) {
    exp10 = std::stoi(s.substr(epos + 1));
    s = s.substr(0, epos);
  }
  int frac_digits = 0;
  bool seen_dot = false;
  bool neg = false;
  size_t i = 0;
  if (s.empty()) return bad();
  if (s[i] == '+' || s[i] == '-') neg = s[i++] == '-';
  bool any = false;
  BigInt num = 0;
  for (; i < s.size(); ++i) {
    if (s[i] == '.') {
      if (seen_dot) return bad();
      seen_dot = true;
    } else if (s[i] >= '0' && s[i] <= '9') {
      num = num * 10 + (s[i] - '0');
      if (seen_dot) ++frac_digits;
      any = true;
    } else {
      return bad();
    }
  }
  if (!any) return bad();
  if (neg) num = -num;
  Rational r(num);
  int shift = exp10 - frac_digits;
  BigInt p10 = 1;
  for (int k = 0; k < std::abs(shift); ++k) p10 *= 10;
  if (shift >= 0)
    r *= Rational(p10);
  else
    r /= Rational(p10);
  return r;
}

// atan2 on rationals whose plain double conversions may over- or underflow:
// rescale by a common power of two first (only the direction matters)
inline double direction_atan2(const Rational& y, const Rational& x) {
  double dx = to_double(x), dy = to_double(y);
  double m = std::max(std::fabs(dx), std::fabs(dy));
  if (std::isfinite(dx) && std::isfinite(dy) && m > 1e-300)
    return std::atan2(dy, dx);
  auto exp2_of = [](const Rational& v) -> long {
    if (v.sign() == 0) return LONG_MIN;
    BigInt n = boost::multiprecision::abs(numerator(v));
    return long(boost::multiprecision::msb(n)) - long(boost::multiprecision::msb(denominator(v)));
  };
  long e = std::max(exp2_of(x), exp2_of(y));
  if (e == LONG_MIN) throw std::logic_error("atan2 of zero vector");
  Rational scale = e >= 0 ? Rational(1, BigInt(1) << e) : Rational(BigInt(1) << -e);
  return std::atan2(to_double(y * scale), to_double(x * scale));
}

// sqrt of a rational if it is a perfect square
inline std::optional<Rational> exact_sqrt(const Rational& r) {
  if (r.sign() < 0) return std::nullopt;
  BigInt n = numerator(r), d = denominator(r);
  BigInt sn = boost::multiprecision::sqrt(n), sd = boost::multiprecision::sqrt(d);
  if (sn * sn == n && sd * sd == d) return Rational(sn, sd);
  return std::nullopt;
}

// ------------------------------------------------------------ exact angle
//
// Angle value k*pi + arg(r) with arg(r) in [0,pi). The residual r is kept as
// a primitive integer direction vector so repeated sums stay small.

inline void canonicalize_direction(QVec& r) {
  BigInt nx = numerator(r.x), dx = denominator(r.x);
  BigInt ny = numerator(r.y), dy = denominator(r.y);
  BigInt ix = nx * dy, iy = ny * dx;  // common denominator dx*dy, direction only
  BigInt g = boost::multiprecision::gcd(boost::multiprecision::abs(ix),
                                        boost::multiprecision::abs(iy));
  if (g == 0) throw std::logic_error("zero direction");
  r.x = Rational(ix / g);
  r.y = Rational(iy / g);
}

struct ExactAngle {
  long k = 0;        // winding in units of pi
  QVec r{1, 0};      // residual direction, arg in [0,pi)

  static ExactAngle zero() { return {}; }
  static ExactAngle pi_times(long m) {
    ExactAngle a;
    a.k = m;
    return a;
  }

  // ccw angle from u to v, in [0, 2*pi)
  static ExactAngle between(const QVec& u, const QVec& v) {
    if (is_zero(u) || is_zero(v)) throw std::logic_error("angle of zero vector");
    QVec p = cmul(v, conj(u));
    ExactAngle a;
    int sy = sign_of(p.y);
    if (sy > 0) {
      a.k = 0;
      a.r = p;
    } else if (sy < 0) {
      a.k = 1;
      a.r = -p;
    } else if (sign_of(p.x) > 0) {
      a.k = 0;
      a.r = {1, 0};
      return a;
    } else {
      a.k = 1;
      a.r = {1, 0};
      return a;
    }
    canonicalize_direction(a.r);
    return a;
  }

  ExactAngle& operator+=(const ExactAngle& o) {
    k += o.k;
    if (r.y == 0 && o.r.y == 0) return *this;  // both residuals zero
    r = cmul(r, o.r);
    if (sign_of(r.y) < 0 || (sign_of(r.y) == 0 && sign_of(r.x) < 0)) {
      r = -r;
      ++k;
    }
    canonicalize_direction(r);
    return *this;
  }
  ExactAngle operator+(const ExactAngle& o) const {
    ExactAngle a = *this;
    a += o;
    return a;
  }

  bool residual_zero() const { return sign_of(r.y) == 0; }

  // compare against m*pi: -1 / 0 / +1
  int cmp_pi(long m) const {
    if (k != m) return k < m ? -1 : 1;
    return residual_zero() ? 0 : 1;
  }
  // total order on angle values
  int cmp(const ExactAngle& o) const {
    if (k != o.k) return k < o.k ? -1 : 1;
    // both residuals in [0,pi): compare arg(r) vs arg(o.r) by cross sign
    int s = sign_of(cross(r, o.r));
    return s > 0 ? -1 : (s < 0 ? 1 : 0);
  }

  double to_radians() const { return double(k) * M_PI + direction_atan2(r.y, r.x); }
};

// Float counterpart: plain radians with a snap tolerance for pi-multiples.
struct FloatAngle {
  double a = 0;
  static constexpr double snap = 1e-9;

  static FloatAngle zero() { return {}; }
  static FloatAngle pi_times(long m) { return {double(m) * M_PI}; }
  static FloatAngle between(const DVec& u, const DVec& v) {
    double ang = std::atan2(cross(u, v), dot(u, v));
    if (ang < 0) ang += 2 * M_PI;
    return {ang};
  }
  FloatAngle& operator+=(const FloatAngle& o) {
    a += o.a;
    return *this;
  }
  FloatAngle operator+(const FloatAngle& o) const { return {a + o.a}; }
  bool residual_zero() const {
    double m = std::remainder(a, M_PI);
    return std::fabs(m) <= snap * std::max(1.0, std::fabs(a));
  }
  int cmp_pi(long m) const {
    double d = a - double(m) * M_PI;
    double tol = snap * std::max(1.0, std::fabs(a));
    if (d > tol) return 1;
    if (d < -tol) return -1;
    return 0;
  }
  int cmp(const FloatAngle& o) const {
    if (a < o.a - 1e-15) return -1;
    if (a > o.a + 1e-15) return 1;
    return 0;
  }
  double to_radians() const { return a; }
};

template <class S>
struct NumTraits;
template <>
struct NumTraits<Rational> {
  using Angle = ExactAngle;
  static constexpr bool exact = true;
};
template <>
struct NumTraits<double> {
  using Angle = FloatAngle;
  static constexpr bool exact = false;
};

}  // namespace semiflat
