#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "semiflat/geodesics.hpp"

using namespace semiflat;

namespace {

std::vector<SlotRef> make_word(std::initializer_list<std::pair<int, int>> ds) {
  std::vector<SlotRef> w;
  for (auto [t, i] : ds) w.push_back({t, i});
  return w;
}

// crossing word of a small loop around the vertex at corner c0
std::vector<SlotRef> vertex_loop(const Surface<Rational>& s, SlotRef c0) {
  std::vector<SlotRef> doors;
  SlotRef c = c0;
  do {
    doors.push_back({c.t, prev3(c.i)});
    c = s.next_corner_ccw(c);
  } while (!(c == c0));
  return doors;
}

QVec barycenter(const Surface<Rational>& s, int t) {
  QVec sum = chart_corner(s, {t, 0}) + chart_corner(s, {t, 1}) + chart_corner(s, {t, 2});
  return sum * Rational(1, 3);
}

auto has_code(errc c) {
  return Catch::Matchers::Predicate<sf_error>(
      [c](const sf_error& e) { return e.code() == c; });
}

}  // namespace

TEST_CASE("funnel finds wraps in a synthetic corridor", "[geodesics]") {
  // corridor forcing a wrap around the second gate's right endpoint
  std::vector<Gate<Rational>> gates{{{Rational(1), Rational(0)}, {Rational(1), Rational(2)}},
                                    {{Rational(2), Rational(1)}, {Rational(2), Rational(3)}}};
  auto wraps = funnel_path<Rational>({Rational(0), Rational(0)}, gates, {Rational(3), Rational(0)});
  REQUIRE(wraps.size() == 1);
  CHECK(wraps[0].gate == 1);
  CHECK(wraps[0].side == -1);

  // touching a gate endpoint exactly is a pass-through, not a wrap
  std::vector<Gate<Rational>> touch{{{Rational(1), Rational(0)}, {Rational(1), Rational(1)}}};
  CHECK(funnel_path<Rational>({Rational(0), Rational(0)}, touch, {Rational(2), Rational(0)}).empty());
}

TEST_CASE("square torus horizontal and vertical cylinders", "[geodesics]") {
  auto s = load_corpus("torus2");

  auto g = tighten(s, make_word({{3, 1}, {0, 1}, {1, 0}}));
  CHECK(g.kind == Geodesic<Rational>::Kind::cylinder);
  CHECK(g.length == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(g.core == QVec{Rational(1), Rational(0)});
  // in the canonical word's chart the corridor is 0 < y < 1/2
  CHECK(g.offset == Rational(1, 4));
  CHECK_FALSE(g.doubled);
  CHECK(verify_geodesic(s, g).ok);

  auto v = tighten(s, make_word({{0, 2}, {3, 2}, {2, 0}}));
  CHECK(v.kind == Geodesic<Rational>::Kind::cylinder);
  CHECK(v.length == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(verify_geodesic(s, v).ok);
}

TEST_CASE("tightening is invariant under rotation and spur insertion", "[geodesics]") {
  auto s = load_corpus("torus2");
  auto base = make_word({{3, 1}, {0, 1}, {1, 0}});
  auto g0 = tighten(s, base);

  std::vector<SlotRef> rot(base.begin() + 1, base.end());
  rot.push_back(base[0]);
  auto g1 = tighten(s, rot);
  CHECK(g1.word == g0.word);
  CHECK(g1.length == g0.length);
  CHECK(g1.core == g0.core);
  CHECK(g1.offset == g0.offset);

  // wedge a backtrack through door (0,2) into the word
  std::vector<SlotRef> spur{base[0], {0, 2}, s.partner({0, 2}), base[1], base[2]};
  auto g2 = tighten(s, spur);
  CHECK(g2.word == g0.word);
  CHECK(g2.length == g0.length);
  CHECK(g2.offset == g0.offset);
}

TEST_CASE("closed straight trajectories come back as cylinders", "[geodesics]") {
  auto s = load_corpus("torus2");

  auto w = shoot_word(s, 0, {Rational(3, 10), Rational(1, 5)}, {Rational(1), Rational(0)});
  REQUIRE(w.size() == 3);
  CHECK(canonical_rotation(w) == canonical_rotation(make_word({{3, 1}, {0, 1}, {1, 0}})));

  // the diagonal through generic points closes smoothly with length sqrt(2)
  auto d = shoot_word(s, 0, {Rational(3, 10), Rational(1, 5)}, {Rational(1), Rational(1)});
  REQUIRE(d.size() == 4);
  auto g = tighten(s, d);
  CHECK(g.kind == Geodesic<Rational>::Kind::cylinder);
  CHECK(g.length == Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));

  CHECK_THROWS_MATCHES(
      shoot_word(s, 0, {Rational(1, 2), Rational(1, 4)}, {Rational(0), Rational(1)}), sf_error,
      has_code(errc::degenerate_input));
}

TEST_CASE("doubled segment between the two marked points", "[geodesics]") {
  auto s = load_corpus("torus2");
  // hugging loop around the segment from the corner point to the center:
  // up one side, around the center, back, and around the corner point
  auto word = make_word({{0, 1}, {1, 1}, {2, 1}, {3, 0}, {1, 2}, {0, 0}, {2, 2}, {1, 0}, {3, 2}, {2, 0}});
  auto g = tighten(s, word);
  CHECK(g.kind == Geodesic<Rational>::Kind::pinned);
  CHECK_FALSE(g.doubled);
  REQUIRE(g.pins.size() == 2);
  REQUIRE(g.segments.size() == 2);
  CHECK(g.length == Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(g.seg_norm2[0] == Rational(1, 2));
  CHECK(g.seg_norm2[1] == Rational(1, 2));
  for (const Pin& p : g.pins) CHECK(s.marked(p.c_in));
  CHECK(verify_geodesic(s, g).ok);
}

TEST_CASE("peripheral loops are rejected as inessential", "[geodesics]") {
  auto torus = load_corpus("torus2");
  auto around_corner = vertex_loop(torus, {0, 0});
  REQUIRE(around_corner.size() == 8);
  CHECK_THROWS_MATCHES(tighten(torus, around_corner), sf_error,
                       has_code(errc::inessential_curve));

  // a loop around the octagon's unmarked vertex is contractible
  auto oct = load_corpus("octagon");
  auto around_center = vertex_loop(oct, {0, 0});
  REQUIRE(around_center.size() == 18);
  CHECK_THROWS_MATCHES(tighten(oct, around_center), sf_error,
                       has_code(errc::inessential_curve));

  // around a single fold point of the pillowcase (reversing holonomy)
  auto pil = load_corpus("pillowcase5");
  auto around_pole = vertex_loop(pil, {0, 1});
  REQUIRE(around_pole.size() == 3);
  CHECK(word_holonomy(pil, around_pole).eta == -1);
  CHECK_THROWS_MATCHES(tighten(pil, around_pole), sf_error,
                       has_code(errc::inessential_curve));
}

TEST_CASE("splicing a contractible vertex loop does not change the geodesic", "[geodesics]") {
  auto s = load_corpus("octagon");
  auto base = shoot_word(s, 0, barycenter(s, 0), {Rational(1), Rational(0)});
  auto g0 = tighten(s, base);
  CHECK(g0.kind == Geodesic<Rational>::Kind::cylinder);

  auto peri = vertex_loop(s, {0, 0});
  int t1 = s.partner(base[0]).t;
  size_t r = 0;
  while (peri[r].t != t1) ++r;
  std::vector<SlotRef> spliced{base[0]};
  spliced.insert(spliced.end(), peri.begin() + r, peri.end());
  spliced.insert(spliced.end(), peri.begin(), peri.begin() + r);
  spliced.insert(spliced.end(), base.begin() + 1, base.end());

  auto g1 = tighten(s, spliced);
  CHECK(g1.kind == g0.kind);
  CHECK(g1.word == g0.word);
  CHECK(g1.length == Catch::Approx(g0.length).epsilon(1e-12));
}

TEST_CASE("pillowcase cylinders and an essential reversing class", "[geodesics]") {
  auto s = load_corpus("pillowcase5");

  auto h = shoot_word(s, 0, barycenter(s, 0), {Rational(1), Rational(0)});
  auto gh = tighten(s, h);
  CHECK(gh.kind == Geodesic<Rational>::Kind::cylinder);
  CHECK(gh.length == Catch::Approx(4.0).epsilon(1e-12));

  auto v = shoot_word(s, 0, {Rational(-1, 5), Rational(-2, 3)}, {Rational(0), Rational(1)});
  auto gv = tighten(s, v);
  CHECK(gv.kind == Geodesic<Rational>::Kind::cylinder);
  CHECK(gv.length == Catch::Approx(4.0).epsilon(1e-12));

  // loop around the interior marked point and one fold point: reversing
  // holonomy, tightens through its double to the segment between them
  auto word = make_word({{0, 2}, {1, 2}, {2, 2}, {3, 1}, {4, 0}});
  CHECK(word_holonomy(s, word).eta == -1);
  auto g = tighten(s, word);
  CHECK(g.kind == Geodesic<Rational>::Kind::pinned);
  CHECK(g.doubled);
  CHECK(g.pins.size() == 4);
  CHECK(g.length == Catch::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(verify_geodesic(s, g).ok);
}

TEST_CASE("three parallel waist curves of the slit surface", "[geodesics]") {
  auto s = load_corpus("genus2m");
  for (auto word : {make_word({{1, 0}, {0, 1}, {2, 2}, {3, 2}}),
                    make_word({{5, 0}, {4, 1}, {7, 0}, {6, 1}}),
                    make_word({{9, 0}, {8, 1}, {10, 2}, {11, 2}})}) {
    auto g = tighten(s, word);
    CHECK(g.kind == Geodesic<Rational>::Kind::cylinder);
    CHECK(g.length == Catch::Approx(4.0).epsilon(1e-12));
    CHECK(verify_geodesic(s, g).ok);
  }
  // they are genuinely different classes
  auto a = tighten(s, make_word({{1, 0}, {0, 1}, {2, 2}, {3, 2}}));
  auto b = tighten(s, make_word({{5, 0}, {4, 1}, {7, 0}, {6, 1}}));
  CHECK(a.word != b.word);
}

TEST_CASE("verification rejects corrupted representatives", "[geodesics]") {
  auto s = load_corpus("torus2");
  auto g = tighten(s, make_word({{3, 1}, {0, 1}, {1, 0}}));
  REQUIRE(verify_geodesic(s, g).ok);
  auto bad = g;
  bad.offset = Rational(5);  // outside the corridor
  CHECK_FALSE(verify_geodesic(s, bad).ok);
  bad = g;
  bad.length = 2.0;
  CHECK_FALSE(verify_geodesic(s, bad).ok);
}

TEST_CASE("tightening respects its operation budget", "[geodesics]") {
  auto s = load_corpus("torus2");
  TightenOptions opt;
  opt.max_rounds = 0;
  CHECK_THROWS_MATCHES(tighten(s, make_word({{3, 1}, {0, 1}, {1, 0}}), opt), sf_error,
                       has_code(errc::budget_exceeded));
}

TEST_CASE("word validation catches broken chains", "[geodesics]") {
  auto s = load_corpus("torus2");
  CHECK_THROWS_MATCHES(tighten(s, make_word({{3, 1}, {1, 0}, {0, 1}})), sf_error,
                       has_code(errc::combinatorics_mismatch));
  CHECK_THROWS_MATCHES(tighten(s, std::vector<SlotRef>{}), sf_error,
                       has_code(errc::degenerate_input));
  // a pure backtrack reduces to nothing
  CHECK_THROWS_MATCHES(tighten(s, make_word({{0, 2}, {3, 1}})), sf_error,
                       has_code(errc::inessential_curve));
}

TEST_CASE("vertex-to-vertex ray tracing", "[geodesics]") {
  auto s = load_corpus("torus2");
  // from the corner point in direction (2,1): first lattice hit at distance
  // sqrt(5), crossing three edges on the way
  auto hit = trace_from_corner(s, {0, 0}, {Rational(2), Rational(1)});
  CHECK(hit.period == QVec{Rational(2), Rational(1)});
  CHECK(hit.doors.size() == 3);
  CHECK(s.marked(hit.end_corner));

  CHECK_THROWS_MATCHES(trace_from_corner(s, {0, 0}, {Rational(1), Rational(1)}), sf_error,
                       has_code(errc::degenerate_input));
}
