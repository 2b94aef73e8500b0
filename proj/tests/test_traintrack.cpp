#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <sstream>

#include "corpus.hpp"
#include "semiflat/traintrack.hpp"

using namespace semiflat;

namespace {

auto fails_with(errc code) {
  return Catch::Matchers::Predicate<sf_error>(
      [code](const sf_error& e) { return e.code() == code; });
}

// Frozen from the Euler characteristic of a trivalent graph filling the
// surface: 18g+6n-18 branches, 12g+4n-12 switches, kernel dimension 6g+2n-6,
// and 4g+2n-4 complementary regions of which n are marked monogons.
struct Fixture {
  const char* file;
  int genus, marks, curves, branches, switches, dim, faces;
};

constexpr Fixture kFixtures[] = {
    {"genus2", 2, 0, 3, 18, 12, 6, 4},
    {"genus2h", 2, 0, 3, 18, 12, 6, 4},
    {"torus2m", 1, 2, 2, 12, 8, 4, 4},
    {"g0n5", 0, 5, 2, 12, 8, 4, 6},
};

Rational rnd_rational(std::mt19937& rng) {
  std::uniform_int_distribution<int> num(-9, 9), den(1, 9);
  return Rational(num(rng), den(rng));
}

WeightVector random_weight(const std::vector<WeightVector>& basis, std::mt19937& rng) {
  WeightVector w(basis.front().size());
  for (const auto& b : basis) {
    Rational lam = rnd_rational(rng);
    for (size_t i = 0; i < w.size(); ++i) w[i] += lam * b[i];
  }
  return w;
}

// the pants curve itself, ridden as a weight vector: 1 on its own arcs
WeightVector curve_weight(const TrainTrack& t, int j) {
  WeightVector w(t.nbranches);
  for (int b : t.collars[j].arc) w[b] = 1;
  return w;
}

// exact rank by plain elimination, kept independent of the library reduction
int rational_rank(std::vector<std::vector<Rational>> m) {
  int rank = 0;
  const int rows = int(m.size()), cols = rows ? int(m[0].size()) : 0;
  for (int c = 0; c < cols && rank < rows; ++c) {
    int piv = -1;
    for (int r = rank; r < rows; ++r)
      if (sign_of(m[r][c]) != 0) {
        piv = r;
        break;
      }
    if (piv < 0) continue;
    std::swap(m[rank], m[piv]);
    for (int r = 0; r < rows; ++r) {
      if (r == rank || sign_of(m[r][c]) == 0) continue;
      Rational f = m[r][c] / m[rank][c];
      for (int cc = c; cc < cols; ++cc) m[r][cc] -= f * m[rank][cc];
    }
    ++rank;
  }
  return rank;
}

}  // namespace

TEST_CASE("pants decompositions load with their derived topology", "[traintrack]") {
  for (const auto& fx : kFixtures) {
    auto pd = load_pants_fixture(fx.file);
    INFO(fx.file);
    CHECK(pd.genus == fx.genus);
    CHECK(pd.marks == fx.marks);
    CHECK(pd.curve_count() == fx.curves);
    CHECK(pd.curve_count() == 3 * pd.genus + pd.marks - 3);

    // the serialized form parses back to the same pairing
    std::istringstream round(serialize_pants(pd));
    auto pd2 = parse_pants(round);
    CHECK(pd2.partner == pd.partner);
    CHECK(pd2.curve == pd.curve);
  }
}

TEST_CASE("malformed pants files are rejected", "[traintrack]") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_pants(in);
  };
  CHECK_THROWS_MATCHES(parse("pants 0\ncuff 0.0 glue 0.1\n"), sf_error,
                       fails_with(errc::unglued_slot));
  CHECK_THROWS_MATCHES(parse("pants 0\ncuff 0.0 glue 0.0\n"), sf_error,
                       fails_with(errc::gluing_mismatch));
  CHECK_THROWS_MATCHES(
      parse("pants 0\npants 1\ncuff 0.0 glue 1.0\ncuff 0.0 glue 1.1\n"), sf_error,
      fails_with(errc::gluing_mismatch));
  CHECK_THROWS_MATCHES(parse("pants 0\ncuff 0.5 marked\n"), sf_error,
                       fails_with(errc::parse_error));
  CHECK_THROWS_MATCHES(parse("pants 0\ncuff 1.0 marked\n"), sf_error,
                       fails_with(errc::parse_error));
  CHECK_THROWS_MATCHES(parse("pants 0\ncuff 0.0 pinned\n"), sf_error,
                       fails_with(errc::parse_error));
  CHECK_THROWS_MATCHES(parse("trousers 0\n"), sf_error, fails_with(errc::parse_error));

  // two closed components: every slot resolved, still not one surface
  std::vector<int> two(12, -1);
  auto tie = [&](int a, int b) { two[a] = b; two[b] = a; };
  tie(0, 3);
  tie(1, 4);
  tie(2, 5);
  tie(6, 9);
  tie(7, 10);
  tie(8, 11);
  CHECK_THROWS_MATCHES(build_pants(4, two), sf_error, fails_with(errc::disconnected));
}

TEST_CASE("tracks assemble with trigon and monogon regions only", "[traintrack]") {
  for (const auto& fx : kFixtures) {
    auto pd = load_pants_fixture(fx.file);
    auto [right, left] = build_tracks(pd);
    INFO(fx.file);
    for (const TrainTrack* t : {&right, &left}) {
      CHECK(t->nbranches == fx.branches);
      CHECK(int(t->switches.size()) == fx.switches);
      auto rc = region_census(*t);
      CHECK(rc.faces() == fx.faces);
      CHECK(rc.monogons == fx.marks);
      CHECK(rc.trigons == fx.faces - fx.marks);
      for (int c : rc.cusps) CHECK((c == 1 || c == 3));
    }
    CHECK(right.turn == 1);
    CHECK(left.turn == -1);
    std::set<std::string> names(right.name.begin(), right.name.end());
    CHECK(int(names.size()) == right.nbranches);
  }
}

TEST_CASE("one pants curve is not enough to span a track", "[traintrack]") {
  // two pants glued along a single curve, the other four cuffs marked
  std::vector<int> partner{3, -1, -1, 0, -1, -1};
  auto pd = build_pants(2, partner);
  CHECK(pd.curve_count() == 1);
  CHECK_THROWS_MATCHES(build_tracks(pd), sf_error, fails_with(errc::complexity_too_low));
}

TEST_CASE("switch conditions carve out the expected weight space", "[traintrack]") {
  for (const auto& fx : kFixtures) {
    auto pd = load_pants_fixture(fx.file);
    auto [right, left] = build_tracks(pd);
    INFO(fx.file);
    for (const TrainTrack* t : {&right, &left}) {
      auto basis = weight_space_basis(*t);
      CHECK(int(basis.size()) == fx.dim);
      CHECK(int(basis.size()) == 6 * fx.genus + 2 * fx.marks - 6);
      for (const auto& b : basis) CHECK(satisfies_switches(*t, b));
    }
  }
}

TEST_CASE("a strictly positive weight rescales the basis into the cone", "[traintrack]") {
  for (const auto& fx : kFixtures) {
    auto pd = load_pants_fixture(fx.file);
    auto [right, left] = build_tracks(pd);
    INFO(fx.file);
    for (const TrainTrack* t : {&right, &left}) {
      auto pos = strictly_positive_weight(*t);
      REQUIRE(satisfies_switches(*t, pos));
      for (const auto& v : pos) CHECK(sign_of(v) > 0);
      for (const auto& b : weight_space_basis(*t)) {
        Rational scale = 1;
        for (int i = 0; i < t->nbranches; ++i) {
          if (sign_of(b[i]) >= 0) continue;
          Rational need = -b[i] / pos[i];
          if (need > scale) scale = need;
        }
        for (int i = 0; i < t->nbranches; ++i) CHECK(sign_of(b[i] + scale * pos[i]) >= 0);
      }
    }
  }
}

TEST_CASE("pants curves ride the track disjointly from the measuring system",
          "[traintrack]") {
  for (const auto& fx : kFixtures) {
    auto pd = load_pants_fixture(fx.file);
    auto [right, left] = build_tracks(pd);
    auto sg = sigma_system(pd, right);
    INFO(fx.file);
    const int C = sg.curves;
    for (int j = 0; j < C; ++j) {
      auto wc = curve_weight(right, j);
      REQUIRE(satisfies_switches(right, wc));
      // disjoint from every pants curve of the system, including itself
      for (int k = 0; k < C; ++k) CHECK(intersect(sg, k, wc) == 0);
      // the transversal meets it once over a handle, twice between two pants
      bool handle = pd.curve[j][0] / 3 == pd.curve[j][1] / 3;
      CHECK(intersect(sg, C + j, wc) == (handle ? 1 : 2));
      (void)left;
    }
  }
}

TEST_CASE("measurements invert exactly on two hundred random weights", "[traintrack]") {
  std::mt19937 rng(0x7a11);
  for (const auto& fx : kFixtures) {
    auto pd = load_pants_fixture(fx.file);
    auto [right, left] = build_tracks(pd);
    INFO(fx.file);
    for (const TrainTrack* t : {&right, &left}) {
      auto sg = sigma_system(pd, *t);
      auto rec = recovery_matrix(*t, sg);
      auto basis = weight_space_basis(*t);
      for (int trial = 0; trial < 25; ++trial) {
        auto w = random_weight(basis, rng);
        REQUIRE(satisfies_switches(*t, w));
        auto iv = intersect_all(sg, w);
        CHECK(apply_recovery(rec, iv) == w);

        // linearity of the measurements on the doubled weight
        WeightVector dw(w.size());
        for (size_t i = 0; i < w.size(); ++i) dw[i] = w[i] * 2;
        auto div = intersect_all(sg, dw);
        for (size_t j = 0; j < iv.size(); ++j) CHECK(div[j] == iv[j] * 2);
      }
    }
  }
}

TEST_CASE("interior weights follow the pants closed forms", "[traintrack]") {
  std::mt19937 rng(0xf01d);
  const Rational half(1, 2);

  SECTION("three distinct cuffs: half the adjacent sums minus the opposite") {
    auto pd = load_pants_fixture("genus2");
    auto [right, left] = build_tracks(pd);
    auto sg = sigma_system(pd, right);
    auto w = random_weight(weight_space_basis(right), rng);
    auto iv = intersect_all(sg, w);
    for (int p = 0; p < pd.npants; ++p)
      for (int u = 0; u < 3; ++u) {
        std::array<Rational, 3> s;
        for (int v = 0; v < 3; ++v) s[v] = iv[pd.slot_curve[3 * p + v]];
        CHECK(w[right.pants[p].b[u]] == half * (s[u] + s[(u + 1) % 3] - s[(u + 2) % 3]));
      }
    (void)left;
  }

  SECTION("one marked point: connector, difference stem, half wrap") {
    auto pd = load_pants_fixture("torus2m");
    auto [right, left] = build_tracks(pd);
    auto sg = sigma_system(pd, right);
    auto w = random_weight(weight_space_basis(right), rng);
    auto iv = intersect_all(sg, w);
    for (int p = 0; p < pd.npants; ++p) {
      auto cuffs = pd.cuffs_of(p);
      Rational ix = iv[pd.slot_curve[cuffs[0]]], iy = iv[pd.slot_curve[cuffs[1]]];
      CHECK(w[right.pants[p].b[0]] == ix);
      CHECK(w[right.pants[p].b[1]] == iy - ix);
      CHECK(w[right.pants[p].b[2]] == half * (iy - ix));
    }
    (void)left;
  }

  SECTION("two marked points: the cuff measurement rides the stem") {
    auto pd = load_pants_fixture("g0n5");
    auto [right, left] = build_tracks(pd);
    auto sg = sigma_system(pd, right);
    auto w = random_weight(weight_space_basis(right), rng);
    auto iv = intersect_all(sg, w);
    for (int p : {0, 2}) {
      REQUIRE(right.pants[p].marks == 2);
      Rational ik = iv[pd.slot_curve[pd.cuffs_of(p)[0]]];
      CHECK(w[right.pants[p].b[0]] == ik);
      CHECK(w[right.pants[p].b[1]] == half * ik);
    }
    (void)left;
  }
}

TEST_CASE("the measurement map has full rank on the weight space", "[traintrack]") {
  for (const auto& fx : kFixtures) {
    auto pd = load_pants_fixture(fx.file);
    auto [right, left] = build_tracks(pd);
    INFO(fx.file);
    for (const TrainTrack* t : {&right, &left}) {
      auto sg = sigma_system(pd, *t);
      auto basis = weight_space_basis(*t);
      std::vector<std::vector<Rational>> cols;
      for (const auto& b : basis) cols.push_back(intersect_all(sg, b));
      CHECK(rational_rank(cols) == fx.dim);
    }
  }
}

TEST_CASE("corrupted crossing data fails the recovery audit", "[traintrack]") {
  auto pd = load_pants_fixture("genus2");
  auto [right, left] = build_tracks(pd);
  auto sg = sigma_system(pd, right);

  SECTION("a dropped transversal crossing") {
    auto bad = sg;
    bad.crossings[sg.curves].pop_back();
    CHECK_THROWS_MATCHES(recovery_matrix(right, bad), sf_error,
                         fails_with(errc::singular_system));
  }
  SECTION("a pants curve crossing moved to the wrong branch") {
    auto bad = sg;
    bad.crossings[0][0].first = right.collars[0].arc[0];
    CHECK_THROWS_MATCHES(recovery_matrix(right, bad), sf_error,
                         fails_with(errc::singular_system));
  }
  SECTION("a doubled multiplicity") {
    auto bad = sg;
    bad.crossings[1][0].second = 2;
    CHECK_THROWS_MATCHES(recovery_matrix(right, bad), sf_error,
                         fails_with(errc::singular_system));
  }
  (void)left;
}

TEST_CASE("weight and measurement vectors round trip through csv", "[traintrack]") {
  std::mt19937 rng(0xc57);
  auto pd = load_pants_fixture("torus2m");
  auto [right, left] = build_tracks(pd);
  auto sg = sigma_system(pd, right);
  auto w = random_weight(weight_space_basis(right), rng);

  std::istringstream win(weight_csv(right, w));
  CHECK(parse_weight_csv(right, win) == w);

  auto iv = intersect_all(sg, w);
  std::istringstream iin(intersection_csv(sg, iv));
  CHECK(parse_intersection_csv(sg, iin) == iv);

  std::istringstream missing("branch,weight\np0.conn,1\n");
  CHECK_THROWS_MATCHES(parse_weight_csv(right, missing), sf_error,
                       fails_with(errc::parse_error));
  (void)left;
}
