#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "calibnash/games.hpp"
#include "calibnash/rng.hpp"
#include "calibnash/simplex.hpp"
#include "support/oracles.hpp"

using namespace calibnash;

namespace {

BimatrixGame random_game(std::size_t d, std::uint64_t seed) {
  return generate_game(GameKind::random, d, seed);
}

}  // namespace

TEST_CASE("game construction validates entries") {
  CHECK_THROWS_WITH(BimatrixGame(2, {1, 0, 0, 1.5}, {0, 1, 1, 0}),
                    Catch::Matchers::ContainsSubstring("U1[1][1]"));
  CHECK_THROWS_AS(BimatrixGame(2, {1, 0, 0}, {0, 1, 1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(BimatrixGame(1, {1}, {0}), std::invalid_argument);
}

TEST_CASE("payoff evaluation") {
  const BimatrixGame mp = generate_game(GameKind::matching_pennies, 2, 0);
  SECTION("pure profiles read the matrix") {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(mp.payoff(1, SimplexPoint::basis(2, i), SimplexPoint::basis(2, j)) ==
              mp.entry(1, i, j));
        CHECK(mp.payoff(2, SimplexPoint::basis(2, i), SimplexPoint::basis(2, j)) ==
              mp.entry(2, i, j));
      }
    }
  }
  SECTION("uniform against uniform is the matrix mean") {
    const BimatrixGame g = random_game(3, 5);
    const SimplexPoint u = SimplexPoint::uniform(3);
    double mean = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) mean += g.entry(1, i, j);
    }
    mean /= 9.0;
    CHECK(g.payoff(1, u, u) == Catch::Approx(mean));
  }
  SECTION("mixed pennies value") {
    const SimplexPoint half({0.5, 0.5});
    CHECK(mp.payoff(1, half, half) == Catch::Approx(0.5));
  }
}

TEST_CASE("payoffs are 1-Lipschitz in l1") {
  const rng::Stream s = rng::substream(21, "lipschitz");
  for (std::size_t n = 0; n < 1000; ++n) {
    const std::size_t d = 2 + n % 3;
    const BimatrixGame g = random_game(d, 100 + n);
    const SimplexPoint p1 = random_simplex_point(s.with("p1"), d, n);
    const SimplexPoint p2 = random_simplex_point(s.with("p2"), d, n);
    const SimplexPoint q = random_simplex_point(s.with("q"), d, n);
    for (int player = 1; player <= 2; ++player) {
      CHECK(std::abs(g.payoff(player, p1, q) - g.payoff(player, p2, q)) <=
            l1_distance(p1, p2) + 1e-12);
    }
  }
}

TEST_CASE("best response") {
  const BimatrixGame coord = generate_game(GameKind::coordination, 2, 0);
  SECTION("argmax of the expected payoff") {
    const SimplexPoint r = best_response(coord, 1, SimplexPoint({0.9, 0.1}));
    CHECK(r[0] == 1.0);
  }
  SECTION("ties go to the lowest index") {
    const SimplexPoint r = best_response(coord, 1, SimplexPoint({0.5, 0.5}));
    CHECK(r[0] == 1.0);
  }
  SECTION("raw vectors are projected first") {
    const std::vector<double> raw{1.3, -0.1};
    const SimplexPoint projected = project_l2(raw);
    CHECK(projected[0] == Catch::Approx(1.0).margin(1e-12));
    const SimplexPoint via_raw = best_response(coord, 1, raw);
    const SimplexPoint via_point = best_response(coord, 1, projected);
    CHECK(l1_distance(via_raw, via_point) == 0.0);
  }
  SECTION("column player responds through its own matrix") {
    const BimatrixGame shifted = generate_game(GameKind::shifted, 3, 0);
    // row plays action 1, column's cyclic mismatch prefers column 2
    const SimplexPoint r = best_response(shifted, 2, SimplexPoint::basis(3, 1));
    CHECK(r[2] == 1.0);
  }
}

TEST_CASE("best response is invariant to positive affine payoff changes") {
  const rng::Stream s = rng::substream(22, "affine");
  for (std::size_t n = 0; n < 200; ++n) {
    const std::size_t d = 2 + n % 3;
    const BimatrixGame g = random_game(d, 300 + n);
    const SimplexPoint q = random_simplex_point(s, d, n);
    // c * U + b with c > 0, kept inside [0,1]
    const double c = 0.3 + 0.5 * s.with("c").uniform(n);
    const double b = 0.1 * s.with("b").uniform(n);
    std::vector<double> u1 = g.matrix(1);
    std::vector<double> u2 = g.matrix(2);
    for (double& e : u1) e = c * e + b;
    for (double& e : u2) e = c * e + b;
    const BimatrixGame scaled(d, std::move(u1), std::move(u2));
    for (int player = 1; player <= 2; ++player) {
      CHECK(best_response_index(g, player, q) == best_response_index(scaled, player, q));
    }
  }
}

TEST_CASE("smooth best response") {
  SECTION("constant integrand collapses to the pure response") {
    // row 0 strictly dominates everywhere, so every cube draw agrees
    const BimatrixGame dom(2, {1, 1, 0, 0}, {0.5, 0.5, 0.5, 0.5});
    const SimplexPoint r = smooth_best_response(dom, 1, SimplexPoint({0.5, 0.5}),
                                                SmoothBRConfig{0.2, 2000, 3, 0});
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 0.0);
  }
  SECTION("symmetric query on the identity game stays centered") {
    const BimatrixGame coord = generate_game(GameKind::coordination, 2, 0);
    const std::size_t M = 100000;
    const SimplexPoint r = smooth_best_response(coord, 1, SimplexPoint({0.5, 0.5}),
                                                SmoothBRConfig{0.1, M, 4, 0});
    const double tol = 3.0 / std::sqrt(static_cast<double>(M));
    CHECK(r[0] == Catch::Approx(0.5).margin(tol));
  }
  SECTION("quadrature oracle fixes the off-center value") {
    const BimatrixGame coord = generate_game(GameKind::coordination, 2, 0);
    const double delta = 0.2;
    const SimplexPoint q({0.5 + delta / 2, 0.5 - delta / 2});
    const std::vector<double> quad =
        oracles::quadrature_smooth_br_d2(coord, 1, q.coords(), delta, 2001);
    // exact mass: the perturbation difference is triangular on [-2d, 2d],
    // and P[W < d] = 7/8
    CHECK(quad[0] == Catch::Approx(7.0 / 8.0).margin(2e-3));
    const std::size_t M = 100000;
    const SimplexPoint mc = smooth_best_response(coord, 1, q, SmoothBRConfig{delta, M, 5, 0});
    const double tol = 3.0 / std::sqrt(static_cast<double>(M));
    CHECK(mc[0] == Catch::Approx(quad[0]).margin(tol));
  }
  SECTION("deterministic given seed, sensitive to it") {
    // the identity game splits the cube at the diagonal, so different seeds
    // cannot land on identical counts
    const BimatrixGame g = generate_game(GameKind::coordination, 2, 0);
    const SimplexPoint q = SimplexPoint::uniform(2);
    const SmoothBRConfig cfg{0.2, 5001, 17, 3};
    const SimplexPoint a = smooth_best_response(g, 1, q, cfg);
    const SimplexPoint b = smooth_best_response(g, 1, q, cfg);
    CHECK(l1_distance(a, b) == 0.0);
    SmoothBRConfig other = cfg;
    other.seed = 18;
    CHECK(l1_distance(a, smooth_best_response(g, 1, q, other)) > 0.0);
  }
  SECTION("validates delta") {
    const BimatrixGame g = random_game(2, 1);
    CHECK_THROWS_AS(smooth_best_response(g, 1, SimplexPoint::uniform(2),
                                         SmoothBRConfig{1.5, 10, 0, 0}),
                    std::invalid_argument);
  }
}

TEST_CASE("smoothed response Lipschitz bound, d=2 quadrature sanity") {
  // two actions sit outside the bound's stated regime; the dense-grid oracle
  // still shows the 2/delta^2 modulus holds there with room to spare
  const BimatrixGame coord = generate_game(GameKind::coordination, 2, 0);
  const double delta = 0.2;
  const rng::Stream s = rng::substream(29, "lip_quad");
  for (std::size_t n = 0; n < 20; ++n) {
    const SimplexPoint q = random_simplex_point(s.with("q"), 2, n);
    const double shift = s.with("shift").uniform(n, -0.2, 0.2);
    const SimplexPoint p = project_l2({q[0] + shift, q[1] - shift});
    const std::vector<double> bq = oracles::quadrature_smooth_br_d2(coord, 1, q.coords(), delta, 801);
    const std::vector<double> bp = oracles::quadrature_smooth_br_d2(coord, 1, p.coords(), delta, 801);
    const double lhs = l1_distance(bp, bq);
    CHECK(lhs <= (2.0 / (delta * delta)) * l1_distance(p, q) + 5e-3);
  }
}

TEST_CASE("equilibrium gap") {
  const BimatrixGame mp = generate_game(GameKind::matching_pennies, 2, 0);
  SECTION("mixed equilibrium has zero gap") {
    CHECK(ne_gap(mp, SimplexPoint({0.5, 0.5}), SimplexPoint({0.5, 0.5})) ==
          Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("pure profile exposes the full deviation") {
    CHECK(ne_gap(mp, SimplexPoint::basis(2, 0), SimplexPoint::basis(2, 0)) == Catch::Approx(1.0));
  }
  SECTION("matches the independent deviation scan on random games") {
    const rng::Stream s = rng::substream(23, "gap");
    for (std::size_t n = 0; n < 300; ++n) {
      const BimatrixGame g = random_game(3, 700 + n);
      const SimplexPoint x = random_simplex_point(s.with("x"), 3, n);
      const SimplexPoint y = random_simplex_point(s.with("y"), 3, n);
      CHECK(ne_gap(g, x, y) == Catch::Approx(oracles::deviation_gap(g, x, y)).margin(1e-12));
    }
  }
}

TEST_CASE("game generation") {
  const BimatrixGame mp = generate_game(GameKind::matching_pennies, 2, 0);
  CHECK(mp.matrix(1) == std::vector<double>{1, 0, 0, 1});
  CHECK(mp.matrix(2) == std::vector<double>{0, 1, 1, 0});
  CHECK_THROWS_AS(generate_game(GameKind::matching_pennies, 3, 0), std::invalid_argument);

  const BimatrixGame coord = generate_game(GameKind::coordination, 2, 0);
  CHECK(coord.matrix(1) == std::vector<double>{1, 0, 0, 1});
  CHECK(coord.matrix(2) == std::vector<double>{1, 0, 0, 1});

  const BimatrixGame r1 = generate_game(GameKind::random, 3, 7);
  const BimatrixGame r2 = generate_game(GameKind::random, 3, 7);
  CHECK(r1.matrix(1) == r2.matrix(1));
  CHECK(r1.matrix(2) == r2.matrix(2));
  const BimatrixGame r3 = generate_game(GameKind::random, 3, 8);
  CHECK(r1.matrix(1) != r3.matrix(1));

  CHECK_THROWS_AS(parse_game_kind("zero_sum"), std::invalid_argument);
  CHECK(parse_game_kind("shifted") == GameKind::shifted);
}

TEST_CASE("game files") {
  SECTION("canonical round trip is byte-identical modulo whitespace") {
    const BimatrixGame g = generate_game(GameKind::matching_pennies, 2, 0);
    std::stringstream first;
    save_game(first, g);
    std::stringstream second;
    save_game(second, load_game(first));
    std::string a = first.str();
    std::string b = second.str();
    const auto strip = [](std::string& s) {
      s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return std::isspace(c); }), s.end());
    };
    strip(a);
    strip(b);
    CHECK(a == b);
  }
  SECTION("loader names the offending cell") {
    std::stringstream bad("{\"d\": 2, \"U1\": [[1, 0], [0, 1.5]], \"U2\": [[0,1],[1,0]]}");
    CHECK_THROWS_WITH(load_game(bad), Catch::Matchers::ContainsSubstring("U1[1][1]"));
  }
  SECTION("loader rejects shape mismatches") {
    std::stringstream bad("{\"d\": 2, \"U1\": [[1, 0, 0], [0, 1, 0]], \"U2\": [[0,1],[1,0]]}");
    CHECK_THROWS_WITH(load_game(bad), Catch::Matchers::ContainsSubstring("U1"));
    std::stringstream missing("{\"d\": 2, \"U1\": [[1,0],[0,1]]}");
    CHECK_THROWS_AS(load_game(missing), std::invalid_argument);
  }
  SECTION("loader rejects malformed JSON") {
    std::stringstream bad("{\"d\": 2, ");
    CHECK_THROWS_WITH(load_game(bad), Catch::Matchers::ContainsSubstring("malformed JSON"));
  }
}
