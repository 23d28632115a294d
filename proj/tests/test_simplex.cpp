#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "calibnash/rng.hpp"
#include "calibnash/simplex.hpp"
#include "support/oracles.hpp"

using namespace calibnash;

TEST_CASE("simplex point construction clamps drift and renormalizes") {
  const SimplexPoint p({0.5, 0.5 - 1e-13, 1e-13});
  CHECK(p.dim() == 3);
  double sum = 0;
  for (std::size_t i = 0; i < 3; ++i) sum += p[i];
  CHECK(sum == Catch::Approx(1.0).margin(1e-15));

  const SimplexPoint clamped({1.0 + 1e-13, -1e-13});
  CHECK(clamped[1] == 0.0);

  CHECK_THROWS_AS(SimplexPoint({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(SimplexPoint({1.5, -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(SimplexPoint({1.0}), std::invalid_argument);
}

TEST_CASE("l1 distance basics") {
  CHECK(l1_distance(SimplexPoint({1.0, 0.0}), SimplexPoint({0.0, 1.0})) == 2.0);
  const SimplexPoint q({0.3, 0.7});
  CHECK(l1_distance(q, q) == 0.0);
  CHECK(l1_distance(SimplexPoint({0.5, 0.5}), SimplexPoint({0.25, 0.75})) ==
        Catch::Approx(0.5).margin(1e-15));
  CHECK_THROWS_AS(l1_distance(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}),
                  std::invalid_argument);
}

TEST_CASE("projection onto the simplex") {
  SECTION("already feasible input is unchanged") {
    const SimplexPoint p = project_l2({0.3, 0.7});
    CHECK(p[0] == Catch::Approx(0.3).margin(1e-12));
    CHECK(p[1] == Catch::Approx(0.7).margin(1e-12));
  }
  SECTION("vertex-dominated input hits the vertex") {
    const SimplexPoint p = project_l2({2.0, 0.0});
    CHECK(p[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(p[1] == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("matches the brute-force grid minimizer") {
    const std::vector<double> x{1.2, 0.4, -0.2};
    const std::vector<double> expected = oracles::grid_project_l2_d3(x, 1e-3);
    const SimplexPoint p = project_l2(x);
    // oracle resolves to the 1e-3 lattice; exact answer is (0.9, 0.1, 0)
    CHECK(p[0] == Catch::Approx(expected[0]).margin(1e-3));
    CHECK(p[1] == Catch::Approx(expected[1]).margin(1e-3));
    CHECK(p[2] == Catch::Approx(expected[2]).margin(1e-3));
    CHECK(p[0] == Catch::Approx(0.9).margin(1e-12));
    CHECK(p[1] == Catch::Approx(0.1).margin(1e-12));
    CHECK(p[2] == 0.0);
  }
  SECTION("rejects non-finite input") {
    CHECK_THROWS_AS(project_l2({1.0, std::nan("")}), std::invalid_argument);
  }
}

TEST_CASE("projection is idempotent and l2 non-expansive") {
  const rng::Stream s = rng::substream(11, "proj_props");
  for (std::size_t n = 0; n < 300; ++n) {
    const std::size_t dim = 2 + n % 4;
    std::vector<double> a(dim), b(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      a[c] = s.with("a").uniform(n * dim + c, -2.0, 2.0);
      b[c] = s.with("b").uniform(n * dim + c, -2.0, 2.0);
    }
    const SimplexPoint pa = project_l2(a);
    const SimplexPoint pb = project_l2(b);
    const SimplexPoint paa = project_l2(pa.coords());
    CHECK(l1_distance(pa, paa) < 1e-12);

    const auto l2 = [](const std::vector<double>& u, const std::vector<double>& v) {
      double acc = 0;
      for (std::size_t i = 0; i < u.size(); ++i) acc += (u[i] - v[i]) * (u[i] - v[i]);
      return std::sqrt(acc);
    };
    CHECK(l2(pa.coords(), pb.coords()) <= l2(a, b) + 1e-12);
  }
}

TEST_CASE("outer product and marginals") {
  const SimplexPoint u({0.5, 0.5});
  const SimplexPoint v({1.0, 0.0});
  const JointDistribution p = outer(u, v);
  const auto [m1, m2] = marginals(p);
  CHECK(l1_distance(m1, u) < 1e-15);
  CHECK(l1_distance(m2, v) < 1e-15);

  const JointDistribution point_mass = outer(SimplexPoint::basis(2, 0), SimplexPoint::basis(2, 1));
  CHECK(point_mass.at(0, 1) == 1.0);
  CHECK(point_mass.at(0, 0) == 0.0);

  const JointDistribution uniform = outer(SimplexPoint::uniform(3), SimplexPoint::uniform(3));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(uniform.at(i, j) == Catch::Approx(1.0 / 9));
  }

  const JointDistribution mixed = outer(SimplexPoint({0.75, 0.25}), SimplexPoint({0.5, 0.5}));
  CHECK(mixed.mass()[0] == Catch::Approx(0.375));
  CHECK(mixed.mass()[1] == Catch::Approx(0.375));
  CHECK(mixed.mass()[2] == Catch::Approx(0.125));
  CHECK(mixed.mass()[3] == Catch::Approx(0.125));

  // direct sums: p = [0.5 on (0,0), 0.25 on (0,1), 0.25 on (1,0)]
  const JointDistribution direct(2, SimplexPoint({0.5, 0.25, 0.25, 0.0}));
  const auto [d1, d2] = marginals(direct);
  CHECK(d1[0] == Catch::Approx(0.75));
  CHECK(d1[1] == Catch::Approx(0.25));
  CHECK(d2[0] == Catch::Approx(0.75));
  CHECK(d2[1] == Catch::Approx(0.25));

  CHECK_THROWS_AS(outer(SimplexPoint::uniform(2), SimplexPoint::uniform(3)),
                  std::invalid_argument);
}

TEST_CASE("marginal extraction contracts the l1 distance") {
  const rng::Stream s = rng::substream(7, "contraction");
  for (std::size_t n = 0; n < 1000; ++n) {
    const std::size_t d = 2 + n % 3;
    const JointDistribution p(d, random_simplex_point(s.with("p"), d * d, n));
    const JointDistribution q(d, random_simplex_point(s.with("q"), d * d, n));
    const auto [p1, p2] = marginals(p);
    const auto [q1, q2] = marginals(q);
    const double joint = l1_distance(p.mass(), q.mass());
    CHECK(l1_distance(p1, q1) <= joint + 1e-12);
    CHECK(l1_distance(p2, q2) <= joint + 1e-12);
  }
}

TEST_CASE("product distributions obey the factor-wise l1 bound") {
  const rng::Stream s = rng::substream(8, "product_bound");
  for (std::size_t n = 0; n < 1000; ++n) {
    const std::size_t d = 2 + n % 3;
    const SimplexPoint u = random_simplex_point(s.with("u"), d, n);
    const SimplexPoint v = random_simplex_point(s.with("v"), d, n);
    const SimplexPoint u2 = random_simplex_point(s.with("u2"), d, n);
    const SimplexPoint v2 = random_simplex_point(s.with("v2"), d, n);
    CHECK(l1_distance(outer(u, v).mass(), outer(u2, v2).mass()) <=
          l1_distance(u, u2) + l1_distance(v, v2) + 1e-12);
  }
}

TEST_CASE("outcome embedding") {
  const Outcome x{2};
  const std::vector<double> v = x.one_hot(4);
  CHECK(v == std::vector<double>{0, 0, 1, 0});
  CHECK_THROWS_AS(x.one_hot(2), std::invalid_argument);
}
