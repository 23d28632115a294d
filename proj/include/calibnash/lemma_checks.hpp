#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "calibnash/calibration.hpp"
#include "calibnash/games.hpp"
#include "calibnash/reduction.hpp"
#include "calibnash/rng.hpp"
#include "calibnash/simplex.hpp"
#include "calibnash/triangulation.hpp"

namespace calibnash {

// Result of one property suite: trials run, violations found, and the
// tightest slack (bound minus observed value; negative means a violation).
struct CheckResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();

  bool pass() const noexcept { return violations == 0; }

  void record(double slack) {
    ++trials;
    if (slack < worst_slack) worst_slack = slack;
    if (slack < 0) ++violations;
  }
};

inline nlohmann::ordered_json to_json(const CheckResult& r) {
  return {{"name", r.name},
          {"trials", r.trials},
          {"violations", r.violations},
          {"worst_slack", r.worst_slack},
          {"pass", r.pass()}};
}

namespace detail {

// Payoff of `response` for `player` against `opponent`: the response is the
// row for player 1 and the column for player 2.
inline double response_payoff(const BimatrixGame& g, int player, const SimplexPoint& response,
                              const SimplexPoint& opponent) {
  return player == 1 ? g.payoff(1, response, opponent) : g.payoff(2, opponent, response);
}

inline BimatrixGame random_game(std::size_t d, const rng::Stream& s, std::uint64_t tag) {
  const std::size_t n = d * d;
  std::vector<double> u1(n);
  std::vector<double> u2(n);
  for (std::size_t e = 0; e < n; ++e) {
    u1[e] = s.uniform(tag * 2 * n + e);
    u2[e] = s.uniform(tag * 2 * n + n + e);
  }
  return BimatrixGame(d, std::move(u1), std::move(u2));
}

}  // namespace detail

// Partition of unity, reconstruction, and single-firing nearest vertex for
// random queries on each listed dimension.
inline CheckResult check_cover_identities(const std::vector<std::size_t>& dims,
                                          std::size_t queries_per_dim, std::uint64_t seed,
                                          int resolution = 4) {
  CheckResult r{"cover_identities"};
  for (const std::size_t dim : dims) {
    const GridTriangulation tri(dim, resolution);
    const rng::Stream qs = rng::substream(seed, "cover_queries", dim);
    for (std::size_t n = 0; n < queries_per_dim; ++n) {
      const SimplexPoint q = random_simplex_point(qs, dim, n);
      const TestWeights w = tri.locate(q);

      double total = 0;
      std::vector<double> recon(dim, 0.0);
      for (const auto& [id, wt] : w.entries) {
        total += wt;
        const SimplexPoint v = tri.vertex_point(id);
        for (std::size_t c = 0; c < dim; ++c) recon[c] += wt * v[c];
      }
      double slack = 1e-9 - std::abs(total - 1.0);
      slack = std::min(slack, 1e-9 - l1_distance(recon, q.coords()));
      slack = std::min(slack, w.entries.size() <= dim ? 0.0 : -1.0);

      // the selected nearest vertex fires alone: every other corner of the
      // containing cell is strictly farther, or tied but lexicographically
      // larger (full-grid enumeration is exercised by the acceptance suite)
      const VertexId near = tri.strong_indicator(q);
      const double dist = l1_distance(tri.vertex_point(near).coords(), q.coords());
      const auto near_key = tri.vertex_key(near);
      for (const auto& [id, wt] : w.entries) {
        if (id == near) continue;
        const double other = l1_distance(tri.vertex_point(id).coords(), q.coords());
        slack = std::min(slack, other - dist + 1e-12);
        if (std::abs(other - dist) <= 1e-12 && tri.vertex_key(id) < near_key) {
          slack = std::min(slack, -1.0);
        }
      }
      r.record(slack);
    }
  }
  return r;
}

// |U_i(p1,q) - U_i(p2,q)| <= ||p1 - p2||_1 for both players.
inline CheckResult check_payoff_lipschitz(std::size_t trials, std::uint64_t seed) {
  CheckResult r{"payoff_lipschitz"};
  const rng::Stream s = rng::substream(seed, "lipschitz");
  for (std::size_t n = 0; n < trials; ++n) {
    const std::size_t d = 2 + n % 4;
    const BimatrixGame g = detail::random_game(d, s.with("game"), n);
    const SimplexPoint p1 = random_simplex_point(s.with("p1"), d, n);
    const SimplexPoint p2 = random_simplex_point(s.with("p2"), d, n);
    const SimplexPoint q = random_simplex_point(s.with("q"), d, n);
    const double lip = l1_distance(p1, p2) + 1e-12;
    double slack = std::numeric_limits<double>::infinity();
    for (int player = 1; player <= 2; ++player) {
      const double diff = std::abs(g.payoff(player, p1, q) - g.payoff(player, p2, q));
      slack = std::min(slack, lip - diff);
    }
    r.record(slack);
  }
  return r;
}

// Smoothed best response loses at most 2*d*delta (plus Monte Carlo slack)
// against the exact best response.
inline CheckResult check_lemma1_payoff_loss(std::size_t trials, std::uint64_t seed,
                                            std::size_t samples,
                                            const std::vector<std::size_t>& dims = {2, 3}) {
  CheckResult r{"lemma1_smooth_br_payoff_loss"};
  const double deltas[] = {0.05, 0.1, 0.2};
  const rng::Stream s = rng::substream(seed, "lemma1");
  for (std::size_t n = 0; n < trials; ++n) {
    const std::size_t d = dims[n % dims.size()];
    const double delta = deltas[n % 3];
    const BimatrixGame g = detail::random_game(d, s.with("game"), n);
    const SimplexPoint q = random_simplex_point(s.with("q"), d, n);
    const double tol = 2.0 * static_cast<double>(d) * delta +
                       3.0 * std::sqrt(static_cast<double>(d) / static_cast<double>(samples));
    for (int player = 1; player <= 2; ++player) {
      const SimplexPoint exact = best_response(g, player, q);
      const SimplexPoint smooth =
          smooth_best_response(g, player, q, SmoothBRConfig{delta, samples, seed, n});
      const double loss = detail::response_payoff(g, player, exact, q) -
                          detail::response_payoff(g, player, smooth, q);
      r.record(tol - loss);
    }
  }
  return r;
}

// Lipschitz bound 2/delta^2 for the smoothed best response, checked in the
// regime 2 < d < 1/delta (d = 3, delta = 0.2).
inline CheckResult check_lemma2_br_lipschitz(std::size_t trials, std::uint64_t seed,
                                             std::size_t samples, std::size_t d = 3,
                                             double delta = 0.2) {
  CheckResult r{"lemma2_smooth_br_lipschitz"};
  const rng::Stream s = rng::substream(seed, "lemma2");
  const double tol_mc = 6.0 * std::sqrt(static_cast<double>(d) / static_cast<double>(samples));
  for (std::size_t n = 0; n < trials; ++n) {
    const BimatrixGame g = detail::random_game(d, s.with("game"), n);
    const SimplexPoint q = random_simplex_point(s.with("q"), d, n);
    // pair distances sweep several decades so the bound is exercised where
    // it can actually bind
    const double scale = std::pow(10.0, s.with("scale").uniform(n, -3.0, -0.3));
    std::vector<double> shifted = q.coords();
    for (std::size_t c = 0; c < d; ++c) {
      shifted[c] += s.with("dir").uniform(n * d + c, -scale, scale);
    }
    const SimplexPoint p = project_l2(std::move(shifted));
    const int player = 1 + static_cast<int>(n % 2);
    const SimplexPoint bp =
        smooth_best_response(g, player, p, SmoothBRConfig{delta, samples, seed, 2 * n});
    const SimplexPoint bq =
        smooth_best_response(g, player, q, SmoothBRConfig{delta, samples, seed, 2 * n + 1});
    const double bound = (2.0 / (delta * delta)) * l1_distance(p, q) + tol_mc;
    r.record(bound - l1_distance(bp, bq));
  }
  return r;
}

// Approximate fixed points of the smoothed best response are approximate
// equilibria: gap <= 2*residual + 2*d*delta + Monte Carlo slack.
inline CheckResult check_lemma3_fixed_point_gap(std::size_t trials, std::uint64_t seed,
                                                std::size_t samples,
                                                const std::vector<std::size_t>& dims = {2, 3},
                                                double delta = 0.2) {
  CheckResult r{"lemma3_fixed_point_to_ne"};
  const rng::Stream s = rng::substream(seed, "lemma3");
  for (std::size_t n = 0; n < trials; ++n) {
    const std::size_t d = dims[n % dims.size()];
    const BimatrixGame g = detail::random_game(d, s.with("game"), n);

    // joints: products, uniform blends of products, point masses, raw random
    const SimplexPoint u = random_simplex_point(s.with("u"), d, n);
    const SimplexPoint v = random_simplex_point(s.with("v"), d, n);
    std::vector<double> mass = outer(u, v).mass().coords();
    switch (n % 4) {
      case 0: break;
      case 1: {
        for (double& m : mass) m = 0.5 * m + 0.5 / static_cast<double>(d * d);
        break;
      }
      case 2: {
        std::fill(mass.begin(), mass.end(), 0.0);
        mass[s.with("cell").index(n, d * d)] = 1.0;
        break;
      }
      case 3: {
        const SimplexPoint raw = random_simplex_point(s.with("raw"), d * d, n);
        mass = raw.coords();
        break;
      }
    }
    const JointDistribution p(d, SimplexPoint(std::move(mass)));

    const auto [row_marginal, col_marginal] = marginals(p);
    const SmoothBRConfig cfg{delta, samples, seed, n};
    const SimplexPoint x = smooth_best_response(g, 1, col_marginal, cfg);
    const SimplexPoint y = smooth_best_response(g, 2, row_marginal, cfg);
    const double residual = l1_distance(p.mass(), outer(x, y).mass());
    const double gap = ne_gap(g, x, y);
    const double tau = 3.0 * std::sqrt(static_cast<double>(d) / static_cast<double>(samples));
    r.record(2.0 * residual + 2.0 * static_cast<double>(d) * delta + 4.0 * tau - gap);
  }
  return r;
}

// ||[q]_i - [p]_i||_1 <= ||q - p||_1 for both marginals.
inline CheckResult check_marginal_contraction(std::size_t trials, std::uint64_t seed) {
  CheckResult r{"marginal_contraction"};
  const rng::Stream s = rng::substream(seed, "marginal");
  for (std::size_t n = 0; n < trials; ++n) {
    const std::size_t d = 2 + n % 3;
    const JointDistribution p(d, random_simplex_point(s.with("p"), d * d, n));
    const JointDistribution q(d, random_simplex_point(s.with("q"), d * d, n));
    const auto [p1, p2] = marginals(p);
    const auto [q1, q2] = marginals(q);
    const double joint = l1_distance(p.mass(), q.mass()) + 1e-12;
    r.record(std::min(joint - l1_distance(p1, q1), joint - l1_distance(p2, q2)));
  }
  return r;
}

// ||u x v - u' x v'||_1 <= ||u - u'||_1 + ||v - v'||_1.
inline CheckResult check_product_l1_bound(std::size_t trials, std::uint64_t seed) {
  CheckResult r{"product_distribution_l1"};
  const rng::Stream s = rng::substream(seed, "product");
  for (std::size_t n = 0; n < trials; ++n) {
    const std::size_t d = 2 + n % 3;
    const SimplexPoint u = random_simplex_point(s.with("u"), d, n);
    const SimplexPoint v = random_simplex_point(s.with("v"), d, n);
    const SimplexPoint u2 = random_simplex_point(s.with("u2"), d, n);
    const SimplexPoint v2 = random_simplex_point(s.with("v2"), d, n);
    const double lhs = l1_distance(outer(u, v).mass(), outer(u2, v2).mass());
    r.record(l1_distance(u, u2) + l1_distance(v, v2) + 1e-12 - lhs);
  }
  return r;
}

// Weak and strong rates stay inside [0, 2] under fuzzed forecast/outcome
// sequences, checked after every round.
inline CheckResult check_rate_bounds(std::size_t total_rounds, std::uint64_t seed) {
  CheckResult r{"rate_bounds"};
  const rng::Stream s = rng::substream(seed, "rate_fuzz");
  const std::size_t blocks = 20;
  const std::size_t per_block = std::max<std::size_t>(1, total_rounds / blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t dim = 2 + s.with("dim").index(b, 3);
    const int k = 1 + static_cast<int>(s.with("res").index(b, 5));
    const auto tri = std::make_shared<GridTriangulation>(dim, k);
    BiasLedger weak(tri);
    BiasLedger strong(tri);
    const rng::Stream fs = s.with("forecast").with(b);
    const rng::Stream os = s.with("outcome").with(b);
    for (std::size_t t = 0; t < per_block; ++t) {
      const SimplexPoint q = random_simplex_point(fs, dim, t);
      Outcome x{0};
      if (t % 3 == 0) {
        // adversarial: hit the least-trusted coordinate
        for (std::size_t c = 1; c < dim; ++c) {
          if (q[c] < q[x.index]) x.index = c;
        }
      } else {
        x.index = os.index(t, dim);
      }
      weak.update(q, x);
      strong.update_nearest(q, x);
      const double wr = weak.weak_rate();
      const double sr = strong.weak_rate();
      r.record(std::min({wr + 1e-12, 2.0 + 1e-12 - wr, sr + 1e-12, 2.0 + 1e-12 - sr}));
    }
  }
  return r;
}

}  // namespace calibnash
