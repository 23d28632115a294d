#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "calibnash/rng.hpp"
#include "calibnash/simplex.hpp"
#include "calibnash/triangulation.hpp"

namespace calibnash {

// Accumulated bias B_p = sum_t w_p(t) (p_t - X_t) and weight W_p = sum_t w_p(t)
// for one grid vertex.
struct VertexBias {
  std::vector<double> bias;
  double weight = 0;
};

// Per-vertex bias accounting over a fixed triangulation. One instance should
// stick to a single test family: update() spreads each round over the
// containing cell's barycentric weights, update_nearest() puts unit weight on
// the nearest vertex. The running sum of bias norms is maintained
// incrementally so rates are O(1) per query.
class BiasLedger {
 public:
  explicit BiasLedger(std::shared_ptr<const GridTriangulation> tri) : tri_(std::move(tri)) {
    if (!tri_) throw std::invalid_argument("BiasLedger: null triangulation");
  }

  const GridTriangulation& triangulation() const noexcept { return *tri_; }
  std::shared_ptr<const GridTriangulation> triangulation_ptr() const noexcept { return tri_; }

  void update(const SimplexPoint& forecast, Outcome outcome) {
    apply(tri_->locate(forecast), forecast, outcome);
  }

  void update_nearest(const SimplexPoint& forecast, Outcome outcome) {
    TestWeights w;
    w.entries.emplace_back(tri_->strong_indicator(forecast), 1.0);
    apply(w, forecast, outcome);
  }

  void apply(const TestWeights& weights, const SimplexPoint& forecast, Outcome outcome) {
    const std::size_t dim = tri_->dim();
    if (forecast.dim() != dim) throw std::invalid_argument("BiasLedger: forecast dimension");
    if (outcome.index >= dim) throw std::invalid_argument("BiasLedger: outcome out of range");
    for (const auto& [id, wt] : weights.entries) {
      VertexBias& e = store_[id];
      if (e.bias.empty()) e.bias.assign(dim, 0.0);
      norm_sum_ -= l1_norm(e.bias);
      for (std::size_t c = 0; c < dim; ++c) {
        const double x = (c == outcome.index) ? 1.0 : 0.0;
        e.bias[c] += wt * (forecast[c] - x);
      }
      norm_sum_ += l1_norm(e.bias);
      e.weight += wt;
      weight_sum_ += wt;
    }
    ++t_;
  }

  std::size_t rounds() const noexcept { return t_; }
  double total_weight() const noexcept { return weight_sum_; }

  // (1/t) sum_p ||B_p||_1, from the incrementally maintained norm sum.
  double weak_rate() const {
    if (t_ == 0) throw std::logic_error("BiasLedger::weak_rate: no rounds observed");
    return std::max(norm_sum_, 0.0) / static_cast<double>(t_);
  }

  // Same quantity rescanned from the vertex store (id order, deterministic).
  double weak_rate_exact() const {
    if (t_ == 0) throw std::logic_error("BiasLedger::weak_rate_exact: no rounds observed");
    double s = 0;
    for (const VertexId id : touched()) s += l1_norm(store_.at(id).bias);
    return s / static_cast<double>(t_);
  }

  const VertexBias* find(VertexId id) const {
    const auto it = store_.find(id);
    return it == store_.end() ? nullptr : &it->second;
  }

  std::vector<VertexId> touched() const {
    std::vector<VertexId> ids;
    ids.reserve(store_.size());
    for (const auto& [id, e] : store_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  std::size_t touched_count() const noexcept { return store_.size(); }

 private:
  std::shared_ptr<const GridTriangulation> tri_;
  std::unordered_map<VertexId, VertexBias> store_;
  std::size_t t_ = 0;
  double norm_sum_ = 0;
  double weight_sum_ = 0;
};

// (1/T) sum_p ||sum_t I_p(p_t)(p_t - X_t)||_1 with nearest-vertex indicators.
inline double strong_rate(const std::vector<SimplexPoint>& forecasts,
                          const std::vector<Outcome>& outcomes, const GridTriangulation& tri) {
  if (forecasts.empty()) throw std::invalid_argument("strong_rate: empty history");
  if (forecasts.size() != outcomes.size()) {
    throw std::invalid_argument("strong_rate: forecast/outcome length mismatch");
  }
  const std::size_t dim = tri.dim();
  std::unordered_map<VertexId, std::vector<double>> acc;
  for (std::size_t t = 0; t < forecasts.size(); ++t) {
    const VertexId id = tri.strong_indicator(forecasts[t]);
    auto& bias = acc[id];
    if (bias.empty()) bias.assign(dim, 0.0);
    const std::size_t hit = outcomes[t].index;
    if (hit >= dim) throw std::invalid_argument("strong_rate: outcome out of range");
    for (std::size_t c = 0; c < dim; ++c) {
      bias[c] += forecasts[t][c] - (c == hit ? 1.0 : 0.0);
    }
  }
  std::vector<VertexId> ids;
  ids.reserve(acc.size());
  for (const auto& [id, bias] : acc) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  double s = 0;
  for (const VertexId id : ids) s += l1_norm(acc.at(id));
  return s / static_cast<double>(forecasts.size());
}

struct CalibrationReport {
  double weak_rate = 0;
  double strong_rate = 0;
  std::size_t rounds = 0;
  double precision = 0;
  // Per-vertex share ||B_p||_1 / T, descending, vertex id attached.
  std::vector<std::pair<VertexId, double>> contributions;
};

inline CalibrationReport make_report(const BiasLedger& ledger,
                                     const std::vector<SimplexPoint>& forecasts,
                                     const std::vector<Outcome>& outcomes) {
  CalibrationReport r;
  r.rounds = ledger.rounds();
  r.precision = ledger.triangulation().cell_diameter_bound();
  r.weak_rate = ledger.weak_rate();
  r.strong_rate = strong_rate(forecasts, outcomes, ledger.triangulation());
  for (const VertexId id : ledger.touched()) {
    r.contributions.emplace_back(id, l1_norm(ledger.find(id)->bias) / static_cast<double>(r.rounds));
  }
  std::stable_sort(r.contributions.begin(), r.contributions.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return r;
}

// Online forecaster: strict alternation of next() and observe().
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual SimplexPoint next() = 0;
  virtual void observe(Outcome x) = 0;
  virtual double last_residual() const { return 0.0; }
};

struct FixedPointOptions {
  double damping = 0.5;
  double tolerance = 1e-6;
  int max_iterations = 200;
  int restarts = 8;
  // l1 ball around the starting point the search may not leave. The map has
  // a continuum of fixed points (every untouched region is one); locality is
  // what makes the chosen one cancel accumulated bias instead of fleeing it.
  double trust_radius = std::numeric_limits<double>::infinity();
};

struct FixedPointResult {
  SimplexPoint point;
  double residual = 0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// Dense linear solve with partial pivoting; nullopt when near-singular.
inline std::optional<std::vector<double>> solve_linear(std::vector<std::vector<double>> a,
                                                       std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-13) return std::nullopt;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

}  // namespace detail

// One application of the bias-correction map
//   Phi(q) = project( q - step * sum_{p in V(q)} w_p(q) B_p / t ).
// Phi is continuous on the simplex (barycentric weights are continuous and
// the projection is non-expansive), so a fixed point exists.
inline SimplexPoint bias_correction_map(const BiasLedger& ledger, const SimplexPoint& q,
                                        double step) {
  const std::size_t dim = ledger.triangulation().dim();
  const double t = static_cast<double>(std::max<std::size_t>(ledger.rounds(), 1));
  std::vector<double> z = q.coords();
  for (const auto& [id, wt] : ledger.triangulation().locate(q).entries) {
    if (const VertexBias* e = ledger.find(id)) {
      for (std::size_t c = 0; c < dim; ++c) z[c] -= step * wt * e->bias[c] / t;
    }
  }
  return project_l2(std::move(z));
}

// Damped iteration q <- (1-damping) q + damping Phi(q) hunting for
// ||q - Phi(q)||_1 <= tol. The damping halves whenever the residual stalls,
// which settles the cell-boundary cycling the piecewise-linear map can
// otherwise fall into. On non-convergence, up to `restarts` random touched
// vertices are tried; a restart replaces the warm-start answer only by
// actually converging, so an unconverged run cannot teleport the forecast
// into fresh territory. Never aborts: the best warm-start iterate is
// returned with its residual and a convergence flag.
inline FixedPointResult fixed_point_forecast(const BiasLedger& ledger, double step, double tol,
                                             int max_iter, const rng::Stream& restart_stream,
                                             const FixedPointOptions& opt = {},
                                             std::optional<SimplexPoint> start = {},
                                             std::optional<SimplexPoint> trust_center = {}) {
  if (!(step > 0) || step > 1) {
    throw std::invalid_argument("fixed_point_forecast: step must lie in (0, 1]");
  }
  if (!(tol > 0)) throw std::invalid_argument("fixed_point_forecast: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("fixed_point_forecast: max_iter must be >= 1");

  const std::size_t dim = ledger.triangulation().dim();
  const double t = static_cast<double>(std::max<std::size_t>(ledger.rounds(), 1));

  // Within one cell the map is affine in the barycentric weights: q is a
  // fixed point with no boundary clamping iff the local bias field is a
  // multiple of the all-ones vector. That is a small linear system in
  // (weights, multiplier); a feasible solution is verified against the true
  // map before being trusted.
  const auto try_exact = [&](const SimplexPoint& q) -> std::optional<SimplexPoint> {
    const TestWeights cell = ledger.triangulation().locate(q);
    const std::size_t m = cell.entries.size();
    std::vector<std::vector<double>> columns;  // step * B_j / t per corner
    columns.reserve(m);
    for (const auto& [id, wt] : cell.entries) {
      const VertexBias* e = ledger.find(id);
      std::vector<double> col(dim, 0.0);
      if (e != nullptr) {
        for (std::size_t c = 0; c < dim; ++c) col[c] = step * e->bias[c] / t;
      }
      columns.push_back(std::move(col));
    }
    // normal equations of: sum_j w_j col_j - c * 1 = 0 (dim rows), sum w = 1
    const std::size_t n = m + 1;
    std::vector<std::vector<double>> ata(n, std::vector<double>(n, 0.0));
    std::vector<double> atb(n, 0.0);
    const auto dot = [&](std::size_t a, std::size_t b) {
      if (a < m && b < m) {
        double s = 0;
        for (std::size_t c = 0; c < dim; ++c) s += columns[a][c] * columns[b][c];
        return s;
      }
      if (a == m && b == m) return static_cast<double>(dim);
      const std::size_t j = a < m ? a : b;
      double s = 0;
      for (std::size_t c = 0; c < dim; ++c) s -= columns[j][c];
      return s;
    };
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) ata[a][b] = dot(a, b);
    }
    // KKT system: least squares on the field equations, exact unit mass
    for (std::size_t a = 0; a < m; ++a) ata[a].push_back(1.0);
    ata[m].push_back(0.0);
    std::vector<double> row(n + 1, 0.0);
    for (std::size_t a = 0; a < m; ++a) row[a] = 1.0;
    ata.push_back(std::move(row));
    atb.push_back(1.0);

    const auto solved = detail::solve_linear(std::move(ata), std::move(atb));
    if (!solved) return std::nullopt;
    // Negative weights mean the in-cell fixed point lies in a neighboring
    // cell; the extrapolated point is still the affine continuation, so it
    // serves as a Newton-style hop across the boundary after projection.
    std::vector<double> point(dim, 0.0);
    std::size_t j = 0;
    for (const auto& [id, wt] : cell.entries) {
      const double w = (*solved)[j++];
      if (!std::isfinite(w) || std::abs(w) > 10.0) return std::nullopt;
      const SimplexPoint v = ledger.triangulation().vertex_point(id);
      for (std::size_t c = 0; c < dim; ++c) point[c] += w * v[c];
    }
    for (const double c : point) {
      if (!std::isfinite(c)) return std::nullopt;
    }
    std::vector<double> scratch;
    project_l2_inplace(point, scratch);
    return SimplexPoint(std::move(point));
  };

  const SimplexPoint anchor =
      trust_center ? *trust_center : start.value_or(SimplexPoint::uniform(dim));

  // pull a point back onto the trust ball around the anchor
  const auto clamp_to_trust = [&](const SimplexPoint& p) -> SimplexPoint {
    const double dist = l1_distance(p, anchor);
    if (dist <= opt.trust_radius) return p;
    const double f = opt.trust_radius / dist;
    std::vector<double> pulled(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      pulled[c] = anchor[c] + f * (p[c] - anchor[c]);
    }
    return SimplexPoint(std::move(pulled));
  };

  const auto solve_from = [&](SimplexPoint q) {
    q = clamp_to_trust(q);
    SimplexPoint phi = bias_correction_map(ledger, q, step);
    double r = l1_distance(q, phi);
    FixedPointResult best{q, r, 1, r <= tol};
    double lambda = opt.damping;
    for (int it = 1; it < max_iter && !best.converged; ++it) {
      if (const auto cand = try_exact(q)) {
        if (l1_distance(*cand, anchor) <= opt.trust_radius) {
          const double rc = l1_distance(*cand, bias_correction_map(ledger, *cand, step));
          if (rc < best.residual) best = FixedPointResult{*cand, rc, it, rc <= tol};
          if (best.converged) break;
          if (rc < r) {  // hop to the affine solution and keep walking
            q = *cand;
            phi = bias_correction_map(ledger, q, step);
            r = rc;
            continue;
          }
        }
      }
      std::vector<double> blend(dim);
      for (std::size_t c = 0; c < dim; ++c) blend[c] = (1.0 - lambda) * q[c] + lambda * phi[c];
      const double prev = r;
      q = clamp_to_trust(SimplexPoint(std::move(blend)));
      phi = bias_correction_map(ledger, q, step);
      r = l1_distance(q, phi);
      if (r < best.residual) best = FixedPointResult{q, r, it + 1, r <= tol};
      if (r > prev) {
        lambda = std::max(lambda * 0.5, 1.0 / 32);
      } else if (r < 0.5 * prev) {
        lambda = std::min(lambda * 2.0, opt.damping);
      }
    }
    return best;
  };

  const FixedPointResult primary = solve_from(start.value_or(anchor));
  // restarts escape genuinely stuck basins; a near-miss is not worth the
  // eight extra solves
  if (primary.converged || primary.residual <= 100 * tol) return primary;
  const std::vector<VertexId> ids = ledger.touched();
  for (int attempt = 0; attempt < opt.restarts && !ids.empty(); ++attempt) {
    const VertexId id = ids[restart_stream.index(attempt, ids.size())];
    const FixedPointResult alt = solve_from(ledger.triangulation().vertex_point(id));
    if (alt.converged) return alt;
  }
  return primary;
}

// Default online forecaster: each round forecasts an approximate fixed point
// of the bias-correction map with step 1/sqrt(t).
class FixedPointForecaster : public Forecaster {
 public:
  FixedPointForecaster(std::shared_ptr<const GridTriangulation> tri, std::uint64_t seed,
                       FixedPointOptions opt = {})
      : ledger_(std::move(tri)), seed_(seed), opt_(opt) {}

  SimplexPoint next() override {
    if (pending_) throw std::logic_error("FixedPointForecaster: next() called twice");
    const std::size_t t = ledger_.rounds();
    const double step = 1.0 / std::sqrt(static_cast<double>(t + 1));
    // early rounds roam freely; later rounds stay within a shrinking ball
    // around the running outcome frequency, which is where accumulated bias
    // can actually be cancelled
    FixedPointOptions opt = opt_;
    opt.trust_radius = std::max(2.0 * ledger_.triangulation().cell_diameter_bound(),
                                8.0 / std::sqrt(static_cast<double>(t + 1)));
    std::optional<SimplexPoint> center;
    if (t > 0) {
      std::vector<double> mean(counts_);
      for (double& c : mean) c /= static_cast<double>(t);
      center = SimplexPoint(std::move(mean));
    }
    FixedPointResult res =
        fixed_point_forecast(ledger_, step, opt_.tolerance, opt_.max_iterations,
                             rng::substream(seed_, "fp_restart", t), opt,
                             last_ ? std::optional<SimplexPoint>(*last_) : std::nullopt, center);
    last_ = res.point;
    residual_ = res.residual;
    converged_ = res.converged;
    pending_ = true;
    return res.point;
  }

  void observe(Outcome x) override {
    if (!pending_) throw std::logic_error("FixedPointForecaster: observe() without next()");
    if (counts_.empty()) counts_.assign(ledger_.triangulation().dim(), 0.0);
    counts_[x.index] += 1.0;
    ledger_.update(*last_, x);
    pending_ = false;
  }

  double last_residual() const override { return residual_; }
  bool last_converged() const noexcept { return converged_; }
  const BiasLedger& ledger() const noexcept { return ledger_; }

 private:
  BiasLedger ledger_;
  std::uint64_t seed_;
  FixedPointOptions opt_;
  std::optional<SimplexPoint> last_;
  std::vector<double> counts_;
  double residual_ = 0;
  bool converged_ = true;
  bool pending_ = false;
};

// Baseline: forecast the running empirical outcome frequency.
class EmpiricalAverageForecaster : public Forecaster {
 public:
  explicit EmpiricalAverageForecaster(std::size_t dim) : counts_(dim, 0.0) {
    if (dim < 2) throw std::invalid_argument("EmpiricalAverageForecaster: dimension");
  }

  SimplexPoint next() override {
    if (t_ == 0) return SimplexPoint::uniform(counts_.size());
    std::vector<double> v(counts_);
    for (double& c : v) c /= static_cast<double>(t_);
    return SimplexPoint(std::move(v));
  }

  void observe(Outcome x) override {
    if (x.index >= counts_.size()) {
      throw std::invalid_argument("EmpiricalAverageForecaster: outcome out of range");
    }
    counts_[x.index] += 1.0;
    ++t_;
  }

 private:
  std::vector<double> counts_;
  std::size_t t_ = 0;
};

// Outcome-choosing opponents for calibration experiments.
class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual Outcome respond(const SimplexPoint& forecast, std::size_t round) = 0;
};

class IidUniformAdversary : public Adversary {
 public:
  IidUniformAdversary(std::size_t dim, std::uint64_t seed)
      : dim_(dim), stream_(rng::substream(seed, "iid_adversary")) {}
  Outcome respond(const SimplexPoint&, std::size_t round) override {
    return Outcome{stream_.index(round, dim_)};
  }

 private:
  std::size_t dim_;
  rng::Stream stream_;
};

class AlternatingAdversary : public Adversary {
 public:
  explicit AlternatingAdversary(std::size_t dim) : dim_(dim) {}
  Outcome respond(const SimplexPoint&, std::size_t round) override {
    return Outcome{round % dim_};
  }

 private:
  std::size_t dim_;
};

// Picks the outcome the forecast trusts least (lowest index on ties).
class AdaptiveLeastForecastAdversary : public Adversary {
 public:
  Outcome respond(const SimplexPoint& forecast, std::size_t) override {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < forecast.dim(); ++i) {
      if (forecast[i] < forecast[arg]) arg = i;
    }
    return Outcome{arg};
  }
};

struct CalibrationRound {
  SimplexPoint forecast;
  std::size_t outcome = 0;
  double fp_residual = 0;
  double weak_rate_running = 0;
};

struct CalibrationTranscript {
  std::size_t dim = 0;
  std::vector<CalibrationRound> rounds;
  double weak_rate_final = 0;
  double strong_rate_final = 0;
};

inline CalibrationTranscript run_calibration(Forecaster& forecaster, Adversary& adversary,
                                             std::size_t rounds,
                                             std::shared_ptr<const GridTriangulation> tri) {
  if (rounds == 0) throw std::invalid_argument("run_calibration: rounds must be positive");
  BiasLedger ledger(tri);
  CalibrationTranscript out;
  out.dim = tri->dim();
  out.rounds.reserve(rounds);
  std::vector<SimplexPoint> forecasts;
  std::vector<Outcome> outcomes;
  forecasts.reserve(rounds);
  outcomes.reserve(rounds);
  for (std::size_t t = 0; t < rounds; ++t) {
    SimplexPoint p = forecaster.next();
    const Outcome x = adversary.respond(p, t);
    forecaster.observe(x);
    ledger.update(p, x);
    out.rounds.push_back({p, x.index, forecaster.last_residual(), ledger.weak_rate()});
    forecasts.push_back(std::move(p));
    outcomes.push_back(x);
  }
  out.weak_rate_final = ledger.weak_rate();
  out.strong_rate_final = strong_rate(forecasts, outcomes, *tri);
  return out;
}

// CSV export: t, forecast coordinates, outcome index, fixed-point residual,
// running weak rate.
inline void write_calibration_csv(std::ostream& os, const CalibrationTranscript& tr) {
  os << "t";
  for (std::size_t c = 0; c < tr.dim; ++c) os << ",forecast_" << c;
  os << ",outcome,fp_residual,weak_rate_running\n";
  char buf[32];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (std::size_t t = 0; t < tr.rounds.size(); ++t) {
    const CalibrationRound& r = tr.rounds[t];
    os << (t + 1);
    for (std::size_t c = 0; c < tr.dim; ++c) {
      os << ',';
      num(r.forecast[c]);
    }
    os << ',' << r.outcome << ',';
    num(r.fp_residual);
    os << ',';
    num(r.weak_rate_running);
    os << '\n';
  }
}

}  // namespace calibnash
