#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "calibnash/calibration.hpp"
#include "calibnash/games.hpp"
#include "calibnash/rng.hpp"
#include "calibnash/simplex.hpp"
#include "calibnash/triangulation.hpp"

namespace calibnash {

// Outcomes of the reduction live on pairs (i, j), flattened row-major with
// player 1's action as the row.
inline std::size_t pair_index(std::size_t d, std::size_t i, std::size_t j) {
  if (i >= d || j >= d) throw std::invalid_argument("pair_index: action out of range");
  return i * d + j;
}

inline std::pair<std::size_t, std::size_t> split_index(std::size_t d, std::size_t index) {
  if (index >= d * d) throw std::invalid_argument("split_index: index out of range");
  return {index / d, index % d};
}

enum class ForecasterKind { fixed_point, empirical };

inline ForecasterKind parse_forecaster_kind(std::string_view name) {
  if (name == "fixedpoint" || name == "fixed_point") return ForecasterKind::fixed_point;
  if (name == "empirical") return ForecasterKind::empirical;
  throw std::invalid_argument("unknown forecaster '" + std::string(name) +
                              "' (expected fixedpoint or empirical)");
}

inline std::string to_string(ForecasterKind kind) {
  return kind == ForecasterKind::fixed_point ? "fixedpoint" : "empirical";
}

// Substream tag for the output-profile estimate, distinct from the per-round
// tags 1..T used inside the loop.
inline constexpr std::uint64_t kFinalBrStream = rng::fnv1a("final_profile");

struct ReductionConfig {
  BimatrixGame game;
  double epsilon = 0.1;
  std::optional<double> delta_override = std::nullopt;
  std::size_t rounds = 2000;
  ForecasterKind forecaster = ForecasterKind::fixed_point;
  FixedPointOptions fixed_point = {};
  std::size_t br_samples = 10000;
  std::size_t br_samples_final = 1000000;
  std::uint64_t seed = 1;

  double delta() const { return delta_override ? *delta_override : std::cbrt(epsilon); }

  void validate() const {
    if (!(epsilon > 0) || !(epsilon < 1)) {
      throw std::invalid_argument("ReductionConfig: epsilon must lie in (0, 1)");
    }
    if (rounds < 1) throw std::invalid_argument("ReductionConfig: rounds must be >= 1");
    const double dlt = delta();
    if (!(dlt > 0) || !(dlt < 1)) {
      throw std::invalid_argument("ReductionConfig: delta must lie in (0, 1)");
    }
    if (br_samples < 1 || br_samples_final < 1) {
      throw std::invalid_argument("ReductionConfig: sample counts must be >= 1");
    }
  }
};

struct ReductionRound {
  SimplexPoint forecast;  // joint forecast on the d^2 outcome space
  std::size_t outcome_row = 0;
  std::size_t outcome_col = 0;
  double fp_residual = 0;
  double weak_rate_running = 0;
};

struct Certificate {
  double weak_rate = 0;           // measured C_T, stands in for the assumed uniform rate
  double residual = 0;            // ||p* - BR_delta(p*)||_1, final-sample estimate
  double ne_gap = 0;              // gamma of the output profile
  double tau_mc = 0;              // 3 sqrt(d / M_final)
  double bound_proof_form = 0;    // 4 C_T + 20 eps^(1/3) + 2 d eps^(1/3)
  double bound_theorem_form = 0;  // 4 C_T + 22 d eps^(1/3)
  bool gap_le_proof_bound = false;
  bool gap_le_theorem_bound = false;
  bool lemma3_sound = false;  // gamma <= 2 residual + 2 d delta + 4 tau
  bool hyp_dim = false;       // d > 2
  bool hyp_epsilon = false;   // eps < 1/d^3
  bool hyp_delta = false;     // 2 < d < 1/delta
};

struct ReductionTranscript {
  ReductionConfig config;
  std::vector<ReductionRound> rounds;
  std::size_t sampled_round = 0;  // t*, 1-based
  std::vector<std::int32_t> sampled_vertex_key;
  SimplexPoint sampled_vertex;  // p*
  StrategyProfile output;
  Certificate certificate;
};

// ||p - outer(BR_{1,delta}([p]_2), BR_{2,delta}([p]_1))||_1 with Monte Carlo
// best responses; deterministic given (seed, stream).
inline double estimate_fixed_point_residual(const JointDistribution& p, const BimatrixGame& game,
                                            double delta, std::size_t samples, std::uint64_t seed,
                                            std::uint64_t stream = kFinalBrStream) {
  const auto [row_marginal, col_marginal] = marginals(p);
  const SmoothBRConfig cfg{delta, samples, seed, stream};
  const SimplexPoint x = smooth_best_response(game, 1, col_marginal, cfg);
  const SimplexPoint y = smooth_best_response(game, 2, row_marginal, cfg);
  return l1_distance(p.mass(), outer(x, y).mass());
}

inline Certificate make_certificate(const ReductionTranscript& tr) {
  const ReductionConfig& cfg = tr.config;
  const std::size_t d = cfg.game.actions();
  const double delta = cfg.delta();
  const double croot = std::cbrt(cfg.epsilon);

  // replay the transcript through a fresh ledger so the certificate is a
  // function of the stored history alone
  const auto tri = std::make_shared<GridTriangulation>(
      d * d, GridTriangulation::resolution_for_precision(d * d, cfg.epsilon));
  BiasLedger ledger(tri);
  for (const ReductionRound& r : tr.rounds) {
    ledger.update(r.forecast, Outcome{pair_index(d, r.outcome_row, r.outcome_col)});
  }

  Certificate c;
  c.weak_rate = ledger.weak_rate();
  c.residual = estimate_fixed_point_residual(JointDistribution(d, tr.sampled_vertex), cfg.game,
                                             delta, cfg.br_samples_final, cfg.seed);
  c.ne_gap = ne_gap(cfg.game, tr.output);
  c.tau_mc = 3.0 * std::sqrt(static_cast<double>(d) / static_cast<double>(cfg.br_samples_final));
  c.bound_proof_form = 4.0 * c.weak_rate + 20.0 * croot + 2.0 * static_cast<double>(d) * croot;
  c.bound_theorem_form = 4.0 * c.weak_rate + 22.0 * static_cast<double>(d) * croot;
  c.gap_le_proof_bound = c.ne_gap <= c.bound_proof_form;
  c.gap_le_theorem_bound = c.ne_gap <= c.bound_theorem_form;
  c.lemma3_sound =
      c.ne_gap <= 2.0 * c.residual + 2.0 * static_cast<double>(d) * delta + 4.0 * c.tau_mc;
  c.hyp_dim = d > 2;
  c.hyp_epsilon = cfg.epsilon < 1.0 / std::pow(static_cast<double>(d), 3);
  c.hyp_delta = d > 2 && static_cast<double>(d) < 1.0 / delta;
  return c;
}

// One full run: drive the forecaster over the d^2 outcome space against
// smoothed-best-response sampling, pick a round and a cell corner by the
// barycentric law, and answer with the smoothed best responses to that
// corner's marginals. Bit-deterministic given the config.
inline ReductionTranscript run_reduction(const ReductionConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.game.actions();
  const std::size_t joint_dim = d * d;
  const double delta = cfg.delta();
  const std::size_t T = cfg.rounds;

  const auto tri = std::make_shared<GridTriangulation>(
      joint_dim, GridTriangulation::resolution_for_precision(joint_dim, cfg.epsilon));
  std::unique_ptr<Forecaster> forecaster;
  if (cfg.forecaster == ForecasterKind::fixed_point) {
    forecaster = std::make_unique<FixedPointForecaster>(tri, cfg.seed, cfg.fixed_point);
  } else {
    forecaster = std::make_unique<EmpiricalAverageForecaster>(joint_dim);
  }
  BiasLedger ledger(tri);

  std::vector<ReductionRound> rounds;
  rounds.reserve(T);
  for (std::size_t t = 1; t <= T; ++t) {
    SimplexPoint forecast = forecaster->next();
    const auto [row_marginal, col_marginal] = marginals(JointDistribution(d, forecast));
    const SmoothBRConfig brc{delta, cfg.br_samples, cfg.seed, t};
    const SimplexPoint x = smooth_best_response(cfg.game, 1, col_marginal, brc);
    const SimplexPoint y = smooth_best_response(cfg.game, 2, row_marginal, brc);
    const std::size_t i = rng::substream(cfg.seed, "outcome_row", t).categorical(0, x.coords());
    const std::size_t j = rng::substream(cfg.seed, "outcome_col", t).categorical(0, y.coords());
    const Outcome outcome{pair_index(d, i, j)};
    forecaster->observe(outcome);
    ledger.update(forecast, outcome);
    rounds.push_back(
        {std::move(forecast), i, j, forecaster->last_residual(), ledger.weak_rate()});
  }

  const std::size_t t_star = 1 + rng::substream(cfg.seed, "round_pick").index(0, T);
  const SimplexPoint& chosen = rounds[t_star - 1].forecast;
  const TestWeights cell = tri->locate(chosen);
  std::vector<double> law;
  law.reserve(cell.entries.size());
  for (const auto& [id, wt] : cell.entries) law.push_back(wt);
  const std::size_t pick = rng::substream(cfg.seed, "vertex_pick").categorical(0, law);
  const VertexId vid = cell.entries[pick].first;
  SimplexPoint p_star = tri->vertex_point(vid);

  const auto [row_star, col_star] = marginals(JointDistribution(d, p_star));
  const SmoothBRConfig final_cfg{delta, cfg.br_samples_final, cfg.seed, kFinalBrStream};
  StrategyProfile output{smooth_best_response(cfg.game, 1, col_star, final_cfg),
                         smooth_best_response(cfg.game, 2, row_star, final_cfg)};

  ReductionTranscript tr{cfg,
                         std::move(rounds),
                         t_star,
                         tri->vertex_key(vid),
                         std::move(p_star),
                         std::move(output),
                         Certificate{}};
  tr.certificate = make_certificate(tr);
  return tr;
}

namespace detail {
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}
}  // namespace detail

// Result document consumed by the CLI and downstream plotting scripts.
inline nlohmann::ordered_json result_document(const ReductionTranscript& tr) {
  const ReductionConfig& cfg = tr.config;
  nlohmann::ordered_json doc;
  doc["config"] = {{"d", cfg.game.actions()},
                   {"epsilon", cfg.epsilon},
                   {"delta", cfg.delta()},
                   {"rounds", cfg.rounds},
                   {"forecaster", to_string(cfg.forecaster)},
                   {"mc_samples", cfg.br_samples},
                   {"mc_samples_final", cfg.br_samples_final},
                   {"seed", cfg.seed}};
  doc["config"]["game"] = game_document(cfg.game);
  doc["output"] = {{"row_strategy", tr.output.row.coords()},
                   {"col_strategy", tr.output.col.coords()}};
  doc["sampled_round"] = tr.sampled_round;
  doc["sampled_vertex"] = tr.sampled_vertex.coords();
  const Certificate& c = tr.certificate;
  doc["certificate"] = {{"weak_rate", c.weak_rate},
                        {"residual", c.residual},
                        {"ne_gap", c.ne_gap},
                        {"tau_mc", c.tau_mc},
                        {"bound_proof_form", c.bound_proof_form},
                        {"bound_theorem_form", c.bound_theorem_form},
                        {"gap_le_proof_bound", c.gap_le_proof_bound},
                        {"gap_le_theorem_bound", c.gap_le_theorem_bound},
                        {"lemma3_sound", c.lemma3_sound}};
  doc["hypotheses"] = {{"d_gt_2", c.hyp_dim},
                       {"epsilon_lt_inv_d3", c.hyp_epsilon},
                       {"delta_window", c.hyp_delta}};
  return doc;
}

// CSV export: per-round residual, running weak rate, sampled action pair.
inline void write_reduction_csv(std::ostream& os, const ReductionTranscript& tr) {
  os << "t,residual,weak_rate_running,outcome_i,outcome_j\n";
  for (std::size_t t = 0; t < tr.rounds.size(); ++t) {
    const ReductionRound& r = tr.rounds[t];
    os << (t + 1) << ',' << detail::format_double(r.fp_residual) << ','
       << detail::format_double(r.weak_rate_running) << ',' << r.outcome_row << ','
       << r.outcome_col << '\n';
  }
}

}  // namespace calibnash
