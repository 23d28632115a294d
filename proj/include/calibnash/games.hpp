#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "calibnash/rng.hpp"
#include "calibnash/simplex.hpp"

namespace calibnash {

// Square two-player game with payoff entries in [0, 1]. Player 1 picks the
// row, player 2 the column.
class BimatrixGame {
 public:
  BimatrixGame(std::size_t actions, std::vector<double> row_payoffs,
               std::vector<double> col_payoffs)
      : d_(actions), u_{std::move(row_payoffs), std::move(col_payoffs)} {
    if (d_ < 2) throw std::invalid_argument("BimatrixGame: need at least 2 actions");
    for (int player = 1; player <= 2; ++player) {
      const auto& m = u_[player - 1];
      if (m.size() != d_ * d_) {
        throw std::invalid_argument("BimatrixGame: U" + std::to_string(player) +
                                    " is not " + std::to_string(d_) + "x" + std::to_string(d_));
      }
      for (std::size_t i = 0; i < d_; ++i) {
        for (std::size_t j = 0; j < d_; ++j) {
          const double v = m[i * d_ + j];
          if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw std::invalid_argument("BimatrixGame: U" + std::to_string(player) + "[" +
                                        std::to_string(i) + "][" + std::to_string(j) + "] = " +
                                        std::to_string(v) + " is outside [0,1]");
          }
        }
      }
    }
  }

  std::size_t actions() const noexcept { return d_; }

  double entry(int player, std::size_t i, std::size_t j) const {
    return matrix(player)[i * d_ + j];
  }

  const std::vector<double>& matrix(int player) const {
    if (player != 1 && player != 2) throw std::invalid_argument("BimatrixGame: player must be 1 or 2");
    return u_[player - 1];
  }

  // Bilinear payoff x' U_player y.
  double payoff(int player, const SimplexPoint& x, const SimplexPoint& y) const {
    check_profile(x, y);
    const std::vector<double>& m = matrix(player);
    double total = 0;
    for (std::size_t i = 0; i < d_; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < d_; ++j) row += m[i * d_ + j] * y[j];
      total += x[i] * row;
    }
    return total;
  }

  void check_profile(const SimplexPoint& x, const SimplexPoint& y) const {
    if (x.dim() != d_ || y.dim() != d_) {
      throw std::invalid_argument("BimatrixGame: strategy dimension mismatch");
    }
  }

 private:
  std::size_t d_;
  std::vector<double> u_[2];
};

struct StrategyProfile {
  SimplexPoint row;
  SimplexPoint col;
};

namespace detail {

// Pure best-response scores against a raw (already projected) opponent
// vector; for player 1 these are the rows of U1*y, for player 2 the columns
// of x'*U2.
inline std::size_t argmax_response(const BimatrixGame& g, int player,
                                   const std::vector<double>& opponent) {
  const std::size_t d = g.actions();
  const std::vector<double>& m = g.matrix(player);
  std::size_t arg = 0;
  double best = -1;
  for (std::size_t a = 0; a < d; ++a) {
    double score = 0;
    if (player == 1) {
      for (std::size_t j = 0; j < d; ++j) score += m[a * d + j] * opponent[j];
    } else {
      for (std::size_t i = 0; i < d; ++i) score += opponent[i] * m[i * d + a];
    }
    if (score > best) {
      best = score;
      arg = a;
    }
  }
  return arg;
}

}  // namespace detail

inline std::size_t best_response_index(const BimatrixGame& g, int player,
                                       const SimplexPoint& opponent) {
  g.matrix(player);  // validates player
  if (opponent.dim() != g.actions()) {
    throw std::invalid_argument("best_response_index: dimension mismatch");
  }
  return detail::argmax_response(g, player, opponent.coords());
}

// Pure best response e_a, ties to the lowest index.
inline SimplexPoint best_response(const BimatrixGame& g, int player, const SimplexPoint& opponent) {
  return SimplexPoint::basis(g.actions(), best_response_index(g, player, opponent));
}

// Extension to arbitrary vectors: project onto the simplex first.
inline SimplexPoint best_response(const BimatrixGame& g, int player,
                                  const std::vector<double>& raw) {
  return best_response(g, player, project_l2(raw));
}

struct SmoothBRConfig {
  double delta = 0.1;
  std::size_t samples = 10000;  // in-loop default; certificates use far more
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // extra tag so each round/site gets its own draws

  void validate() const {
    if (!(delta > 0) || !(delta < 1)) {
      throw std::invalid_argument("SmoothBRConfig: delta must lie in (0, 1)");
    }
    if (samples < 1) throw std::invalid_argument("SmoothBRConfig: samples must be >= 1");
  }
};

// Monte Carlo smoothed best response: average of pure best responses over
// uniform draws from the l-infinity cube of radius delta around the opponent
// strategy. Draws may leave the simplex; the extended best response projects
// them back. Sample i uses draw indices [i*d, (i+1)*d), so any partition of
// the samples yields identical counts and the result is independent of
// evaluation order.
inline SimplexPoint smooth_best_response(const BimatrixGame& g, int player,
                                         const SimplexPoint& opponent, const SmoothBRConfig& cfg) {
  cfg.validate();
  g.matrix(player);
  const std::size_t d = g.actions();
  if (opponent.dim() != d) {
    throw std::invalid_argument("smooth_best_response: dimension mismatch");
  }
  const rng::Stream s = rng::substream(cfg.seed, "smooth_br", cfg.stream,
                                       static_cast<std::uint64_t>(player));
  std::vector<std::uint64_t> counts(d, 0);
  std::vector<double> perturbed(d);
  std::vector<double> scratch;
  for (std::uint64_t m = 0; m < cfg.samples; ++m) {
    for (std::size_t c = 0; c < d; ++c) {
      perturbed[c] = opponent[c] + s.uniform(m * d + c, -cfg.delta, cfg.delta);
    }
    project_l2_inplace(perturbed, scratch);
    ++counts[detail::argmax_response(g, player, perturbed)];
  }
  std::vector<double> mean(d);
  for (std::size_t c = 0; c < d; ++c) {
    mean[c] = static_cast<double>(counts[c]) / static_cast<double>(cfg.samples);
  }
  return SimplexPoint(std::move(mean));
}

// Largest payoff either player can gain by a unilateral pure deviation; the
// profile is an eps-equilibrium iff this gap is at most eps.
inline double ne_gap(const BimatrixGame& g, const SimplexPoint& x, const SimplexPoint& y) {
  g.check_profile(x, y);
  const std::size_t d = g.actions();
  const std::vector<double>& u1 = g.matrix(1);
  const std::vector<double>& u2 = g.matrix(2);
  double base1 = 0, best1 = 0, base2 = 0, best2 = 0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < d; ++j) row += u1[i * d + j] * y[j];
    base1 += x[i] * row;
    if (i == 0 || row > best1) best1 = row;
  }
  for (std::size_t j = 0; j < d; ++j) {
    double col = 0;
    for (std::size_t i = 0; i < d; ++i) col += x[i] * u2[i * d + j];
    base2 += y[j] * col;
    if (j == 0 || col > best2) best2 = col;
  }
  return std::max(0.0, std::max(best1 - base1, best2 - base2));
}

inline double ne_gap(const BimatrixGame& g, const StrategyProfile& profile) {
  return ne_gap(g, profile.row, profile.col);
}

enum class GameKind { random, matching_pennies, coordination, shifted };

inline GameKind parse_game_kind(std::string_view name) {
  if (name == "random") return GameKind::random;
  if (name == "matching_pennies") return GameKind::matching_pennies;
  if (name == "coordination") return GameKind::coordination;
  if (name == "shifted") return GameKind::shifted;
  throw std::invalid_argument("unknown game kind '" + std::string(name) +
                              "' (expected random, matching_pennies, coordination or shifted)");
}

inline std::string to_string(GameKind kind) {
  switch (kind) {
    case GameKind::random: return "random";
    case GameKind::matching_pennies: return "matching_pennies";
    case GameKind::coordination: return "coordination";
    case GameKind::shifted: return "shifted";
  }
  throw std::invalid_argument("to_string: bad GameKind");
}

inline BimatrixGame generate_game(GameKind kind, std::size_t d, std::uint64_t seed) {
  if (d < 2) throw std::invalid_argument("generate_game: d must be at least 2");
  const std::size_t n = d * d;
  std::vector<double> u1(n, 0.0);
  std::vector<double> u2(n, 0.0);
  switch (kind) {
    case GameKind::matching_pennies:
      if (d != 2) throw std::invalid_argument("generate_game: matching_pennies requires d = 2");
      u1 = {1, 0, 0, 1};
      u2 = {0, 1, 1, 0};
      break;
    case GameKind::coordination:
      for (std::size_t i = 0; i < d; ++i) u1[i * d + i] = u2[i * d + i] = 1.0;
      break;
    case GameKind::shifted:
      // row player wants to match, column player wants the cyclic mismatch
      for (std::size_t i = 0; i < d; ++i) {
        u1[i * d + i] = 1.0;
        u2[i * d + (i + 1) % d] = 1.0;
      }
      break;
    case GameKind::random: {
      const rng::Stream s1 = rng::substream(seed, "game_entries", std::uint64_t{1});
      const rng::Stream s2 = rng::substream(seed, "game_entries", std::uint64_t{2});
      for (std::size_t e = 0; e < n; ++e) {
        u1[e] = s1.uniform(e);
        u2[e] = s2.uniform(e);
      }
      break;
    }
  }
  return BimatrixGame(d, std::move(u1), std::move(u2));
}

// File format: {"d": int, "U1": [[...]], "U2": [[...]]}, row-major, entries
// in [0,1]. Validation failures name the offending cell.
inline BimatrixGame load_game(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("game file: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("d") || !doc.contains("U1") || !doc.contains("U2")) {
    throw std::invalid_argument("game file: expected object with keys d, U1, U2");
  }
  if (!doc["d"].is_number_integer() || doc["d"].get<std::int64_t>() < 2) {
    throw std::invalid_argument("game file: d must be an integer >= 2");
  }
  const auto d = doc["d"].get<std::size_t>();
  const auto read_matrix = [&](const char* name) {
    const nlohmann::json& m = doc[name];
    if (!m.is_array() || m.size() != d) {
      throw std::invalid_argument(std::string("game file: ") + name + " must have " +
                                  std::to_string(d) + " rows");
    }
    std::vector<double> flat;
    flat.reserve(d * d);
    for (std::size_t i = 0; i < d; ++i) {
      if (!m[i].is_array() || m[i].size() != d) {
        throw std::invalid_argument(std::string("game file: ") + name + " row " +
                                    std::to_string(i) + " must have " + std::to_string(d) +
                                    " entries");
      }
      for (std::size_t j = 0; j < d; ++j) {
        if (!m[i][j].is_number()) {
          throw std::invalid_argument(std::string("game file: ") + name + "[" +
                                      std::to_string(i) + "][" + std::to_string(j) +
                                      "] is not a number");
        }
        flat.push_back(m[i][j].get<double>());
      }
    }
    return flat;
  };
  return BimatrixGame(d, read_matrix("U1"), read_matrix("U2"));
}

inline nlohmann::ordered_json game_document(const BimatrixGame& g) {
  const std::size_t d = g.actions();
  nlohmann::ordered_json doc;
  doc["d"] = d;
  for (int player = 1; player <= 2; ++player) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < d; ++i) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (std::size_t j = 0; j < d; ++j) row.push_back(g.entry(player, i, j));
      rows.push_back(std::move(row));
    }
    doc[player == 1 ? "U1" : "U2"] = std::move(rows);
  }
  return doc;
}

inline void save_game(std::ostream& out, const BimatrixGame& g) {
  out << game_document(g).dump(2) << '\n';
}

}  // namespace calibnash
