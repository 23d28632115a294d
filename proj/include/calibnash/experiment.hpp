#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "calibnash/calibration.hpp"
#include "calibnash/games.hpp"
#include "calibnash/lemma_checks.hpp"
#include "calibnash/reduction.hpp"

namespace calibnash {

// Configuration problems: exit code 2. I/O problems: exit code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level_from_env() {
  const char* raw = std::getenv("CALIBNASH_LOG");
  if (raw == nullptr) return LogLevel::info;
  const std::string_view v{raw};
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  throw ConfigError("CALIBNASH_LOG must be one of error, info, debug (got '" + std::string(v) +
                    "')");
}

inline void log(LogLevel level, const std::string& message) {
  static const LogLevel active = log_level_from_env();
  if (level <= active) std::cerr << "[calibnash] " << message << '\n';
}

// Seed specs: "7", "1,4,9", or the inclusive range "1..20".
inline std::vector<std::uint64_t> parse_seed_spec(const std::string& spec) {
  const auto parse_one = [](const std::string& s) -> std::uint64_t {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("seeds: '" + s + "' is not a non-negative integer");
    }
  };
  std::vector<std::uint64_t> seeds;
  if (const auto dots = spec.find(".."); dots != std::string::npos) {
    const std::uint64_t lo = parse_one(spec.substr(0, dots));
    const std::uint64_t hi = parse_one(spec.substr(dots + 2));
    if (hi < lo) throw ConfigError("seeds: range '" + spec + "' is empty");
    if (hi - lo >= 100000) throw ConfigError("seeds: range '" + spec + "' is too large");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  } else {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) seeds.push_back(parse_one(item));
    }
  }
  if (seeds.empty()) throw ConfigError("seeds: list must not be empty");
  return seeds;
}

inline std::vector<std::size_t> parse_dim_list(const std::string& spec) {
  std::vector<std::size_t> dims;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(item, &pos);
      if (pos != item.size() || v < 2) throw std::invalid_argument(item);
      dims.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("d: '" + item + "' is not an integer >= 2");
    }
  }
  if (dims.empty()) throw ConfigError("d: dimension list must not be empty");
  return dims;
}

struct ExperimentConfig {
  std::string mode;  // calibrate | reduce | verify
  std::string game = "matching_pennies";
  std::size_t d = 2;
  double epsilon = 0.1;
  std::optional<double> delta;
  std::size_t rounds = 2000;
  std::string forecaster = "fixedpoint";
  std::string adversary = "iid";
  std::size_t mc_samples = 10000;
  std::size_t mc_samples_final = 1000000;
  std::string seeds = "1";
  std::string out = ".";
  std::string suite = "all";  // verify: lemmas | invariants | all
  std::size_t trials = 200;
  std::string dims = "2,3";  // verify: comma list for the lemma suites

  void validate() const {
    if (mode != "calibrate" && mode != "reduce" && mode != "verify") {
      throw ConfigError("mode: expected calibrate, reduce or verify (got '" + mode + "')");
    }
    if (!(epsilon > 0) || !(epsilon < 1)) throw ConfigError("epsilon: must lie in (0, 1)");
    if (delta && (!(*delta > 0) || !(*delta < 1))) throw ConfigError("delta: must lie in (0, 1)");
    if (rounds < 1) throw ConfigError("rounds: must be >= 1");
    if (d < 2) throw ConfigError("d: must be >= 2");
    if (mc_samples < 1) throw ConfigError("mc-samples: must be >= 1");
    if (mc_samples_final < 1) throw ConfigError("mc-samples-final: must be >= 1");
    if (trials < 1) throw ConfigError("trials: must be >= 1");
    if (forecaster != "fixedpoint" && forecaster != "empirical") {
      throw ConfigError("forecaster: expected fixedpoint or empirical (got '" + forecaster + "')");
    }
    if (adversary != "iid" && adversary != "alternating" && adversary != "adaptive") {
      throw ConfigError("adversary: expected iid, alternating or adaptive (got '" + adversary +
                        "')");
    }
    if (suite != "lemmas" && suite != "invariants" && suite != "all") {
      throw ConfigError("suite: expected lemmas, invariants or all (got '" + suite + "')");
    }
    parse_seed_spec(seeds);
    parse_dim_list(dims);
  }
};

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

// Kind name or a path to a JSON game file.
inline BimatrixGame resolve_game(const ExperimentConfig& cfg, std::uint64_t generator_seed) {
  const bool looks_like_path =
      cfg.game.find('/') != std::string::npos ||
      (cfg.game.size() > 5 && cfg.game.substr(cfg.game.size() - 5) == ".json");
  if (looks_like_path || std::filesystem::exists(cfg.game)) {
    std::ifstream in(cfg.game);
    if (!in) throw IoError("cannot open game file '" + cfg.game + "'");
    try {
      return load_game(in);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("game: " + std::string(e.what()));
    }
  }
  try {
    return generate_game(parse_game_kind(cfg.game), cfg.d, generator_seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("game: " + std::string(e.what()));
  }
}

}  // namespace detail

inline int run_reduce_mode(const ExperimentConfig& cfg) {
  const std::vector<std::uint64_t> seeds = parse_seed_spec(cfg.seeds);
  // one game shared by the whole ensemble; the first seed fixes random kinds
  const BimatrixGame game = detail::resolve_game(cfg, seeds.front());
  const std::filesystem::path out_dir{cfg.out};
  detail::ensure_directory(out_dir);

  std::ofstream summary = detail::open_output(out_dir / "summary.csv");
  summary << "seed,weak_rate,residual,ne_gap,tau_mc,bound_proof_form,bound_theorem_form,"
             "lemma3_sound\n";
  for (const std::uint64_t seed : seeds) {
    ReductionConfig rc{game};
    rc.epsilon = cfg.epsilon;
    rc.delta_override = cfg.delta;
    rc.rounds = cfg.rounds;
    rc.forecaster = parse_forecaster_kind(cfg.forecaster);
    rc.br_samples = cfg.mc_samples;
    rc.br_samples_final = cfg.mc_samples_final;
    rc.seed = seed;
    log(LogLevel::info, "reduce: seed " + std::to_string(seed) + " over " +
                            std::to_string(cfg.rounds) + " rounds");
    const ReductionTranscript tr = run_reduction(rc);

    detail::open_output(out_dir / ("result_" + std::to_string(seed) + ".json"))
        << result_document(tr).dump(2) << '\n';
    auto csv = detail::open_output(out_dir / ("transcript_" + std::to_string(seed) + ".csv"));
    write_reduction_csv(csv, tr);

    const Certificate& c = tr.certificate;
    summary << seed << ',' << detail::format_double(c.weak_rate) << ','
            << detail::format_double(c.residual) << ',' << detail::format_double(c.ne_gap) << ','
            << detail::format_double(c.tau_mc) << ','
            << detail::format_double(c.bound_proof_form) << ','
            << detail::format_double(c.bound_theorem_form) << ','
            << (c.lemma3_sound ? 1 : 0) << '\n';
    log(LogLevel::debug, "reduce: seed " + std::to_string(seed) + " gap " +
                             std::to_string(c.ne_gap) + " rate " + std::to_string(c.weak_rate));
  }
  return 0;
}

inline int run_calibrate_mode(const ExperimentConfig& cfg) {
  const std::vector<std::uint64_t> seeds = parse_seed_spec(cfg.seeds);
  const std::filesystem::path out_dir{cfg.out};
  detail::ensure_directory(out_dir);

  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const std::uint64_t seed : seeds) {
    const auto tri = std::make_shared<GridTriangulation>(
        cfg.d, GridTriangulation::resolution_for_precision(cfg.d, cfg.epsilon));
    std::unique_ptr<Forecaster> forecaster;
    if (cfg.forecaster == "fixedpoint") {
      forecaster = std::make_unique<FixedPointForecaster>(tri, seed);
    } else {
      forecaster = std::make_unique<EmpiricalAverageForecaster>(cfg.d);
    }
    std::unique_ptr<Adversary> adversary;
    if (cfg.adversary == "iid") {
      adversary = std::make_unique<IidUniformAdversary>(cfg.d, seed);
    } else if (cfg.adversary == "alternating") {
      adversary = std::make_unique<AlternatingAdversary>(cfg.d);
    } else {
      adversary = std::make_unique<AdaptiveLeastForecastAdversary>();
    }
    log(LogLevel::info, "calibrate: seed " + std::to_string(seed) + ", adversary " +
                            cfg.adversary + ", " + std::to_string(cfg.rounds) + " rounds");
    const CalibrationTranscript tr = run_calibration(*forecaster, *adversary, cfg.rounds, tri);

    auto csv = detail::open_output(out_dir / ("calibrate_" + std::to_string(seed) + ".csv"));
    write_calibration_csv(csv, tr);

    const std::size_t checkpoint = std::min<std::size_t>(250, tr.rounds.size());
    const double early = tr.rounds[checkpoint - 1].weak_rate_running;
    summary.push_back({{"seed", seed},
                       {"rounds", cfg.rounds},
                       {"adversary", cfg.adversary},
                       {"forecaster", cfg.forecaster},
                       {"weak_rate_at_checkpoint", early},
                       {"checkpoint", checkpoint},
                       {"weak_rate_final", tr.weak_rate_final},
                       {"strong_rate_final", tr.strong_rate_final},
                       {"decayed", tr.weak_rate_final < early}});
  }
  detail::open_output(out_dir / "calibrate_summary.json") << summary.dump(2) << '\n';
  return 0;
}

inline int run_verify_mode(const ExperimentConfig& cfg) {
  const std::vector<std::uint64_t> seeds = parse_seed_spec(cfg.seeds);
  const std::uint64_t seed = seeds.front();
  const std::vector<std::size_t> dims = parse_dim_list(cfg.dims);
  const std::filesystem::path out_dir{cfg.out};
  detail::ensure_directory(out_dir);

  std::vector<CheckResult> checks;
  const bool lemmas = cfg.suite == "lemmas" || cfg.suite == "all";
  const bool invariants = cfg.suite == "invariants" || cfg.suite == "all";
  if (invariants) {
    checks.push_back(check_cover_identities(dims, std::max<std::size_t>(cfg.trials, 100), seed));
    checks.push_back(check_payoff_lipschitz(std::max<std::size_t>(cfg.trials, 1000), seed));
    checks.push_back(check_marginal_contraction(std::max<std::size_t>(cfg.trials, 1000), seed));
    checks.push_back(check_product_l1_bound(std::max<std::size_t>(cfg.trials, 1000), seed));
    checks.push_back(check_rate_bounds(5000, seed));
  }
  if (lemmas) {
    checks.push_back(check_lemma1_payoff_loss(cfg.trials, seed, cfg.mc_samples, dims));
    checks.push_back(check_lemma2_br_lipschitz(cfg.trials, seed, cfg.mc_samples));
    checks.push_back(check_lemma3_fixed_point_gap(cfg.trials, seed, cfg.mc_samples, dims));
  }

  nlohmann::ordered_json doc;
  doc["suite"] = cfg.suite;
  doc["trials"] = cfg.trials;
  doc["dims"] = dims;
  doc["mc_samples"] = cfg.mc_samples;
  doc["seed"] = seed;
  doc["checks"] = nlohmann::ordered_json::array();
  bool all_pass = true;
  for (const CheckResult& c : checks) {
    doc["checks"].push_back(to_json(c));
    all_pass = all_pass && c.pass();
    log(LogLevel::info, "verify: " + c.name + (c.pass() ? " PASS (" : " FAIL (") +
                            std::to_string(c.violations) + "/" + std::to_string(c.trials) +
                            " violations)");
  }
  doc["all_pass"] = all_pass;
  detail::open_output(out_dir / "verify.json") << doc.dump(2) << '\n';
  std::cout << doc.dump(2) << '\n';
  return all_pass ? 0 : 1;
}

inline int run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.mode == "reduce") return run_reduce_mode(cfg);
  if (cfg.mode == "calibrate") return run_calibrate_mode(cfg);
  return run_verify_mode(cfg);
}

// Exit codes: 0 success (verify: all checks pass), 1 failed checks or
// internal error, 2 bad configuration, 3 I/O failure.
inline int run_cli(std::vector<std::string> args) {
  // accept the --mode flag by rewriting it into subcommand position
  std::string mode_flag;
  for (std::size_t i = 0; i < args.size();) {
    if (args[i] == "--mode" && i + 1 < args.size()) {
      mode_flag = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
    } else if (args[i].rfind("--mode=", 0) == 0) {
      mode_flag = args[i].substr(7);
      args.erase(args.begin() + i);
    } else {
      ++i;
    }
  }
  if (!mode_flag.empty()) {
    if (!args.empty() && (args[0] == "calibrate" || args[0] == "reduce" || args[0] == "verify")) {
      if (args[0] != mode_flag) {
        std::cerr << "mode: --mode " << mode_flag << " conflicts with subcommand " << args[0]
                  << '\n';
        return 2;
      }
    } else {
      args.insert(args.begin(), mode_flag);
    }
  }

  ExperimentConfig cfg;
  CLI::App app{"weakly calibrated forecasting and calibration-driven equilibrium search"};
  app.require_subcommand(0, 1);

  const auto add_output_option = [&cfg](CLI::App* sub) {
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--seeds", cfg.seeds, "seed list: N, N..M or comma list");
  };
  const auto add_run_options = [&cfg](CLI::App* sub) {
    sub->add_option("--game", cfg.game, "game kind or JSON file path");
    sub->add_option("--d", cfg.d, "number of actions per player");
    sub->add_option("--epsilon", cfg.epsilon, "calibration precision");
    sub->add_option("--delta", [&cfg](const std::vector<std::string>& vals) {
      char* end = nullptr;
      const double v = std::strtod(vals.front().c_str(), &end);
      if (end == nullptr || *end != '\0' || vals.front().empty()) return false;
      cfg.delta = v;
      return true;
    }, "smoothing radius override (default epsilon^(1/3))");
    sub->add_option("--rounds", cfg.rounds, "forecasting rounds T");
    sub->add_option("--forecaster", cfg.forecaster, "fixedpoint | empirical");
    sub->add_option("--mc-samples", cfg.mc_samples, "in-loop best-response samples");
    sub->add_option("--mc-samples-final", cfg.mc_samples_final, "certificate samples");
  };

  CLI::App* reduce = app.add_subcommand("reduce", "run the equilibrium-search loop per seed");
  add_run_options(reduce);
  add_output_option(reduce);

  CLI::App* calibrate = app.add_subcommand("calibrate", "run forecaster-vs-adversary loops");
  add_run_options(calibrate);
  add_output_option(calibrate);
  calibrate->add_option("--adversary", cfg.adversary, "iid | alternating | adaptive");

  CLI::App* verify = app.add_subcommand("verify", "run the property suites");
  verify->add_option("--suite", cfg.suite, "lemmas | invariants | all");
  verify->add_option("--trials", cfg.trials, "trials per check");
  verify->add_option("--d", cfg.dims, "comma list of per-player action counts");
  verify->add_option("--mc-samples", cfg.mc_samples, "best-response samples per trial");
  add_output_option(verify);

  try {
    std::reverse(args.begin(), args.end());  // CLI11's vector overload wants reversed args
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (reduce->parsed()) {
    cfg.mode = "reduce";
  } else if (calibrate->parsed()) {
    cfg.mode = "calibrate";
  } else if (verify->parsed()) {
    cfg.mode = "verify";
  } else {
    std::cerr << "mode: one of calibrate, reduce, verify is required\n";
    return 2;
  }

  try {
    return run_experiment(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace calibnash
