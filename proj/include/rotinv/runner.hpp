#pragma once

// Config-driven experiment runner behind the `rotinv` executable. A config is
// an INI file with sections [run], [process], [policy], [test]; every key is
// checked against the experiment and the kinds it selects, so a misspelt or
// inapplicable key is an error rather than a silently ignored setting.

#include "rotinv/rotinv.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace rotinv {

inline constexpr std::string_view kVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kSignificancePolicy =
    "one functional: invariant iff KS p > 0.005; m > 1 functionals: invariant iff every "
    "Holm-adjusted p > 0.01; KS p-values from the asymptotic Kolmogorov law with effective "
    "size n1*n2/(n1+n2)";

enum class Experiment { simulate, rotate, reconstruct, invariance, exit_moments, decomposition, roundtrip };

inline std::optional<Experiment> parse_experiment(std::string_view s) {
  static const std::map<std::string_view, Experiment> table{
      {"simulate", Experiment::simulate},       {"rotate", Experiment::rotate},
      {"reconstruct", Experiment::reconstruct}, {"invariance", Experiment::invariance},
      {"exit-moments", Experiment::exit_moments}, {"decomposition", Experiment::decomposition},
      {"roundtrip", Experiment::roundtrip}};
  const auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct RunOverrides {
  std::optional<std::size_t> workers;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
};

namespace config_detail {

using nlohmann::json;
namespace pt = boost::property_tree;

[[noreturn]] inline void invalid(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, std::string_view seps) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || seps.find(s[i]) != std::string_view::npos) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline double to_double(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    invalid(where + ": `" + text + "` is not a finite number");
  }
  return v;
}

inline std::uint64_t to_uint(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    invalid(where + ": `" + text + "` is not a non-negative integer");
  }
  return v;
}

inline bool to_bool(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true") return true;
  if (t == "false") return false;
  invalid(where + ": `" + text + "` is not true/false");
}

inline std::vector<double> to_doubles(const std::string& where, const std::string& text,
                                      std::string_view seps = ",") {
  std::vector<double> out;
  for (const auto& item : split(text, seps)) out.push_back(to_double(where, item));
  return out;
}

/// Reads one section, recording each effective value in the echo. Keys that
/// were never asked for are rejected by finish().
class Section {
 public:
  Section(const pt::ptree* node, std::string name, json& echo) : node_(node), name_(std::move(name)), echo_(echo) {
    if (node_ && !node_->data().empty()) invalid("[" + name_ + "] is not a section");
  }

  bool present() const { return node_ != nullptr; }
  bool has(const std::string& key) const { return node_ && node_->find(key) != node_->not_found(); }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!node_) return std::nullopt;
    const auto it = node_->find(key);
    if (it == node_->not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

  std::string text(const std::string& key, const std::string& fallback) {
    const std::string v = raw(key).value_or(fallback);
    echo_[name_][key] = v;
    return v;
  }
  std::string required_text(const std::string& key) {
    const auto v = raw(key);
    if (!v || v->empty()) invalid(where(key) + " is required");
    echo_[name_][key] = *v;
    return *v;
  }
  double number(const std::string& key, double fallback) {
    const auto v = raw(key);
    const double x = v ? to_double(where(key), *v) : fallback;
    echo_[name_][key] = x;
    return x;
  }
  double positive(const std::string& key, double fallback) {
    const double x = number(key, fallback);
    if (!(x > 0.0)) invalid(where(key) + " must be positive");
    return x;
  }
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) {
    const auto v = raw(key);
    const std::uint64_t x = v ? to_uint(where(key), *v) : fallback;
    echo_[name_][key] = x;
    return x;
  }
  std::uint64_t integer_at_least(const std::string& key, std::uint64_t fallback, std::uint64_t lo) {
    const std::uint64_t x = integer(key, fallback);
    if (x < lo) invalid(where(key) + " must be >= " + std::to_string(lo));
    return x;
  }
  bool flag(const std::string& key, bool fallback) {
    const auto v = raw(key);
    const bool x = v ? to_bool(where(key), *v) : fallback;
    echo_[name_][key] = x;
    return x;
  }
  std::optional<bool> optional_flag(const std::string& key) {
    const auto v = raw(key);
    if (!v) return std::nullopt;
    const bool x = to_bool(where(key), *v);
    echo_[name_][key] = x;
    return x;
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, value] : *node_) {
      if (!used_.count(key)) invalid(where(key) + " is unknown or does not apply to this configuration");
    }
  }

 private:
  const pt::ptree* node_;
  std::string name_;
  json& echo_;
  std::set<std::string> used_;
};

inline Matrix parse_matrix(const std::string& where, const std::string& text, std::size_t n) {
  const auto v = to_doubles(where, text, ",;");
  if (v.size() != n * n) invalid(where + ": expected " + std::to_string(n * n) + " entries");
  return Matrix(n, v);
}

inline Matrix orthogonal_or_throw(const std::string& where, Matrix m) {
  if (orthogonality_defect(m) > kOrthogonalityTolerance) invalid(where + ": matrix is not orthogonal");
  return m;
}

}  // namespace config_detail

enum class InvarianceExpectation { invariant, not_invariant };
enum class IndependenceExpectation { independent, dependent };

struct ExperimentConfig {
  Experiment experiment = Experiment::simulate;
  std::uint64_t base_seed = 0;
  std::size_t workers = 1;
  std::filesystem::path out_dir = "rotinv-out";
  bool dump_paths = false;
  std::size_t dump_count = 0;

  SimJob job;
  std::optional<RotationPolicy> policy;
  bool policy_driver_is_w = true;  // exit-time policies read W (true) or Z

  std::size_t paths = 0;
  std::size_t window = 0;
  double eps_pd = kDefaultEpsPd;
  std::vector<Functional> functionals;
  std::size_t repetitions = 1;
  std::size_t min_pass = 1;
  InvarianceExpectation invariance_expect = InvarianceExpectation::invariant;
  double reject_below = 1e-6;
  std::size_t n_permutations = 200;
  IndependenceExpectation independence_expect = IndependenceExpectation::independent;
  double independence_alpha = 0.01;
  double dependence_alpha = 0.001;
  std::optional<bool> expect_scalar_qv;
  std::optional<bool> expect_drift;
  double scalar_tolerance = kScalarQVTolerance;
  double min_fraction = 0.99;
  double qv_tolerance = 0.08;
  double oracle_tolerance = 1e-10;
  double roundtrip_tolerance = 1e-12;

  ExitMomentParams exit;
  std::vector<double> exit_radii;
  std::vector<std::string> exit_checks;
  bool halving_check = false;

  nlohmann::json echo;  // effective configuration, sufficient to re-run
};

inline ExperimentConfig parse_config(const boost::property_tree::ptree& tree, const RunOverrides& overrides = {}) {
  using namespace config_detail;
  ExperimentConfig cfg;
  json& echo = cfg.echo;
  echo = json::object();

  static const std::set<std::string> sections{"run", "process", "policy", "test"};
  for (const auto& [name, node] : tree) {
    if (!sections.count(name)) invalid("unknown section or top-level key `" + name + "`");
  }
  auto child = [&](const std::string& name) -> const pt::ptree* {
    const auto it = tree.find(name);
    return it == tree.not_found() ? nullptr : &it->second;
  };

  // [run]
  Section run(child("run"), "run", echo);
  if (!run.present()) invalid("missing [run] section");
  const std::string exp_name = run.required_text("experiment");
  const auto exp = parse_experiment(exp_name);
  if (!exp) invalid("[run] experiment `" + exp_name + "` is not one of simulate, rotate, reconstruct, "
                    "invariance, exit-moments, decomposition, roundtrip");
  cfg.experiment = *exp;
  cfg.base_seed = run.integer("base_seed", 0);
  if (overrides.seed) {
    cfg.base_seed = *overrides.seed;
    echo["run"]["base_seed"] = cfg.base_seed;
  }
  cfg.exit.seed = cfg.base_seed;
  cfg.job.base_seed = cfg.base_seed;
  {
    // workers and out_dir never change results; they are reported in
    // run_info, not in the config echo
    json scratch;
    Section side(child("run"), "run", scratch);
    const auto w = run.raw("workers");
    const auto o = run.raw("out_dir");
    std::size_t workers = default_workers();
    if (w) {
      workers = to_uint(run.where("workers"), *w);
      if (workers == 0) invalid("[run] workers must be >= 1");
    }
    if (overrides.workers) {
      if (*overrides.workers == 0) invalid("--workers must be >= 1");
      workers = *overrides.workers;
    }
    cfg.workers = workers;
    cfg.exit.workers = workers;
    if (o) cfg.out_dir = *o;
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  }
  const bool streams_paths = cfg.experiment == Experiment::exit_moments;
  if (!streams_paths) {
    cfg.dump_paths = run.flag("dump_paths", false);
    if (cfg.dump_paths) cfg.dump_count = run.integer_at_least("dump_count", 10, 1);
  }
  run.finish();

  const bool needs_process = cfg.experiment != Experiment::exit_moments;
  const bool needs_policy = cfg.experiment == Experiment::rotate || cfg.experiment == Experiment::roundtrip ||
                            cfg.experiment == Experiment::invariance;

  // [process]
  Section proc(child("process"), "process", echo);
  if (!needs_process && proc.present()) invalid("[process] does not apply to exit-moments");
  std::size_t n = 2;
  if (needs_process) {
    const std::string kind = proc.text("kind", "brownian");
    n = proc.integer_at_least("dim", 2, 1);
    if (n > 16) invalid("[process] dim must be <= 16");
    const double t_max = proc.positive("t_max", 1.0);
    const double dt = proc.positive("dt", 1e-4);
    const double steps = std::round(t_max / dt);
    if (steps < 1.0 || std::abs(steps * dt - t_max) > 1e-9 * t_max) {
      invalid("[process] t_max must be an integer multiple of dt");
    }
    if (steps > 1e8) invalid("[process] more than 1e8 steps");
    cfg.job.dim = n;
    cfg.job.grid = TimeGrid(t_max, static_cast<std::size_t>(steps));
    if (kind == "brownian") {
      cfg.job.process = BrownianProcess{};
    } else if (kind == "drifted") {
      const auto d = to_doubles(proc.where("drift"), proc.required_text("drift"));
      if (d.size() != n) invalid("[process] drift needs dim components");
      cfg.job.process = DriftedProcess{d};
    } else if (kind == "anisotropic") {
      cfg.job.process = AnisotropicProcess{parse_matrix(proc.where("sigma"), proc.required_text("sigma"), n)};
    } else if (kind == "time-changed") {
      VolatilitySpec v;
      const std::string vk = proc.text("volatility", "constant");
      if (vk == "constant") {
        v.kind = VolatilityKind::constant;
        v.sigma = proc.positive("vol_sigma", 1.0);
      } else if (vk == "random-constant") {
        v.kind = VolatilityKind::random_constant;
        v.level_low = proc.positive("level_low", 1.0);
        v.level_high = proc.positive("level_high", 3.0);
        v.p = proc.number("p", 0.5);
        if (!(v.p >= 0.0 && v.p <= 1.0)) invalid("[process] p must lie in [0, 1]");
      } else if (vk == "log-ou") {
        v.kind = VolatilityKind::log_ou;
        v.theta = proc.number("theta", 1.0);
        v.eta = proc.number("eta", 0.5);
        v.y0 = proc.number("y0", 0.0);
        if (v.theta < 0.0 || v.eta < 0.0) invalid("[process] theta and eta must be >= 0");
      } else if (vk == "w-dependent") {
        v.kind = VolatilityKind::w_dependent;
      } else {
        invalid("[process] volatility `" + vk + "` is not one of constant, random-constant, log-ou, w-dependent");
      }
      cfg.job.counterexample = proc.flag("counterexample", false);
      if (v.kind == VolatilityKind::w_dependent && !cfg.job.counterexample) {
        invalid("[process] w-dependent volatility violates independence and needs counterexample = true");
      }
      cfg.job.process = TimeChangedProcess{v};
    } else {
      invalid("[process] kind `" + kind + "` is not one of brownian, drifted, anisotropic, time-changed");
    }
    try {
      cfg.job.validate();
    } catch (const Error& e) {
      invalid(std::string("[process] ") + e.what());
    }
  }
  proc.finish();

  // [policy]
  Section pol(child("policy"), "policy", echo);
  if (!needs_policy && pol.present()) invalid("[policy] does not apply to " + exp_name);
  if (needs_policy) {
    if (!pol.present()) invalid("[policy] section is required for " + exp_name);
    const std::string kind = pol.required_text("kind");
    auto single_matrix = [&](const std::string& prefix) -> Matrix {
      // one of <prefix>matrix, <prefix>angle_deg, <prefix>haar_seed
      const int given = pol.has("matrix") + pol.has("angle_deg") + pol.has("haar_seed");
      if (given != 1) invalid("[policy] " + prefix + "give exactly one of matrix, angle_deg, haar_seed");
      if (pol.has("matrix")) {
        return orthogonal_or_throw(pol.where("matrix"), parse_matrix(pol.where("matrix"), pol.required_text("matrix"), n));
      }
      if (pol.has("angle_deg")) {
        if (n < 2) invalid("[policy] angle_deg needs dim >= 2");
        return plane_rotation(n, pol.number("angle_deg", 0.0) * std::numbers::pi / 180.0);
      }
      return haar_orthogonal(n, pol.integer("haar_seed", 0));
    };
    if (kind == "constant") {
      cfg.policy = ConstantPolicy{single_matrix("")};
    } else if (kind == "piecewise-exit-time") {
      ExitTimePolicy p;
      p.h = pol.positive("h", 0.1);
      const int given = pol.has("matrices") + pol.has("angles_deg") + pol.has("haar_count");
      if (given != 1) invalid("[policy] give exactly one of matrices, angles_deg, haar_count");
      if (pol.has("matrices")) {
        for (const auto& m : split(pol.required_text("matrices"), "|"))
          p.matrices.push_back(orthogonal_or_throw(pol.where("matrices"), parse_matrix(pol.where("matrices"), m, n)));
      } else if (pol.has("angles_deg")) {
        if (n < 2) invalid("[policy] angles_deg needs dim >= 2");
        for (double a : to_doubles(pol.where("angles_deg"), pol.required_text("angles_deg")))
          p.matrices.push_back(plane_rotation(n, a * std::numbers::pi / 180.0));
      } else {
        const auto count = pol.integer_at_least("haar_count", 1, 1);
        Engine engine(pol.integer("haar_seed", 0));
        for (std::uint64_t i = 0; i < count; ++i) p.matrices.push_back(haar_orthogonal(n, engine));
      }
      cfg.policy = p;
    } else if (kind == "seeded-haar-per-exit") {
      cfg.policy = HaarPerExitPolicy{pol.positive("h", 0.1), 0};
    } else if (kind == "diagonalizing") {
      const auto w = pol.integer_at_least("window", default_window(n), 1);
      if (w < n) invalid("[policy] window must be >= dim");
      cfg.policy = DiagonalizingPolicy{w};
    } else if (kind == "drift-aligning") {
      cfg.policy = DriftAligningPolicy{pol.integer_at_least("window", default_window(n), 1)};
    } else {
      invalid("[policy] kind `" + kind + "` is not one of constant, piecewise-exit-time, seeded-haar-per-exit, "
              "diagonalizing, drift-aligning");
    }
    // invariance runs always drive exit-time policies by W
    if (uses_exit_times(*cfg.policy) && cfg.experiment != Experiment::invariance) {
      const std::string driver = pol.text("driver", "w");
      if (driver != "w" && driver != "z") invalid("[policy] driver must be w or z");
      cfg.policy_driver_is_w = driver == "w";
    }
  }
  pol.finish();

  // [test]
  Section test(child("test"), "test", echo);
  auto read_scalar_expectations = [&] {
    cfg.expect_scalar_qv = test.optional_flag("expect_scalar_qv");
    if (cfg.expect_scalar_qv) {
      cfg.scalar_tolerance = test.positive("scalar_tolerance", kScalarQVTolerance);
      cfg.min_fraction = test.positive("min_fraction", 0.99);
      if (cfg.min_fraction > 1.0) invalid("[test] min_fraction must be <= 1");
    }
    cfg.expect_drift = test.optional_flag("expect_drift");
  };
  const std::size_t m = cfg.job.grid.steps();
  switch (cfg.experiment) {
    case Experiment::simulate:
      cfg.paths = test.integer_at_least("paths", 100, 1);
      read_scalar_expectations();
      if (cfg.expect_drift && cfg.paths < 2) invalid("[test] expect_drift needs paths >= 2");
      break;
    case Experiment::rotate:
      cfg.paths = test.integer_at_least("paths", 10, 1);
      break;
    case Experiment::roundtrip:
      cfg.paths = test.integer_at_least("paths", 100, 1);
      cfg.roundtrip_tolerance = test.positive("tolerance", 1e-12);
      break;
    case Experiment::reconstruct:
      cfg.paths = test.integer_at_least("paths", 1, 1);
      cfg.window = test.integer_at_least("window", 200, 1);
      cfg.eps_pd = test.positive("eps_pd", kDefaultEpsPd);
      cfg.qv_tolerance = test.positive("qv_tolerance", 0.08);
      cfg.oracle_tolerance = test.positive("oracle_tolerance", 1e-10);
      break;
    case Experiment::invariance: {
      cfg.paths = test.integer_at_least("paths", 5000, 20);
      for (const auto& f : split(test.required_text("functionals"), ",")) {
        try {
          cfg.functionals.push_back(Functional::parse(f));
        } catch (const Error& e) {
          invalid(std::string("[test] functionals: ") + e.what());
        }
        const auto& fn = cfg.functionals.back();
        if ((fn.kind == FunctionalKind::coordinate || fn.kind == FunctionalKind::running_max) && fn.coordinate >= n) {
          invalid("[test] functional `" + f + "` names a coordinate beyond dim");
        }
        if (fn.time > cfg.job.grid.t_max()) invalid("[test] functional `" + f + "` is evaluated past t_max");
      }
      cfg.repetitions = test.integer_at_least("repetitions", 1, 1);
      const std::string e = test.text("expect", "invariant");
      if (e == "invariant") {
        cfg.invariance_expect = InvarianceExpectation::invariant;
        cfg.min_pass = test.integer_at_least("min_pass", cfg.repetitions, 1);
        if (cfg.min_pass > cfg.repetitions) invalid("[test] min_pass exceeds repetitions");
      } else if (e == "not-invariant") {
        cfg.invariance_expect = InvarianceExpectation::not_invariant;
        cfg.reject_below = test.positive("reject_below", 1e-6);
      } else {
        invalid("[test] expect must be invariant or not-invariant");
      }
      break;
    }
    case Experiment::decomposition: {
      cfg.paths = test.integer_at_least("paths", 2000, 20);
      cfg.window = test.integer_at_least("window", 200, 1);
      cfg.eps_pd = test.positive("eps_pd", kDefaultEpsPd);
      cfg.n_permutations = test.integer_at_least("n_permutations", 200, 99);
      const std::string e = test.text("expect", "independent");
      if (e == "independent") {
        cfg.independence_expect = IndependenceExpectation::independent;
        cfg.independence_alpha = test.positive("alpha", 0.01);
      } else if (e == "dependent") {
        cfg.independence_expect = IndependenceExpectation::dependent;
        cfg.dependence_alpha = test.positive("alpha", 0.001);
        if (1.0 / static_cast<double>(1 + cfg.n_permutations) >= cfg.dependence_alpha) {
          invalid("[test] alpha is below the smallest attainable permutation p-value 1/(1 + n_permutations)");
        }
      } else {
        invalid("[test] expect must be independent or dependent");
      }
      read_scalar_expectations();
      break;
    }
    case Experiment::exit_moments: {
      auto& e = cfg.exit;
      e.n = test.integer_at_least("n", 2, 1);
      cfg.exit_radii = to_doubles(test.where("h"), test.required_text("h"));
      echo["test"]["h"] = cfg.exit_radii;
      for (double h : cfg.exit_radii)
        if (!(h > 0.0)) invalid("[test] h must be positive");
      e.paths = test.integer_at_least("paths", 20000, 20);
      const std::string method = test.text("method", "grid");
      if (method == "grid") {
        e.method = ExitMethod::grid;
        e.dt = test.positive("dt", 1e-4);
        e.refine = static_cast<int>(test.integer("refine", 0));
        if (e.refine > 10) invalid("[test] refine must be <= 10");
        e.horizon = test.number("horizon", 0.0);
        if (e.horizon < 0.0) invalid("[test] horizon must be >= 0 (0 selects the default)");
        e.mean_bias_allowance = test.number("mean_bias_allowance", 0.01);
        e.var_bias_allowance = test.number("var_bias_allowance", 0.02);
        if (e.mean_bias_allowance < 0.0 || e.var_bias_allowance < 0.0) invalid("[test] allowances must be >= 0");
        cfg.halving_check = test.flag("halving_check", false);
      } else if (method == "exact") {
        e.method = ExitMethod::exact;
        if (e.n > BallExitLaw::kMaxDim) invalid("[test] the exact method supports n <= 4");
      } else {
        invalid("[test] method must be grid or exact");
      }
      std::string def = "mean, variance, tau_k_mean, tau_k_variance, iid";
      if (cfg.exit_radii.size() > 1) def += ", tau_k_variance_decreasing";
      if (cfg.halving_check) def += ", halving";
      static const std::set<std::string> known{"mean", "variance", "tau_k_mean", "tau_k_variance", "iid",
                                               "tau_k_variance_decreasing", "halving"};
      for (const auto& c : split(test.text("checks", def), ",")) {
        if (!known.count(c)) invalid("[test] unknown check `" + c + "`");
        if (c == "halving" && !cfg.halving_check) invalid("[test] check `halving` needs halving_check = true");
        if (c == "tau_k_variance_decreasing" && cfg.exit_radii.size() < 2) {
          invalid("[test] check `tau_k_variance_decreasing` needs several h values");
        }
        cfg.exit_checks.push_back(c);
      }
      break;
    }
  }
  test.finish();

  if ((cfg.experiment == Experiment::reconstruct || cfg.experiment == Experiment::decomposition) &&
      (cfg.window < n || cfg.window > m)) {
    invalid("[test] window must lie between dim and the number of steps");
  }
  if (cfg.policy) {
    if (const auto* d = std::get_if<DiagonalizingPolicy>(&*cfg.policy); d && d->window > m) {
      invalid("[policy] window exceeds the number of steps");
    }
  }
  if (cfg.dump_paths) cfg.dump_count = std::min<std::size_t>(cfg.dump_count, cfg.paths);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& file, const RunOverrides& overrides = {}) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::ConfigInvalid, "cannot open config file `" + file.string() + "`");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::ConfigInvalid, "line " + std::to_string(e.line()) + ": " + e.message());
  }
  return parse_config(tree, overrides);
}

// ---------------------------------------------------------------------------
// Experiments

struct RunResult {
  nlohmann::json report;
  bool passed = true;
};

namespace runner_detail {

using nlohmann::json;

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < m.size(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline json check(const std::string& name, bool passed, json detail = json::object()) {
  detail["name"] = name;
  detail["passed"] = passed;
  return detail;
}

struct Dumper {
  const ExperimentConfig& cfg;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents

  template <class Fn>
  void add(const std::string& name, Fn&& write) {
    std::ostringstream os;
    write(os);
    files.emplace_back(name, os.str());
  }
};

inline RotationSchedule schedule_for(const ExperimentConfig& cfg, const SimulatedPath& sim, std::size_t index) {
  RotationPolicy policy = *cfg.policy;
  if (auto* h = std::get_if<HaarPerExitPolicy>(&policy)) h->seed = seed_for_path(cfg.base_seed, index, StreamTag::policy);
  const Path& driver = uses_exit_times(policy) && cfg.policy_driver_is_w ? sim.w : sim.z;
  return realize_policy(policy, driver);
}

inline double relative_max_deviation(const Path& a, const Path& b) {
  double dev = 0.0, scale = 0.0;
  for (std::size_t k = 0; k <= a.steps(); ++k)
    for (std::size_t i = 0; i < a.dim(); ++i) {
      dev = std::max(dev, std::abs(a(k, i) - b(k, i)));
      scale = std::max(scale, std::abs(b(k, i)));
    }
  return scale > 0.0 ? dev / scale : dev;
}

inline void ensemble_terminal(json& results, std::span<const double> terminal, std::size_t count, std::size_t n,
                              bool& drift_detected) {
  std::vector<double> mean(n, 0.0), se(n, 0.0);
  drift_detected = false;
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += terminal[i * n + c];
    mean[c] = s / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t i = 0; i < count; ++i) ss += (terminal[i * n + c] - mean[c]) * (terminal[i * n + c] - mean[c]);
    se[c] = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1) / static_cast<double>(count)) : 0.0;
    if (count > 1 && std::abs(mean[c]) > 3.0 * se[c]) drift_detected = true;
  }
  results["terminal_mean"] = mean;
  results["terminal_se"] = se;
  results["drift_detected"] = drift_detected;
}

inline void scalar_and_drift_checks(const ExperimentConfig& cfg, json& tests, double fraction, bool drift) {
  if (cfg.expect_scalar_qv) {
    const double got = *cfg.expect_scalar_qv ? fraction : 1.0 - fraction;
    tests.push_back(check("scalar_qv", got >= cfg.min_fraction,
                          {{"expected", *cfg.expect_scalar_qv}, {"fraction_as_expected", got},
                           {"min_fraction", cfg.min_fraction}}));
  }
  if (cfg.expect_drift) {
    tests.push_back(check("drift", drift == *cfg.expect_drift, {{"expected", *cfg.expect_drift}, {"detected", drift}}));
  }
}

inline void run_simulate(const ExperimentConfig& cfg, json& results, json& tests, Dumper& dump) {
  const std::size_t n = cfg.job.dim, count = cfg.paths, m = cfg.job.grid.steps();
  std::vector<double> terminal(count * n), qv(count * n * n);
  std::vector<char> scalar(count);
  parallel_for(count, cfg.workers, [&](std::size_t i) {
    const SimulatedPath sim = simulate_path(cfg.job, i);
    const auto rc = realized_covariation(sim.z);
    for (std::size_t c = 0; c < n; ++c) terminal[i * n + c] = sim.z(m, c);
    std::ranges::copy(rc.a_hat.view(m), qv.begin() + static_cast<std::ptrdiff_t>(i * n * n));
    scalar[i] = scalar_qv_check(rc, cfg.scalar_tolerance, cfg.scalar_tolerance).is_scalar;
  });
  Matrix mean_qv(n);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t e = 0; e < n * n; ++e) mean_qv.data()[e] += qv[i * n * n + e] / static_cast<double>(count);
  const double fraction = static_cast<double>(std::count(scalar.begin(), scalar.end(), 1)) / static_cast<double>(count);
  results["paths"] = count;
  results["mean_qv_T"] = matrix_json(mean_qv);
  results["scalar_qv_fraction"] = fraction;
  bool drift = false;
  ensemble_terminal(results, terminal, count, n, drift);
  scalar_and_drift_checks(cfg, tests, fraction, drift);
  for (std::size_t i = 0; i < cfg.dump_count; ++i) {
    dump.add("paths_" + std::to_string(i) + ".csv", [&](std::ostream& os) { write_path_csv(os, simulate_path(cfg.job, i).z); });
  }
}

inline void run_rotate(const ExperimentConfig& cfg, json& results, json& tests, Dumper& dump) {
  const std::size_t n = cfg.job.dim, count = cfg.paths, m = cfg.job.grid.steps();
  std::vector<double> isometry(count), transform(count), ortho(count);
  std::vector<char> scalar(count);
  parallel_for(count, cfg.workers, [&](std::size_t i) {
    const SimulatedPath sim = simulate_path(cfg.job, i);
    const RotationSchedule s = schedule_for(cfg, sim, i);
    const Path zr = apply_rotation(sim.z, s);
    Matrix expect(n);
    std::vector<double> d(n), r(n);
    double iso = 0.0, orth = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      double n0 = 0.0, n1 = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        d[c] = sim.z(k + 1, c) - sim.z(k, c);
        n0 += d[c] * d[c];
      }
      matvec(s.mats.view(k), d, r);
      for (double x : r) n1 += x * x;
      if (n0 > 0.0) iso = std::max(iso, std::abs(std::sqrt(n1) - std::sqrt(n0)) / std::sqrt(n0));
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) expect(a, b) += r[a] * r[b];
      orth = std::max(orth, orthogonality_defect(s.mats.at(k)));
    }
    const auto rc = realized_covariation(zr);
    const double scale = max_abs(expect);
    isometry[i] = iso;
    transform[i] = scale > 0.0 ? max_abs(rc.a_hat.at(m) - expect) / scale : max_abs(rc.a_hat.at(m));
    ortho[i] = orth;
    scalar[i] = scalar_qv_check(rc, kScalarQVTolerance, kScalarQVTolerance).is_scalar;
  });
  const double iso = *std::ranges::max_element(isometry);
  const double tr = *std::ranges::max_element(transform);
  const double orth = *std::ranges::max_element(ortho);
  results["paths"] = count;
  results["max_isometry_deviation"] = iso;
  results["max_characteristics_deviation"] = tr;
  results["max_orthogonality_defect"] = orth;
  results["rotated_scalar_qv_fraction"] =
      static_cast<double>(std::count(scalar.begin(), scalar.end(), 1)) / static_cast<double>(count);
  tests.push_back(check("orthogonality", orth <= kOrthogonalityTolerance, {{"tolerance", kOrthogonalityTolerance}}));
  tests.push_back(check("isometry", iso <= 1e-13, {{"tolerance", 1e-13}}));
  tests.push_back(check("characteristics_transform", tr <= 1e-12, {{"tolerance", 1e-12}}));
  for (std::size_t i = 0; i < cfg.dump_count; ++i) {
    const SimulatedPath sim = simulate_path(cfg.job, i);
    const RotationSchedule s = schedule_for(cfg, sim, i);
    const std::string id = std::to_string(i);
    dump.add("paths_" + id + ".csv", [&](std::ostream& os) { write_path_csv(os, sim.z); });
    dump.add("paths_rotated_" + id + ".csv", [&](std::ostream& os) { write_path_csv(os, apply_rotation(sim.z, s)); });
    dump.add("schedule_" + id + ".csv", [&](std::ostream& os) { write_schedule_csv(os, s); });
  }
}

inline void run_roundtrip(const ExperimentConfig& cfg, json& results, json& tests, Dumper& dump) {
  const std::size_t count = cfg.paths;
  const bool exits = uses_exit_times(*cfg.policy);
  const double h = exits ? std::visit(
                               [](const auto& p) -> double {
                                 if constexpr (requires { p.h; }) return p.h;
                                 else return 0.0;
                               },
                               *cfg.policy)
                         : 0.0;
  std::vector<double> dev(count);
  std::vector<char> same(count, 1);
  std::vector<std::size_t> exit_count(count, 0);
  parallel_for(count, cfg.workers, [&](std::size_t i) {
    const SimulatedPath sim = simulate_path(cfg.job, i);
    const RotationSchedule s = schedule_for(cfg, sim, i);
    const Path back = apply_rotation(apply_rotation(sim.z, s), inverse_schedule(s));
    Path origin_based = sim.z;
    for (std::size_t k = 0; k <= sim.z.steps(); ++k)
      for (std::size_t c = 0; c < sim.z.dim(); ++c) origin_based(k, c) = sim.z(k, c) - sim.z(0, c);
    dev[i] = relative_max_deviation(back, origin_based);
    if (exits) {
      const Path& driver = cfg.policy_driver_is_w ? sim.w : sim.z;
      const auto before = exit_times(driver, h);
      const auto after = exit_times(apply_rotation(driver, s), h);
      same[i] = before.indices == after.indices;
      exit_count[i] = before.indices.size();
    }
  });
  const double worst = *std::ranges::max_element(dev);
  results["paths"] = count;
  results["max_relative_deviation"] = worst;
  tests.push_back(check("roundtrip", worst <= cfg.roundtrip_tolerance, {{"tolerance", cfg.roundtrip_tolerance}}));
  if (exits) {
    const auto mismatched = static_cast<std::size_t>(std::count(same.begin(), same.end(), 0));
    std::size_t total = 0;
    for (auto c : exit_count) total += c;
    results["exit_indices_compared"] = total;
    results["paths_with_changed_exit_indices"] = mismatched;
    tests.push_back(check("exit_indices_preserved", mismatched == 0));
  }
  for (std::size_t i = 0; i < cfg.dump_count; ++i) {
    const SimulatedPath sim = simulate_path(cfg.job, i);
    const RotationSchedule s = schedule_for(cfg, sim, i);
    const std::string id = std::to_string(i);
    dump.add("paths_" + id + ".csv", [&](std::ostream& os) { write_path_csv(os, sim.z); });
    dump.add("paths_rotated_" + id + ".csv", [&](std::ostream& os) { write_path_csv(os, apply_rotation(sim.z, s)); });
    dump.add("schedule_" + id + ".csv", [&](std::ostream& os) { write_schedule_csv(os, s); });
  }
}

inline void run_reconstruct(const ExperimentConfig& cfg, json& results, json& tests, Dumper& dump) {
  const std::size_t count = cfg.paths;
  const bool oracle_applies = !std::holds_alternative<DriftedProcess>(cfg.job.process);
  const double t = cfg.job.grid.t_max();
  std::vector<double> qv(count), qv_post(count), oracle(count, 0.0), oracle_qv(count, 0.0);
  std::vector<char> scalar(count);
  parallel_for(count, cfg.workers, [&](std::size_t i) {
    const SimulatedPath sim = simulate_path(cfg.job, i);
    const Decomposition d = reconstruct_brownian(sim.z, cfg.window, cfg.eps_pd);
    qv[i] = d.qv_deviation;
    qv_post[i] = d.qv_deviation_post_burn_in;
    scalar[i] = d.scalar_qv.is_scalar;
    if (oracle_applies) {
      const Decomposition o = reconstruct_with_oracle_density(sim.z, true_density(cfg.job, sim), cfg.eps_pd);
      oracle[i] = relative_max_deviation(o.w_hat, sim.w);
      oracle_qv[i] = o.qv_deviation;
    }
  });
  const double worst = *std::ranges::max_element(qv);
  results["paths"] = count;
  results["window"] = cfg.window;
  results["max_qv_deviation"] = worst;
  results["max_qv_deviation_post_burn_in"] = *std::ranges::max_element(qv_post);
  results["scalar_qv_fraction"] =
      static_cast<double>(std::count(scalar.begin(), scalar.end(), 1)) / static_cast<double>(count);
  tests.push_back(check("estimated_density_qv", worst <= cfg.qv_tolerance * t,
                        {{"tolerance", cfg.qv_tolerance * t}, {"statistic", worst}}));
  if (oracle_applies) {
    const double o = *std::ranges::max_element(oracle);
    results["oracle_max_relative_deviation"] = o;
    results["oracle_max_qv_deviation"] = *std::ranges::max_element(oracle_qv);
    tests.push_back(check("oracle_density_recovers_w", o <= cfg.oracle_tolerance,
                          {{"tolerance", cfg.oracle_tolerance}, {"statistic", o}}));
  }
  for (std::size_t i = 0; i < cfg.dump_count; ++i) {
    const SimulatedPath sim = simulate_path(cfg.job, i);
    const std::string id = std::to_string(i);
    dump.add("paths_" + id + ".csv", [&](std::ostream& os) { write_path_csv(os, sim.z); });
    dump.add("decomposition_" + id + ".csv", [&](std::ostream& os) {
      write_decomposition_csv(os, reconstruct_brownian(sim.z, cfg.window, cfg.eps_pd));
    });
  }
}

inline void run_invariance(const ExperimentConfig& cfg, json& results, json& tests, Dumper& dump) {
  json reps = json::array();
  std::size_t invariant_count = 0, rejected_count = 0;
  double smallest_p = 1.0;
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    SimJob job = cfg.job;
    job.base_seed = cfg.base_seed + r;
    const InvarianceReport rep = invariance_experiment(job, *cfg.policy, cfg.functionals, cfg.paths, cfg.workers);
    json fs = json::array();
    double rep_min = 1.0;
    for (std::size_t f = 0; f < rep.results.size(); ++f) {
      const auto& t = rep.results[f];
      fs.push_back({{"functional", t.functional}, {"ks_statistic", t.ks_statistic}, {"p_value", t.p_value},
                    {"adjusted_p", rep.adjusted_p[f]}, {"n1", t.n1}, {"n2", t.n2}});
      rep_min = std::min(rep_min, t.p_value);
    }
    smallest_p = std::min(smallest_p, rep_min);
    invariant_count += rep.invariant;
    rejected_count += rep_min < cfg.reject_below;
    reps.push_back({{"base_seed", job.base_seed}, {"invariant", rep.invariant}, {"functionals", fs}});
  }
  results["paths_per_sample"] = cfg.paths;
  results["repetitions"] = reps;
  results["invariant_count"] = invariant_count;
  results["smallest_p_value"] = smallest_p;
  if (cfg.invariance_expect == InvarianceExpectation::invariant) {
    tests.push_back(check("invariance", invariant_count >= cfg.min_pass,
                          {{"invariant_count", invariant_count}, {"min_pass", cfg.min_pass}}));
  } else {
    tests.push_back(check("rejection", rejected_count == cfg.repetitions,
                          {{"reject_below", cfg.reject_below}, {"rejected_count", rejected_count}}));
  }
  for (std::size_t i = 0; i < cfg.dump_count; ++i) {
    const SimulatedPath a = simulate_path(cfg.job, i);
    const SimulatedPath b = simulate_path(cfg.job, cfg.paths + i);
    const RotationSchedule s = schedule_for(cfg, b, cfg.paths + i);
    const std::string id = std::to_string(i);
    dump.add("paths_" + id + ".csv", [&](std::ostream& os) { write_path_csv(os, a.z); });
    dump.add("paths_rotated_" + id + ".csv", [&](std::ostream& os) { write_path_csv(os, apply_rotation(b.z, s)); });
    dump.add("schedule_" + id + ".csv", [&](std::ostream& os) { write_schedule_csv(os, s); });
  }
}

inline void run_decomposition(const ExperimentConfig& cfg, json& results, json& tests, Dumper& dump) {
  DecompositionParams p;
  p.paths = cfg.paths;
  p.window = cfg.window;
  p.eps_pd = cfg.eps_pd;
  p.n_permutations = cfg.n_permutations;
  p.workers = cfg.workers;
  const DecompositionReport rep = decomposition_experiment(cfg.job, p);
  const auto& ind = rep.independence;
  results["independence"] = {{"statistic", ind.statistic}, {"p_value", ind.p_value}, {"n_samples", ind.n_samples},
                             {"n_permutations", ind.n_permutations}, {"seed", ind.seed},
                             {"x", "(F_hat(T/2), F_hat(T))"}, {"y", "(w_hat(T/2), w_hat(T))"}};
  results["paths"] = rep.paths;
  results["scalar_qv_fraction"] = rep.scalar_qv_fraction;
  results["mean_qv_deviation_post_burn_in"] = rep.mean_qv_deviation;
  results["max_qv_deviation_post_burn_in"] = rep.max_qv_deviation;
  results["terminal_mean"] = rep.terminal_mean;
  results["terminal_se"] = rep.terminal_se;
  results["drift_detected"] = rep.drift_detected;
  if (cfg.independence_expect == IndependenceExpectation::independent) {
    tests.push_back(check("independence", ind.p_value > cfg.independence_alpha,
                          {{"expected", "independent"}, {"alpha", cfg.independence_alpha}, {"p_value", ind.p_value}}));
  } else {
    tests.push_back(check("independence", ind.p_value < cfg.dependence_alpha,
                          {{"expected", "dependent"}, {"alpha", cfg.dependence_alpha}, {"p_value", ind.p_value}}));
  }
  scalar_and_drift_checks(cfg, tests, rep.scalar_qv_fraction, rep.drift_detected);
  for (std::size_t i = 0; i < cfg.dump_count; ++i) {
    const SimulatedPath sim = simulate_path(cfg.job, i);
    dump.add("decomposition_" + std::to_string(i) + ".csv", [&](std::ostream& os) {
      write_decomposition_csv(os, reconstruct_brownian(sim.z, cfg.window, cfg.eps_pd));
    });
  }
}

inline json exit_run_json(const ExitMomentReport& r) {
  return {{"h", r.h},
          {"n", r.n},
          {"method", r.method == ExitMethod::grid ? "grid" : "exact"},
          {"dt_effective", r.dt},
          {"paths", r.paths},
          {"truncated", r.truncated},
          {"k_h", r.k_h},
          {"mean_scaled", r.mean_scaled},
          {"mean_target", r.mean_target},
          {"se_mean", r.se_mean},
          {"var_scaled", r.var_scaled},
          {"var_target", r.var_target},
          {"se_var", r.se_var},
          {"tau_k_mean", r.tau_k_mean},
          {"tau_k_mean_target", r.tau_k_mean_target},
          {"tau_k_se_mean", r.tau_k_se_mean},
          {"tau_k_var", r.tau_k_var},
          {"tau_k_var_target", r.tau_k_var_target},
          {"tau_k_se_var", r.tau_k_se_var},
          {"lag1_autocorrelation", r.lag1_autocorrelation},
          {"lag1_threshold", r.lag1_threshold}};
}

inline void run_exit_moments(const ExperimentConfig& cfg, json& results, json& tests) {
  const auto wants = [&](const char* c) { return std::ranges::find(cfg.exit_checks, c) != cfg.exit_checks.end(); };
  json runs = json::array();
  std::vector<double> variances;
  for (double h : cfg.exit_radii) {
    ExitMomentParams p = cfg.exit;
    p.h = h;
    const ExitMomentReport r = exit_moment_experiment(p);
    runs.push_back(exit_run_json(r));
    variances.push_back(r.tau_k_var);
    const json at{{"h", h}};
    auto with = [&](json extra) {
      extra.update(at);
      return extra;
    };
    const bool grid = p.method == ExitMethod::grid;
    const double mb = grid ? p.mean_bias_allowance : 0.0, vb = grid ? p.var_bias_allowance : 0.0;
    if (wants("mean"))
      tests.push_back(check("mean", r.mean_ok,
                            with({{"statistic", r.mean_scaled}, {"target", r.mean_target},
                                  {"tolerance", 3.0 * r.se_mean + mb * r.mean_target}})));
    if (wants("variance"))
      tests.push_back(check("variance", r.var_ok,
                            with({{"statistic", r.var_scaled}, {"target", r.var_target},
                                  {"tolerance", 3.0 * r.se_var + vb * r.var_target}})));
    if (wants("tau_k_mean"))
      tests.push_back(check("tau_k_mean", r.tau_k_mean_ok,
                            with({{"statistic", r.tau_k_mean}, {"target", r.tau_k_mean_target},
                                  {"tolerance", 3.0 * r.tau_k_se_mean + mb * r.tau_k_mean_target}})));
    if (wants("tau_k_variance"))
      tests.push_back(check("tau_k_variance", r.tau_k_var_ok,
                            with({{"statistic", r.tau_k_var}, {"target", r.tau_k_var_target},
                                  {"tolerance", 3.0 * r.tau_k_se_var + vb * r.tau_k_var_target}})));
    if (wants("iid"))
      tests.push_back(check("iid", r.iid_ok,
                            with({{"statistic", r.lag1_autocorrelation}, {"tolerance", r.lag1_threshold}})));
    if (cfg.halving_check) {
      p.refine += 1;
      const ExitMomentReport fine = exit_moment_experiment(p);
      const bool closer = std::abs(fine.mean_scaled - fine.mean_target) < std::abs(r.mean_scaled - r.mean_target);
      runs.back()["halved_dt"] = exit_run_json(fine);
      if (wants("halving"))
        tests.push_back(check("halving", closer,
                              with({{"mean_scaled", r.mean_scaled}, {"mean_scaled_halved_dt", fine.mean_scaled},
                                    {"target", r.mean_target}})));
    }
  }
  results["runs"] = runs;
  if (wants("tau_k_variance_decreasing")) {
    // ordered by decreasing h
    std::vector<std::size_t> order(cfg.exit_radii.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return cfg.exit_radii[a] > cfg.exit_radii[b]; });
    bool decreasing = true;
    for (std::size_t i = 1; i < order.size(); ++i) decreasing &= variances[order[i]] < variances[order[i - 1]];
    tests.push_back(check("tau_k_variance_decreasing", decreasing));
  }
}

}  // namespace runner_detail

/// Runs a validated config. Library errors propagate to the caller; nothing is
/// written to disk here.
inline RunResult execute(const ExperimentConfig& cfg, std::vector<std::pair<std::string, std::string>>* files = nullptr) {
  using namespace runner_detail;
  const auto start = std::chrono::steady_clock::now();
  json results = json::object();
  json tests = json::array();
  Dumper dump{cfg, {}};
  switch (cfg.experiment) {
    case Experiment::simulate: run_simulate(cfg, results, tests, dump); break;
    case Experiment::rotate: run_rotate(cfg, results, tests, dump); break;
    case Experiment::roundtrip: run_roundtrip(cfg, results, tests, dump); break;
    case Experiment::reconstruct: run_reconstruct(cfg, results, tests, dump); break;
    case Experiment::invariance: run_invariance(cfg, results, tests, dump); break;
    case Experiment::decomposition: run_decomposition(cfg, results, tests, dump); break;
    case Experiment::exit_moments: run_exit_moments(cfg, results, tests); break;
  }
  const bool passed = std::ranges::all_of(tests, [](const json& t) { return t["passed"].get<bool>(); });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json report{{"schema_version", kSchemaVersion},
              {"config", cfg.echo},
              {"significance_policy", kSignificancePolicy},
              {"results", results},
              {"tests", tests},
              {"verdict", passed ? "pass" : "fail"},
              {"run_info",
               {{"wall_clock_seconds", seconds},
                {"workers", cfg.workers},
                {"version", kVersion},
                {"seed_rule", kSeedRule},
                {"out_dir", cfg.out_dir.string()}}}};
  if (files) *files = std::move(dump.files);
  return {std::move(report), passed};
}

/// The report without run_info: the part that must not depend on the worker
/// count or the machine.
inline nlohmann::json numerical_content(const nlohmann::json& report) {
  nlohmann::json copy = report;
  copy.erase("run_info");
  return copy;
}

struct RunOutcome {
  int status = 2;  // 0 pass, 1 a test failed, 2 usage/config/runtime error
  nlohmann::json report;
  std::string diagnostic;
};

/// Parse, validate, run, write outputs. Nothing touches the output directory
/// unless the config validated and the experiment finished.
inline RunOutcome run_config_file(const std::filesystem::path& file, const RunOverrides& overrides = {}) {
  RunOutcome out;
  ExperimentConfig cfg;
  try {
    cfg = load_config(file, overrides);
  } catch (const std::exception& e) {
    out.diagnostic = std::string("config error: ") + e.what();
    return out;
  }
  std::vector<std::pair<std::string, std::string>> files;
  RunResult result;
  try {
    result = execute(cfg, &files);
  } catch (const std::exception& e) {
    out.diagnostic = std::string("runtime error: ") + e.what();
    return out;
  }
  try {
    std::filesystem::create_directories(cfg.out_dir);
    for (const auto& [name, contents] : files) {
      std::ofstream os(cfg.out_dir / name);
      os << contents;
      if (!os) throw std::runtime_error("cannot write " + (cfg.out_dir / name).string());
    }
    std::ofstream os(cfg.out_dir / "report.json");
    os << result.report.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + (cfg.out_dir / "report.json").string());
  } catch (const std::exception& e) {
    out.diagnostic = std::string("output error: ") + e.what();
    return out;
  }
  out.status = result.passed ? 0 : 1;
  out.report = std::move(result.report);
  return out;
}

}  // namespace rotinv
