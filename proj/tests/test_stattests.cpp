#include "rotinv/stattests.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace rotinv;

namespace {

std::vector<double> normals(std::size_t n, double mean, std::uint64_t seed) {
  Engine e(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = mean + standard_normal(e);
  return v;
}

// Alternating series 2 sum (-1)^(k-1) exp(-2 k^2 x^2), many terms.
double kolmogorov_reference(double x) {
  double s = 0.0;
  for (int k = 1; k < 2000; ++k) s += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * x * x);
  return s;
}

SimJob brownian_job(double dt, std::uint64_t seed) {
  SimJob job;
  job.dim = 2;
  job.grid = TimeGrid::from_dt(1.0, dt);
  job.base_seed = seed;
  return job;
}

}  // namespace

TEST(Kolmogorov, MatchesReferenceSeries) {
  for (double x : {0.3, 0.5, 0.8, 0.99, 1.0, 1.01, 1.36, 1.63, 2.0, 3.0}) {
    EXPECT_NEAR(kolmogorov_survival(x), kolmogorov_reference(x), 1e-12) << x;
  }
  EXPECT_NEAR(kolmogorov_survival(1.3581), 0.05, 1e-4);
  EXPECT_NEAR(kolmogorov_survival(1.6276), 0.01, 1e-4);
  EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
  EXPECT_LT(kolmogorov_survival(0.1), 1.0 + 1e-15);
  EXPECT_NEAR(kolmogorov_survival(0.1), 1.0, 1e-12);
}

TEST(KsTwoSample, IdenticalSamples) {
  const auto x = normals(100, 0.0, 1);
  const auto r = ks_two_sample(x, x);
  EXPECT_EQ(r.ks_statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.n1, 100u);
}

TEST(KsTwoSample, MeanShiftIsDetected) {
  const auto r = ks_two_sample(normals(5000, 0.0, 1), normals(5000, 1.0, 2));
  EXPECT_LT(r.p_value, 1e-12);
  EXPECT_GT(r.ks_statistic, 0.3);
}

TEST(KsTwoSample, NullCalibration) {
  int pass = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    pass += ks_two_sample(normals(5000, 0.0, 2 * s + 10), normals(5000, 0.0, 2 * s + 11)).p_value > 0.005;
  }
  EXPECT_GE(pass, 99);
}

TEST(KsTwoSample, StatisticByDirectEnumeration) {
  // sup over all sample points of |F1 - F2| computed the slow way
  const auto x = normals(57, 0.0, 4);
  const auto y = normals(43, 0.4, 5);
  double d = 0.0;
  for (const auto* v : {&x, &y})
    for (double t : *v) {
      double f1 = 0.0, f2 = 0.0;
      for (double a : x) f1 += a <= t;
      for (double b : y) f2 += b <= t;
      d = std::max(d, std::abs(f1 / x.size() - f2 / y.size()));
    }
  const auto r = ks_two_sample(x, y);
  EXPECT_DOUBLE_EQ(r.ks_statistic, d);
  EXPECT_DOUBLE_EQ(r.p_value, kolmogorov_survival(std::sqrt(57.0 * 43.0 / 100.0) * d));
}

TEST(KsTwoSample, InvariantUnderMonotoneTransform) {
  auto x = normals(300, 0.0, 6);
  auto y = normals(400, 0.2, 7);
  const auto a = ks_two_sample(x, y);
  for (auto& v : x) v = std::exp(3.0 * v) - 2.0;
  for (auto& v : y) v = std::exp(3.0 * v) - 2.0;
  const auto b = ks_two_sample(x, y);
  EXPECT_EQ(a.ks_statistic, b.ks_statistic);
  EXPECT_EQ(a.p_value, b.p_value);
}

TEST(KsTwoSample, TooFewSamples) {
  try {
    ks_two_sample(normals(19, 0, 1), normals(100, 0, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewSamples);
  }
}

TEST(Holm, HandComputedExample) {
  const std::vector<double> p{0.01, 0.04, 0.03, 0.005};
  const auto adj = holm_adjust(p);
  EXPECT_DOUBLE_EQ(adj[0], 0.03);
  EXPECT_DOUBLE_EQ(adj[1], 0.06);
  EXPECT_DOUBLE_EQ(adj[2], 0.06);
  EXPECT_DOUBLE_EQ(adj[3], 0.02);
  EXPECT_EQ(holm_adjust(std::vector<double>{0.7, 0.9}), (std::vector<double>{1.0, 1.0}));
}

TEST(Functionals, ParseAndName) {
  EXPECT_EQ(Functional::parse("coord:1@T").name(), "coord:1@T");
  EXPECT_EQ(Functional::parse("running_max:2").name(), "running_max:2@T");
  const auto f = Functional::parse("qv_trace@0.5");
  EXPECT_EQ(f.kind, FunctionalKind::qv_trace);
  EXPECT_DOUBLE_EQ(f.time, 0.5);
  EXPECT_EQ(Functional::parse("F@T").kind, FunctionalKind::scalar_f);
  for (const char* bad : {"coord@T", "coord:0@T", "qv_trace:1@T", "speed@T", "coord:1@x", "coord:1@-1",
                          "coord:x@T", "coord:1x@T", "coord:-1@T", "qv_trace@0.5s", "qv_trace@"})
    EXPECT_THROW(Functional::parse(bad), Error) << bad;
}

TEST(Functionals, Evaluate) {
  const Path p(TimeGrid(1.0, 4), 2, {0, 0, 1, 0, 3, 1, 2, 1, 2, 3});
  EXPECT_EQ(evaluate(Functional::parse("coord:1@T"), p), 2.0);
  EXPECT_EQ(evaluate(Functional::parse("coord:2@0.5"), p), 1.0);
  EXPECT_EQ(evaluate(Functional::parse("running_max:1@T"), p), 3.0);
  EXPECT_EQ(evaluate(Functional::parse("running_max:1@0.25"), p), 1.0);
  // squared increments: 1, 4+1, 1, 4
  EXPECT_EQ(evaluate(Functional::parse("qv_trace@T"), p), 11.0);
  EXPECT_EQ(evaluate(Functional::parse("F@T"), p), 5.5);
  EXPECT_THROW(evaluate(Functional::parse("coord:3@T"), p), Error);
}

TEST(Invariance, BrownianUnderHaarExitSchedule) {
  const std::vector<Functional> f{Functional::parse("coord:1@T"), Functional::parse("qv_trace@T"),
                                  Functional::parse("running_max:1@T")};
  const auto rep = invariance_experiment(brownian_job(1e-3, 5), HaarPerExitPolicy{0.1, 0}, f, 2000, 1);
  EXPECT_TRUE(rep.invariant);
  ASSERT_EQ(rep.results.size(), 3u);
  for (double p : rep.adjusted_p) EXPECT_GT(p, 0.01);
}

TEST(Invariance, DriftedUnderQuarterTurnFails) {
  SimJob job = brownian_job(1e-2, 6);
  job.process = DriftedProcess{{1.0, 0.0}};
  const std::vector<Functional> f{Functional::parse("coord:1@T")};
  const auto rep = invariance_experiment(job, ConstantPolicy{plane_rotation(2, std::numbers::pi / 2)}, f, 5000, 1);
  EXPECT_LT(rep.results[0].p_value, 1e-10);
  EXPECT_FALSE(rep.invariant);
}

TEST(Invariance, AnisotropicUnderEighthTurnFails) {
  SimJob job = brownian_job(1e-2, 7);
  job.process = AnisotropicProcess{Matrix{{1.0, 0.0}, {0.0, 2.0}}};
  const std::vector<Functional> f{Functional::parse("coord:1@T")};
  const auto rep = invariance_experiment(job, ConstantPolicy{plane_rotation(2, std::numbers::pi / 4)}, f, 5000, 1);
  EXPECT_LT(rep.results[0].p_value, 1e-6);
}

TEST(Invariance, WorkerCountDoesNotChangeResults) {
  const std::vector<Functional> f{Functional::parse("coord:1@T"), Functional::parse("running_max:2@0.5")};
  const auto a = invariance_experiment(brownian_job(1e-2, 8), HaarPerExitPolicy{0.2, 0}, f, 300, 1);
  const auto b = invariance_experiment(brownian_job(1e-2, 8), HaarPerExitPolicy{0.2, 0}, f, 300, 4);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.results[i].ks_statistic, b.results[i].ks_statistic);
    EXPECT_EQ(a.results[i].p_value, b.results[i].p_value);
  }
}

TEST(ExitLaw, SurvivalIntegratesToClosedFormMoments) {
  // E[tau] = int S dt and E[tau^2] = 2 int t S dt, Simpson on [0, 40]
  for (std::size_t n = 1; n <= 4; ++n) {
    const BallExitLaw law(n);
    const double d = static_cast<double>(n);
    const int steps = 400000;
    const double hstep = 40.0 / steps;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i <= steps; ++i) {
      const double t = i * hstep;
      const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      const double s = law.survival(t);
      m1 += w * s;
      m2 += w * 2.0 * t * s;
    }
    m1 *= hstep / 3.0;
    m2 *= hstep / 3.0;
    EXPECT_NEAR(m1, exit_mean_target(n), 1e-9) << n;
    // E[tau^2] = var + mean^2 = (n + 4) / (n^2 (n + 2))
    EXPECT_NEAR(m2, (d + 4.0) / (d * d * (d + 2.0)), 1e-9) << n;
  }
  EXPECT_THROW(BallExitLaw(5), Error);
}

TEST(ExitLaw, OneDimensionalMatchesIntervalFormula) {
  // exit of [-1, 1]: P(tau > t) = 4/pi sum (-1)^k/(2k+1) exp(-(2k+1)^2 pi^2 t / 8)
  const BallExitLaw law(1);
  for (double t : {0.05, 0.1, 0.3, 1.0, 2.5}) {
    double s = 0.0;
    for (int k = 0; k < 500; ++k) {
      const double m = 2.0 * k + 1.0;
      s += (k % 2 ? -1.0 : 1.0) / m * std::exp(-m * m * std::numbers::pi * std::numbers::pi * t / 8.0);
    }
    EXPECT_NEAR(law.survival(t), 4.0 / std::numbers::pi * s, 1e-12) << t;
  }
}

TEST(ExitLaw, InverseSurvivalRoundTrips) {
  const BallExitLaw law(2);
  for (double s : {0.999999, 0.9, 0.5, 0.1, 1e-6, 1e-12}) {
    const double t = law.inverse_survival(s);
    EXPECT_NEAR(law.survival(t), s, 1e-12 + 1e-9 * s) << s;
  }
}

TEST(ExitLaw, SamplerMoments) {
  const BallExitLaw law(3);
  Engine e(12);
  const std::size_t count = 100000;
  std::vector<double> x(count);
  for (auto& v : x) v = law.sample(e);
  double m = 0.0, q = 0.0;
  for (double v : x) m += v / count;
  for (double v : x) q += (v - m) * (v - m) / (count - 1);
  EXPECT_NEAR(m, 1.0 / 3.0, 3.0 * std::sqrt(2.0 / 45.0 / count));
  EXPECT_NEAR(q, 2.0 / 45.0, 0.03 * 2.0 / 45.0);
}

TEST(ExitMoments, TargetsAndExitCount) {
  EXPECT_DOUBLE_EQ(exit_mean_target(2), 0.5);
  EXPECT_DOUBLE_EQ(exit_variance_target(2), 0.125);
  EXPECT_DOUBLE_EQ(exit_mean_target(3), 1.0 / 3.0);
  EXPECT_NEAR(exit_variance_target(3), 2.0 / 45.0, 1e-16);
  EXPECT_EQ(exits_to_unit_time(2, 0.1), 200u);
  EXPECT_EQ(exits_to_unit_time(2, 0.2), 50u);
  EXPECT_EQ(exits_to_unit_time(2, 0.05), 800u);
  EXPECT_EQ(exits_to_unit_time(3, 0.3), 33u);
  EXPECT_DOUBLE_EQ(0.5 * 0.01 * exits_to_unit_time(2, 0.1), 1.0);
}

TEST(ExitMoments, ExactMethodHitsTargets) {
  ExitMomentParams p;
  p.n = 2;
  p.h = 0.2;
  p.paths = 2000;
  p.method = ExitMethod::exact;
  p.seed = 4;
  const auto r = exit_moment_experiment(p);
  EXPECT_EQ(r.k_h, 50u);
  EXPECT_TRUE(r.pass()) << r.mean_scaled << " " << r.var_scaled << " " << r.tau_k_mean << " " << r.tau_k_var;
  EXPECT_DOUBLE_EQ(r.tau_k_mean_target, 1.0);
  EXPECT_DOUBLE_EQ(r.tau_k_var_target, 0.125 * 0.0016 * 50);
}

TEST(ExitMoments, GridMatchesPathBasedExitTimes) {
  ExitMomentParams p;
  p.n = 3;
  p.h = 0.3;
  p.paths = 50;
  p.dt = 1e-3;
  p.seed = 6;
  p.exits = 4;
  const auto r = exit_moment_experiment(p);
  // reference: the same paths through brownian() and exit_times()
  double first = 0.0, total = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    const Path w = brownian(3, TimeGrid::from_dt(5.0, 1e-3), seed_for_path(6, i, StreamTag::brownian));
    const auto e = exit_times(w, 0.3);
    ASSERT_GE(e.indices.size(), 4u);
    first += w.grid().time(e.indices[0]) / 0.09;
    total += w.grid().time(e.indices[3]);
  }
  EXPECT_NEAR(r.mean_scaled, first / 50, 1e-12);
  EXPECT_NEAR(r.tau_k_mean, total / 50, 1e-12);
  EXPECT_EQ(r.tracked_exits, 4u);
}

TEST(ExitMoments, HorizonTooShort) {
  ExitMomentParams p;
  p.n = 2;
  p.h = 0.5;
  p.paths = 100;
  p.dt = 1e-3;
  p.horizon = 0.05;
  try {
    exit_moment_experiment(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HorizonTooShort);
  }
}

TEST(ExitMoments, DoublingHQuadruplesMeanExit) {
  ExitMomentParams p;
  p.n = 2;
  p.paths = 4000;
  p.method = ExitMethod::exact;
  p.exits = 1;
  p.h = 0.1;
  const auto a = exit_moment_experiment(p);
  p.h = 0.2;
  p.seed = 1;
  const auto b = exit_moment_experiment(p);
  const double ma = a.mean_scaled * 0.01, mb = b.mean_scaled * 0.04;
  const double se = std::sqrt(std::pow(4.0 * a.se_mean * 0.01, 2) + std::pow(b.se_mean * 0.04, 2));
  EXPECT_NEAR(mb, 4.0 * ma, 3.0 * se);
}

TEST(ExitMoments, WorkerCountDoesNotChangeResults) {
  ExitMomentParams p;
  p.n = 2;
  p.h = 0.3;
  p.paths = 64;
  p.dt = 1e-3;
  p.refine = 1;
  p.workers = 1;
  const auto a = exit_moment_experiment(p);
  p.workers = 3;
  const auto b = exit_moment_experiment(p);
  EXPECT_EQ(a.mean_scaled, b.mean_scaled);
  EXPECT_EQ(a.tau_k_var, b.tau_k_var);
  EXPECT_EQ(a.lag1_autocorrelation, b.lag1_autocorrelation);
}

TEST(ExitMoments, BridgeRefinementPreservesCoarsePath) {
  // the refined increments sum back to the coarse increment
  Engine e(3);
  std::vector<double> out;
  const std::vector<double> inc{0.3, -0.2};
  detail::bridge_refine(inc, 1e-2, 3, e, out);
  ASSERT_EQ(out.size(), 16u);
  double s0 = 0.0, s1 = 0.0;
  for (std::size_t p = 0; p < 8; ++p) {
    s0 += out[2 * p];
    s1 += out[2 * p + 1];
  }
  EXPECT_NEAR(s0, 0.3, 1e-15);
  EXPECT_NEAR(s1, -0.2, 1e-15);
}
