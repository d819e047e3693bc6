#include "rotinv/rotations.hpp"
#include "rotinv/simulators.hpp"
#include "rotinv/stattests.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

using namespace rotinv;

namespace {

Path from_rows(double dt, const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.front().size();
  std::vector<double> v;
  for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
  return Path(TimeGrid(dt * static_cast<double>(rows.size() - 1), rows.size() - 1), n, v);
}

// Same path up to index `cut`, independent increments after it.
Path splice(const Path& a, const Path& b, std::size_t cut) {
  Path out = a;
  for (std::size_t k = cut + 1; k <= a.steps(); ++k)
    for (std::size_t i = 0; i < a.dim(); ++i) out(k, i) = a(cut, i) + (b(k, i) - b(cut, i));
  return out;
}

std::vector<RotationPolicy> all_policies(std::size_t n) {
  return {ConstantPolicy{haar_orthogonal(n, 1)},
          ExitTimePolicy{0.1, {haar_orthogonal(n, 2), haar_orthogonal(n, 3), haar_orthogonal(n, 4)}},
          HaarPerExitPolicy{0.1, 55}, DiagonalizingPolicy{50}, DriftAligningPolicy{50}};
}

}  // namespace

TEST(ExitTimes, StraightLineExitsEveryFiveSteps) {
  std::vector<std::vector<double>> rows;
  for (int k = 0; k <= 23; ++k) rows.push_back({0.1 * k, 0.0});
  const auto e = exit_times(from_rows(0.1, rows), 0.5);
  EXPECT_EQ(e.indices, (std::vector<std::size_t>{5, 10, 15, 20}));
  EXPECT_FALSE(e.complete);
}

TEST(ExitTimes, LargeRadiusNeverExits) {
  const Path w = brownian(2, TimeGrid(1.0, 1000), 3);
  const auto e = exit_times(w, 10.0 * w.max_norm() + 1.0);
  EXPECT_TRUE(e.indices.empty());
  EXPECT_FALSE(e.complete);
  EXPECT_THROW(exit_times(w, 0.0), Error);
}

TEST(ExitTimes, SequenceInvariant) {
  const Path w = brownian(3, TimeGrid(1.0, 5000), 8);
  const double h = 0.1;
  const auto e = exit_times(w, h);
  ASSERT_FALSE(e.indices.empty());
  std::size_t prev = 0;
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += (w(a, i) - w(b, i)) * (w(a, i) - w(b, i));
    return std::sqrt(s);
  };
  for (std::size_t k : e.indices) {
    EXPECT_GT(k, prev);
    EXPECT_GE(dist(k, prev), h);
    for (std::size_t m = prev + 1; m < k; ++m) EXPECT_LT(dist(m, prev), h);
    prev = k;
  }
}

TEST(ExitTimes, MeanFirstExitScalesAsHSquaredOverN) {
  // 2e4 paths, h = 0.1, dt = 1e-4. Grid monitoring overshoots by a term of
  // order sqrt(dt)/h, here about 13%, so the raw mean sits well above h^2/n.
  // Refining each path to dt/4 with Brownian bridges halves the bias, and the
  // Richardson combination 2 m(dt/4) - m(dt) removes the leading term.
  const std::size_t count = 20000;
  const TimeGrid g(0.1, 1000);
  double coarse = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto e = exit_times(brownian(2, g, seed_for_path(9, i, StreamTag::brownian)), 0.1);
    ASSERT_FALSE(e.indices.empty());
    coarse += g.time(e.indices.front());
  }
  coarse /= count;
  EXPECT_GT(coarse, 0.005);
  EXPECT_NEAR(coarse, 0.005, 0.005 * 0.2);
  // the streamed grid method reproduces the path-based first exits exactly
  ExitMomentParams p;
  p.n = 2;
  p.h = 0.1;
  p.paths = count;
  p.dt = 1e-4;
  p.seed = 9;
  p.exits = 1;
  const double streamed = exit_moment_experiment(p).mean_scaled * 0.01;
  EXPECT_NEAR(streamed, coarse, 1e-15);
  p.refine = 2;
  const double fine = exit_moment_experiment(p).mean_scaled * 0.01;
  EXPECT_LT(fine, coarse);
  EXPECT_NEAR(2.0 * fine - coarse, 0.005, 0.005 * 0.05);
}

TEST(Policy, ConstantRepeatsMatrix) {
  const Matrix b = plane_rotation(2, 0.7);
  const auto s = realize_policy(ConstantPolicy{b}, brownian(2, TimeGrid(1.0, 50), 1));
  ASSERT_EQ(s.size(), 50u);
  for (std::size_t k = 0; k < 50; ++k) EXPECT_EQ(s.mats.at(k), b);
}

TEST(Policy, ConstantRejectsNonOrthogonal) {
  EXPECT_THROW(realize_policy(ConstantPolicy{Matrix{{1.0, 0.1}, {0.0, 1.0}}}, brownian(2, TimeGrid(1.0, 5), 1)),
               Error);
}

TEST(Policy, PiecewiseHalfOpenIntervals) {
  // exits at grid indices 5 and 9 for h = 1
  std::vector<std::vector<double>> rows;
  for (double x : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.25, 1.5, 1.75, 2.0, 2.0, 2.1, 2.2, 2.3})
    rows.push_back({x, 0.0});
  const Path w = from_rows(0.1, rows);
  ASSERT_EQ(exit_times(w, 1.0).indices, (std::vector<std::size_t>{5, 9}));
  const Matrix r1 = plane_rotation(2, 0.1), r2 = plane_rotation(2, 0.2), r3 = plane_rotation(2, 0.3);
  const auto s = realize_policy(ExitTimePolicy{1.0, {r1, r2, r3}}, w);
  // mats[k] drives the increment ending at grid index k + 1
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(s.mats.at(k), r1) << k;
  for (std::size_t k = 5; k < 9; ++k) EXPECT_EQ(s.mats.at(k), r2) << k;
  for (std::size_t k = 9; k < 13; ++k) EXPECT_EQ(s.mats.at(k), r3) << k;
  // exhausted list repeats its last entry
  const auto t = realize_policy(ExitTimePolicy{1.0, {r1, r2}}, w);
  for (std::size_t k = 9; k < 13; ++k) EXPECT_EQ(t.mats.at(k), r2);
}

TEST(Policy, EmptyListAndSmallWindow) {
  const Path w = brownian(3, TimeGrid(1.0, 100), 1);
  try {
    realize_policy(ExitTimePolicy{0.1, {}}, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyMatrixList);
  }
  try {
    realize_policy(DiagonalizingPolicy{2}, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WindowTooSmall);
  }
}

TEST(Policy, DiagonalizingDecorrelatesAnisotropicDiffusion) {
  const Matrix sigma = plane_rotation(2, std::numbers::pi / 4) * Matrix{{1.0, 0.0}, {0.0, 2.0}};
  const Path z = anisotropic_diffusion(2, TimeGrid(1.0, 10000), 4, sigma);
  const Matrix before = realized_covariation(z).a_hat.at(10000);
  ASSERT_GT(std::abs(before(0, 1)), 0.05 * trace(before) / 2.0);
  const auto s = realize_policy(DiagonalizingPolicy{200}, z);
  const Matrix after = realized_covariation(apply_rotation(z, s)).a_hat.at(10000);
  EXPECT_LT(std::abs(after(0, 1)), 0.05 * trace(after) / 2.0);
  for (std::size_t k = 0; k < 200; ++k) EXPECT_EQ(s.mats.at(k), Matrix::identity(2));
}

TEST(Policy, DriftAligningPointsDriftAlongFirstAxis) {
  const TimeGrid g(1.0, 2000);
  const std::vector<double> drift{0.0, 40.0};
  const Path z = drifted_brownian(2, g, 12, drift);
  const Path zr = apply_rotation(z, realize_policy(DriftAligningPolicy{500}, z));
  // after the identity burn-in of 500 steps the drift of 40 runs along e1
  const double tail = g.t_max() - g.time(500);
  EXPECT_NEAR(zr(2000, 0) - zr(500, 0), 40.0 * tail, 3.0);
  EXPECT_NEAR(zr(2000, 1) - zr(500, 1), 0.0, 3.0);
}

TEST(Policy, DriftAligningUsesIdentityForZeroDrift) {
  const Path z(TimeGrid(1.0, 100), 3);
  const auto s = realize_policy(DriftAligningPolicy{10}, z);
  for (std::size_t k = 0; k < 100; ++k) EXPECT_EQ(s.mats.at(k), Matrix::identity(3));
}

TEST(RotationToFirstAxis, MapsUnitVectorToE1) {
  Engine eng(4);
  for (std::size_t n : {2u, 3u, 5u}) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> u(n);
      fill_standard_normal(eng, u);
      double norm = 0.0;
      for (double x : u) norm += x * x;
      for (double& x : u) x /= std::sqrt(norm);
      const Matrix r = rotation_to_first_axis(u);
      const auto v = r * std::span<const double>(u);
      EXPECT_NEAR(v[0], 1.0, 1e-13);
      for (std::size_t i = 1; i < n; ++i) EXPECT_NEAR(v[i], 0.0, 1e-13);
      EXPECT_LE(orthogonality_defect(r), 1e-13);
      EXPECT_NEAR(determinant(r), 1.0, 1e-12);
    }
  }
  // nearly antipodal input stays orthogonal
  const Matrix near = rotation_to_first_axis(std::vector<double>{-std::sqrt(1.0 - 1e-16), 1e-8, 0.0});
  EXPECT_LE(orthogonality_defect(near), 1e-14);
  const Matrix flip = rotation_to_first_axis(std::vector<double>{-1.0, 0.0, 0.0});
  EXPECT_EQ(flip * std::span<const double>(std::vector<double>{-1.0, 0.0, 0.0}), (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(RotationToFirstAxis, PlanarCaseIsTheSmallestAngle) {
  const double a = 0.6;
  const Matrix r = rotation_to_first_axis(std::vector<double>{std::cos(a), std::sin(a)});
  EXPECT_LE(max_abs(r - plane_rotation(2, -a)), 1e-15);
}

TEST(Predictability, PrefixDeterminesSchedule) {
  const TimeGrid g(1.0, 2000);
  const Path a = brownian(2, g, 100);
  const Path b = brownian(2, g, 200);
  for (std::size_t cut : {300u, 1200u}) {
    const Path m = splice(a, b, cut);
    for (const auto& pol : all_policies(2)) {
      const auto sa = realize_policy(pol, a);
      const auto sm = realize_policy(pol, m);
      for (std::size_t k = 0; k <= cut; ++k) ASSERT_EQ(sa.mats.at(k), sm.mats.at(k)) << policy_name(pol) << " " << k;
    }
  }
}

TEST(ApplyRotation, IdentityScheduleRecentres) {
  Path z = brownian(2, TimeGrid(1.0, 100), 5);
  for (std::size_t k = 0; k <= 100; ++k) z(k, 0) += 3.0;
  const Path zr = apply_rotation(z, realize_policy(ConstantPolicy{Matrix::identity(2)}, z));
  for (std::size_t k = 0; k <= 100; ++k) {
    EXPECT_EQ(zr(k, 0), z(k, 0) - 3.0 == 0.0 ? 0.0 : zr(k, 0));
    EXPECT_NEAR(zr(k, 0), z(k, 0) - 3.0, 1e-13);
    EXPECT_NEAR(zr(k, 1), z(k, 1) - z(0, 1), 1e-13);
  }
}

TEST(ApplyRotation, GridMismatch) {
  const Path z = brownian(2, TimeGrid(1.0, 100), 5);
  const auto s = realize_policy(ConstantPolicy{Matrix::identity(2)}, brownian(2, TimeGrid(1.0, 50), 5));
  try {
    apply_rotation(z, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
}

TEST(ApplyRotation, IsometryAndCharacteristicsTransform) {
  const Path z = anisotropic_diffusion(3, TimeGrid(1.0, 3000), 6, Matrix{{1, 0, 0}, {0.3, 2, 0}, {0, 0, 0.5}});
  for (const auto& pol : all_policies(3)) {
    const auto s = realize_policy(pol, z);
    const Path zr = apply_rotation(z, s);
    Matrix expect(3);
    for (std::size_t k = 0; k < z.steps(); ++k) {
      double n0 = 0.0, n1 = 0.0;
      std::vector<double> d(3);
      for (std::size_t i = 0; i < 3; ++i) {
        d[i] = z(k + 1, i) - z(k, i);
        n0 += d[i] * d[i];
        n1 += (zr(k + 1, i) - zr(k, i)) * (zr(k + 1, i) - zr(k, i));
      }
      ASSERT_NEAR(std::sqrt(n1), std::sqrt(n0), 1e-13 * std::sqrt(n0) + 1e-300) << policy_name(pol);
      const Matrix b = s.mats.at(k);
      const auto bd = b * std::span<const double>(d);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) expect(i, j) += bd[i] * bd[j];
    }
    const Matrix got = realized_covariation(zr).a_hat.at(z.steps());
    EXPECT_LE(max_abs(got - expect), 1e-12 * max_abs(expect)) << policy_name(pol);
  }
}

TEST(ApplyRotation, ConstantRotationConjugatesBrownianQv) {
  const Path w = brownian(2, TimeGrid(1.0, 10000), 5);
  const Matrix r = plane_rotation(2, 0.9);
  const Path wr = apply_rotation(w, realize_policy(ConstantPolicy{r}, w));
  const Matrix expect = r * realized_covariation(w).a_hat.at(10000) * transpose(r);
  EXPECT_LE(max_abs(realized_covariation(wr).a_hat.at(10000) - expect), 1e-12 * max_abs(expect));
}

TEST(InverseSchedule, IdentityAndRoundTrip) {
  const Path w = brownian(2, TimeGrid(1.0, 5000), 31);
  const auto id = realize_policy(ConstantPolicy{Matrix::identity(2)}, w);
  const auto inv_id = inverse_schedule(id);
  for (std::size_t k = 0; k < id.size(); ++k) EXPECT_EQ(inv_id.mats.at(k), Matrix::identity(2));
  for (const auto& pol : all_policies(2)) {
    const auto s = realize_policy(pol, w);
    const Path back = apply_rotation(apply_rotation(w, s), inverse_schedule(s));
    double dev = 0.0;
    for (std::size_t k = 0; k <= w.steps(); ++k)
      for (std::size_t i = 0; i < 2; ++i) dev = std::max(dev, std::abs(back(k, i) - w(k, i)));
    EXPECT_LE(dev, 1e-12 * w.max_norm()) << policy_name(pol);
  }
}

TEST(InverseSchedule, ExitIndicesSurviveTheTransform) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Path w = brownian(3, TimeGrid(1.0, 10000), seed);
    const auto s = realize_policy(HaarPerExitPolicy{0.1, seed + 1000}, w);
    EXPECT_EQ(exit_times(apply_rotation(w, s), 0.1).indices, exit_times(w, 0.1).indices);
  }
}

TEST(ScheduleCsv, HeaderAndRows) {
  const Path w = brownian(2, TimeGrid(1.0, 3), 5);
  std::stringstream ss;
  write_schedule_csv(ss, realize_policy(ConstantPolicy{Matrix::identity(2)}, w));
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "step,b1_1,b1_2,b2_1,b2_2");
  std::getline(ss, line);
  EXPECT_EQ(line, "1,1,0,0,1");
}
