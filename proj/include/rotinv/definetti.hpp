#pragma once

// Reconstruction of the driving Brownian motion W from an observed path Z,
// extraction of the scalar volatility f, and the empirical independence test
// between f and W.

#include "rotinv/error.hpp"
#include "rotinv/linalg.hpp"
#include "rotinv/parallel.hpp"
#include "rotinv/paths.hpp"
#include "rotinv/random.hpp"
#include "rotinv/simulators.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <numeric>
#include <span>
#include <vector>

namespace rotinv {

struct Decomposition {
  Path w_hat;
  std::vector<double> f_hat;         // grid points 0..M; f_hat[k] acts on increment k
  std::vector<double> f_cumulative;  // F_k = sum_{j<k} f_hat_j^2 dt
  std::size_t burn_in = 0;           // increments reconstructed with a borrowed estimate
  double qv_deviation = 0.0;         // max |[w_hat]_T - T I|
  double qv_deviation_post_burn_in = 0.0;
  ScalarQVVerdict scalar_qv;  // scalar-QV check of the input path (tolerances 0.15)
};

inline constexpr double kScalarQVTolerance = 0.15;

namespace detail {

inline Decomposition reconstruct_from_density(const Path& z, const RealizedCharacteristics& rc,
                                              const MatrixSequence& density, double eps_pd,
                                              std::size_t burn_in) {
  const std::size_t n = z.dim();
  const std::size_t m = z.steps();
  if (density.size() != m || density.dim() != n) {
    throw Error(ErrorKind::GridMismatch, "density sequence does not match the path");
  }
  const double dt = z.grid().dt();
  Decomposition out;
  out.w_hat = Path(z.grid(), n);
  out.f_hat.assign(m + 1, 0.0);
  out.f_cumulative.assign(m + 1, 0.0);
  out.burn_in = burn_in;

  Matrix qv_all(n), qv_post(n);
  std::vector<double> dz(n), dw(n);
  for (std::size_t k = 0; k < m; ++k) {
    const Matrix a = density.at(k);
    Matrix c;
    try {
      c = inv_sqrt_pd(a, eps_pd);
    } catch (Error& e) {
      if (e.kind() == ErrorKind::NotPositiveDefinite) throw e.with_index(k);
      throw;
    }
    for (std::size_t i = 0; i < n; ++i) dz[i] = z(k + 1, i) - z(k, i);
    matvec(c.data(), dz, dw);
    for (std::size_t i = 0; i < n; ++i) out.w_hat(k + 1, i) = out.w_hat(k, i) + dw[i];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        qv_all(i, j) += dw[i] * dw[j];
        if (k >= burn_in) qv_post(i, j) += dw[i] * dw[j];
      }
    out.f_hat[k] = std::sqrt(std::max(trace(a), 0.0) / static_cast<double>(n));
  }
  out.f_hat[m] = m > 0 ? out.f_hat[m - 1] : 0.0;
  for (std::size_t k = 1; k <= m; ++k)
    out.f_cumulative[k] = out.f_cumulative[k - 1] + out.f_hat[k - 1] * out.f_hat[k - 1] * dt;

  const double t_all = z.grid().t_max();
  const double t_post = static_cast<double>(m - std::min(burn_in, m)) * dt;
  out.qv_deviation = max_abs(qv_all - Matrix::identity(n) * t_all);
  out.qv_deviation_post_burn_in = max_abs(qv_post - Matrix::identity(n) * t_post);
  out.scalar_qv = scalar_qv_check(rc, kScalarQVTolerance, kScalarQVTolerance);
  return out;
}

}  // namespace detail

/// dW_hat_k = C_k dZ_k with C_k = (windowed density estimate)^{-1/2}; the
/// estimate only uses increments before k except during the burn-in, which
/// borrows the first full-window estimate. Throws NotPositiveDefinite with
/// the first failing increment index when the estimate is not strictly
/// positive definite.
inline Decomposition reconstruct_brownian(const Path& z, std::size_t window,
                                          double eps_pd = kDefaultEpsPd) {
  if (window < z.dim() || window == 0) {
    throw Error(ErrorKind::WindowTooSmall, "window smaller than the dimension");
  }
  const RealizedCharacteristics rc = realized_covariation(z);
  const MatrixSequence density = local_qv_density(rc, window);
  return detail::reconstruct_from_density(z, rc, density, eps_pd, window);
}

/// Same construction with the exact density supplied, one matrix per increment.
inline Decomposition reconstruct_with_oracle_density(const Path& z, const MatrixSequence& a_tilde,
                                                     double eps_pd = kDefaultEpsPd) {
  return detail::reconstruct_from_density(z, realized_covariation(z), a_tilde, eps_pd, 0);
}

/// CSV with header `t,w1,...,wn,f_hat,F_hat`, 17 significant digits.
inline void write_decomposition_csv(std::ostream& os, const Decomposition& d) {
  const Path& w = d.w_hat;
  os << "t";
  for (std::size_t i = 0; i < w.dim(); ++i) os << ",w" << (i + 1);
  os << ",f_hat,F_hat\n" << std::setprecision(17);
  for (std::size_t k = 0; k <= w.steps(); ++k) {
    os << w.grid().time(k);
    for (double x : w[k]) os << ',' << x;
    os << ',' << d.f_hat[k] << ',' << d.f_cumulative[k] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Distance correlation with a permutation null

struct IndependenceReport {
  double statistic = 0.0;  // distance correlation, in [0, 1]
  double p_value = 1.0;
  std::size_t n_samples = 0;
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
};

namespace detail {

// Double-centered Euclidean distance matrix, N x N row-major.
inline std::vector<double> centered_distances(const VectorSequence& x) {
  const std::size_t n = x.size();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      const auto xi = x[i];
      const auto xj = x[j];
      for (std::size_t c = 0; c < x.dim(); ++c) s += (xi[c] - xj[c]) * (xi[c] - xj[c]);
      a[i * n + j] = a[j * n + i] = std::sqrt(s);
    }
  std::vector<double> row(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[i] += a[i * n + j];
    grand += row[i];
    row[i] /= static_cast<double>(n);
  }
  grand /= static_cast<double>(n) * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] += grand - row[i] - row[j];
  return a;
}

// (1/N^2) sum_ij A_ij B_{p(i) p(j)} using the symmetry of both matrices.
inline double permuted_dcov2(const std::vector<double>& a, const std::vector<double>& b,
                             std::span<const std::size_t> perm) {
  const std::size_t n = perm.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * n;
    const double* bi = b.data() + perm[i] * n;
    double s = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) s += ai[j] * bi[perm[j]];
    total += 2.0 * s + ai[i] * bi[perm[i]];
  }
  return total / (static_cast<double>(n) * static_cast<double>(n));
}

inline double dcor_from(double dcov2, double dvar_x, double dvar_y) {
  if (dvar_x <= 0.0 || dvar_y <= 0.0) return 0.0;
  return std::sqrt(std::max(dcov2, 0.0) / std::sqrt(dvar_x * dvar_y));
}

}  // namespace detail

inline double distance_correlation(const VectorSequence& x, const VectorSequence& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "samples differ in length");
  const auto a = detail::centered_distances(x);
  const auto b = detail::centered_distances(y);
  std::vector<std::size_t> id(x.size());
  std::iota(id.begin(), id.end(), std::size_t{0});
  return detail::dcor_from(detail::permuted_dcov2(a, b, id), detail::permuted_dcov2(a, a, id),
                           detail::permuted_dcov2(b, b, id));
}

/// p = (1 + #{permuted statistic >= observed}) / (1 + n_permutations).
inline IndependenceReport independence_test(const VectorSequence& x, const VectorSequence& y,
                                             std::size_t n_permutations, std::uint64_t seed) {
  if (x.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "samples differ in length");
  if (x.size() < 20) throw Error(ErrorKind::TooFewSamples, "independence test needs N >= 20");
  if (n_permutations < 99) throw Error(ErrorKind::InvalidArgument, "need at least 99 permutations");
  const std::size_t n = x.size();
  const auto a = detail::centered_distances(x);
  const auto b = detail::centered_distances(y);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const double dvar_x = detail::permuted_dcov2(a, a, perm);
  const double dvar_y = detail::permuted_dcov2(b, b, perm);
  const double observed = detail::dcor_from(detail::permuted_dcov2(a, b, perm), dvar_x, dvar_y);

  Engine engine(seed);
  std::size_t at_least = 0;
  for (std::size_t r = 0; r < n_permutations; ++r) {
    for (std::size_t i = n - 1; i > 0; --i) {
      boost::random::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(perm[i], perm[pick(engine)]);
    }
    const double stat = detail::dcor_from(detail::permuted_dcov2(a, b, perm), dvar_x, dvar_y);
    if (stat >= observed) ++at_least;
  }
  IndependenceReport rep;
  rep.statistic = observed;
  rep.p_value = static_cast<double>(1 + at_least) / static_cast<double>(1 + n_permutations);
  rep.n_samples = n;
  rep.n_permutations = n_permutations;
  rep.seed = seed;
  return rep;
}

// ---------------------------------------------------------------------------
// End-to-end decomposition experiment

struct DecompositionParams {
  std::size_t paths = 2000;
  std::size_t window = 200;
  double eps_pd = kDefaultEpsPd;
  std::size_t n_permutations = 200;
  std::size_t workers = 1;
};

struct DecompositionReport {
  IndependenceReport independence;
  std::size_t paths = 0;
  std::size_t scalar_qv_true = 0;
  double scalar_qv_fraction = 0.0;
  double mean_qv_deviation = 0.0;  // post burn-in, averaged over paths
  double max_qv_deviation = 0.0;
  std::vector<double> terminal_mean;  // ensemble mean of Z_T
  std::vector<double> terminal_se;
  bool drift_detected = false;  // some |mean| > 3 SE
};

/// Simulates `paths` paths, reconstructs each, and tests (F_hat_{T/2}, F_hat_T)
/// against (w_hat_{T/2}, w_hat_T) for independence across the ensemble.
inline DecompositionReport decomposition_experiment(const SimJob& job, const DecompositionParams& params) {
  job.validate();
  const std::size_t n = job.dim;
  const std::size_t count = params.paths;
  if (count < 20) throw Error(ErrorKind::TooFewSamples, "decomposition experiment needs >= 20 paths");
  const std::size_t half = job.grid.index_of(job.grid.t_max() / 2.0);
  const std::size_t last = job.grid.steps();

  VectorSequence x(count, 2), y(count, 2 * n), terminal(count, n);
  std::vector<char> scalar(count, 0);
  std::vector<double> qv_dev(count, 0.0);
  parallel_for(count, params.workers, [&](std::size_t i) {
    const SimulatedPath sim = simulate_path(job, i);
    const Decomposition d = reconstruct_brownian(sim.z, params.window, params.eps_pd);
    x[i][0] = d.f_cumulative[half];
    x[i][1] = d.f_cumulative[last];
    for (std::size_t c = 0; c < n; ++c) {
      y[i][c] = d.w_hat(half, c);
      y[i][n + c] = d.w_hat(last, c);
      terminal[i][c] = sim.z(last, c);
    }
    scalar[i] = d.scalar_qv.is_scalar ? 1 : 0;
    qv_dev[i] = d.qv_deviation_post_burn_in;
  });

  DecompositionReport rep;
  rep.paths = count;
  rep.independence = independence_test(x, y, params.n_permutations,
                                       seed_for_path(job.base_seed, 0, StreamTag::permutation));
  rep.scalar_qv_true = static_cast<std::size_t>(std::count(scalar.begin(), scalar.end(), 1));
  rep.scalar_qv_fraction = static_cast<double>(rep.scalar_qv_true) / static_cast<double>(count);
  for (double q : qv_dev) {
    rep.mean_qv_deviation += q / static_cast<double>(count);
    rep.max_qv_deviation = std::max(rep.max_qv_deviation, q);
  }
  rep.terminal_mean.assign(n, 0.0);
  rep.terminal_se.assign(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += terminal[i][c];
    const double mu = s / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t i = 0; i < count; ++i) ss += (terminal[i][c] - mu) * (terminal[i][c] - mu);
    rep.terminal_mean[c] = mu;
    rep.terminal_se[c] = std::sqrt(ss / static_cast<double>(count - 1) / static_cast<double>(count));
    if (std::abs(mu) > 3.0 * rep.terminal_se[c]) rep.drift_detected = true;
  }
  return rep;
}

}  // namespace rotinv
