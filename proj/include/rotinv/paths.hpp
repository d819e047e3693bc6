#pragma once

#include "rotinv/error.hpp"
#include "rotinv/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

namespace rotinv {

/// Uniform grid t_k = k * dt, k = 0..steps, dt = t_max / steps.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double t_max, std::size_t steps) : t_max_(t_max), steps_(steps) {
    if (!(t_max > 0.0) || !std::isfinite(t_max) || steps == 0) {
      throw Error(ErrorKind::InvalidArgument, "time grid needs t_max > 0 and steps >= 1");
    }
  }

  static TimeGrid from_dt(double t_max, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
    return TimeGrid(t_max, static_cast<std::size_t>(std::llround(t_max / dt)));
  }

  double t_max() const noexcept { return t_max_; }
  std::size_t steps() const noexcept { return steps_; }
  double dt() const noexcept { return t_max_ / static_cast<double>(steps_); }
  double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt(); }

  /// Grid index nearest to time t, clamped to [0, steps].
  std::size_t index_of(double t) const noexcept {
    const double k = std::round(t / dt());
    if (k <= 0.0) return 0;
    return std::min(steps_, static_cast<std::size_t>(k));
  }

  bool operator==(const TimeGrid&) const = default;

 private:
  double t_max_ = 1.0;
  std::size_t steps_ = 1;
};

/// Sequence of n-vectors stored contiguously.
class VectorSequence {
 public:
  VectorSequence() = default;
  VectorSequence(std::size_t count, std::size_t dim) : dim_(dim), data_(count * dim, 0.0) {}

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<double> operator[](std::size_t k) noexcept { return {data_.data() + k * dim_, dim_}; }
  std::span<const double> operator[](std::size_t k) const noexcept {
    return {data_.data() + k * dim_, dim_};
  }
  std::span<const double> flat() const noexcept { return data_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Sequence of n x n matrices stored contiguously, row-major per matrix.
class MatrixSequence {
 public:
  MatrixSequence() = default;
  MatrixSequence(std::size_t count, std::size_t n) : n_(n), data_(count * n * n, 0.0) {}

  std::size_t size() const noexcept { return n_ == 0 ? 0 : data_.size() / (n_ * n_); }
  std::size_t dim() const noexcept { return n_; }
  std::span<double> view(std::size_t k) noexcept { return {data_.data() + k * n_ * n_, n_ * n_}; }
  std::span<const double> view(std::size_t k) const noexcept {
    return {data_.data() + k * n_ * n_, n_ * n_};
  }
  std::span<const double> flat() const noexcept { return data_; }
  Matrix at(std::size_t k) const {
    const auto v = view(k);
    return Matrix(n_, std::vector<double>(v.begin(), v.end()));
  }
  void set(std::size_t k, const Matrix& m) { std::ranges::copy(m.data(), view(k).begin()); }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Values of an R^n process on a uniform grid; values[0] is the origin.
class Path {
 public:
  Path() = default;
  Path(TimeGrid grid, std::size_t dim)
      : grid_(grid), dim_(dim), values_((grid.steps() + 1) * dim, 0.0) {
    if (dim == 0) throw Error(ErrorKind::InvalidArgument, "path dimension must be positive");
  }
  Path(TimeGrid grid, std::size_t dim, std::vector<double> values)
      : grid_(grid), dim_(dim), values_(std::move(values)) {
    if (dim == 0) throw Error(ErrorKind::InvalidArgument, "path dimension must be positive");
    if (values_.size() != (grid.steps() + 1) * dim) {
      throw Error(ErrorKind::LengthMismatch, "path needs (steps+1)*dim values");
    }
    for (double v : values_)
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "path values must be finite");
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t steps() const noexcept { return grid_.steps(); }

  std::span<double> operator[](std::size_t k) noexcept { return {values_.data() + k * dim_, dim_}; }
  std::span<const double> operator[](std::size_t k) const noexcept {
    return {values_.data() + k * dim_, dim_};
  }
  double operator()(std::size_t k, std::size_t i) const noexcept { return values_[k * dim_ + i]; }
  double& operator()(std::size_t k, std::size_t i) noexcept { return values_[k * dim_ + i]; }

  std::span<const double> flat() const noexcept { return values_; }

  /// max_k ||values[k]||_2
  double max_norm() const noexcept {
    double m = 0.0;
    for (std::size_t k = 0; k <= steps(); ++k) {
      double s = 0.0;
      for (double x : (*this)[k]) s += x * x;
      m = std::max(m, s);
    }
    return std::sqrt(m);
  }

 private:
  TimeGrid grid_;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

inline void require_same_grid(const Path& a, const Path& b) {
  if (!(a.grid() == b.grid()) || a.dim() != b.dim()) {
    throw Error(ErrorKind::GridMismatch, "paths do not share grid and dimension");
  }
}

/// dZ_k = values[k+1] - values[k], k = 0..M-1 (increment k spans t_k -> t_{k+1}).
inline VectorSequence increments(const Path& p) {
  VectorSequence d(p.steps(), p.dim());
  for (std::size_t k = 0; k < p.steps(); ++k) {
    const auto a = p[k];
    const auto b = p[k + 1];
    auto out = d[k];
    for (std::size_t i = 0; i < p.dim(); ++i) out[i] = b[i] - a[i];
  }
  return d;
}

/// Realized quadratic covariation A_k = sum_{j<k} dZ_j dZ_j^T at every grid
/// point, A_0 = 0. Drift is estimated across ensembles, see estimate_drift.
struct RealizedCharacteristics {
  TimeGrid grid;
  MatrixSequence a_hat;  // steps + 1 entries

  std::size_t dim() const noexcept { return a_hat.dim(); }
};

inline RealizedCharacteristics realized_covariation(const Path& p) {
  const std::size_t n = p.dim();
  const std::size_t m = p.steps();
  RealizedCharacteristics rc{p.grid(), MatrixSequence(m + 1, n)};
  std::vector<double> d(n);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i < n; ++i) d[i] = p(k + 1, i) - p(k, i);
    const auto prev = rc.a_hat.view(k);
    auto next = rc.a_hat.view(k + 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) next[i * n + j] = prev[i * n + j] + d[i] * d[j];
  }
  return rc;
}

inline std::size_t default_window(std::size_t n) { return std::max<std::size_t>(50, 10 * n); }

/// Windowed estimate of the quadratic-variation density, one matrix per
/// increment. Entry k (the density applied to increment k) averages the
/// `window` increments strictly before it:
///   est_k = (A_k - A_{k-window}) / (window * dt),  k >= window.
/// For k < window the first full-window estimate (k = window) is reused.
inline MatrixSequence local_qv_density(const RealizedCharacteristics& rc, std::size_t window) {
  const std::size_t n = rc.dim();
  const std::size_t m = rc.a_hat.size() - 1;
  if (window < n || window == 0) {
    throw Error(ErrorKind::WindowTooSmall,
                "window " + std::to_string(window) + " < dimension " + std::to_string(n));
  }
  if (m < window) {
    throw Error(ErrorKind::PathTooShort, "path has fewer increments than the window");
  }
  const double scale = 1.0 / (static_cast<double>(window) * rc.grid.dt());
  auto estimate = [&](std::size_t k, std::span<double> dst) {
    const auto hi = rc.a_hat.view(k);
    const auto lo = rc.a_hat.view(k - window);
    for (std::size_t e = 0; e < n * n; ++e) dst[e] = (hi[e] - lo[e]) * scale;
  };
  MatrixSequence out(m, n);
  std::vector<double> first(n * n);
  estimate(window, first);
  for (std::size_t k = 0; k < std::min(window, m); ++k) std::ranges::copy(first, out.view(k).begin());
  for (std::size_t k = window; k < m; ++k) estimate(k, out.view(k));
  return out;
}

inline MatrixSequence local_qv_density(const Path& p, std::size_t window) {
  if (window < p.dim() || window == 0) {
    throw Error(ErrorKind::WindowTooSmall,
                "window " + std::to_string(window) + " < dimension " + std::to_string(p.dim()));
  }
  return local_qv_density(realized_covariation(p), window);
}

struct ScalarQVVerdict {
  bool is_scalar = true;
  std::vector<double> f_cumulative;  // F_k = trace(A_k) / n
  double max_offdiag = 0.0;
  double max_diag_spread = 0.0;
  double scale = 0.0;  // trace(A_M) / n, the yardstick for both tolerances
};

/// Checks A_k = F_k * I along the whole path: off-diagonals and the spread of
/// the diagonal must stay within tol * trace(A_M) / n at every k.
inline ScalarQVVerdict scalar_qv_check(const RealizedCharacteristics& rc, double tol_offdiag,
                                       double tol_spread) {
  const std::size_t n = rc.dim();
  const std::size_t count = rc.a_hat.size();
  ScalarQVVerdict v;
  v.f_cumulative.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto a = rc.a_hat.view(k);
    double tr = 0.0, dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a[i * n + i];
      tr += d;
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) v.max_offdiag = std::max(v.max_offdiag, std::abs(a[i * n + j]));
    }
    v.max_diag_spread = std::max(v.max_diag_spread, dmax - dmin);
    v.f_cumulative[k] = tr / static_cast<double>(n);
  }
  v.scale = v.f_cumulative.back();
  v.is_scalar = v.max_offdiag <= tol_offdiag * v.scale && v.max_diag_spread <= tol_spread * v.scale;
  return v;
}

struct DriftEstimate {
  VectorSequence mean;       // per grid point
  VectorSequence std_error;  // sample sd / sqrt(N)
};

/// Cross-sectional mean of an ensemble at every grid point.
inline DriftEstimate estimate_drift(std::span<const Path> ensemble) {
  if (ensemble.size() < 2) throw Error(ErrorKind::TooFewSamples, "drift estimate needs >= 2 paths");
  const Path& first = ensemble.front();
  for (const Path& p : ensemble) require_same_grid(first, p);
  const std::size_t count = first.steps() + 1;
  const std::size_t n = first.dim();
  const double big_n = static_cast<double>(ensemble.size());
  DriftEstimate out{VectorSequence(count, n), VectorSequence(count, n)};
  for (std::size_t k = 0; k < count; ++k) {
    auto mean = out.mean[k];
    auto se = out.std_error[k];
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (const Path& p : ensemble) s += p(k, i);
      const double mu = s / big_n;
      double ss = 0.0;
      for (const Path& p : ensemble) ss += (p(k, i) - mu) * (p(k, i) - mu);
      mean[i] = mu;
      se[i] = std::sqrt(ss / (big_n - 1.0) / big_n);
    }
  }
  return out;
}

/// CSV with header `t,z1,...,zn`, 17 significant digits.
inline void write_path_csv(std::ostream& os, const Path& p) {
  os << "t";
  for (std::size_t i = 0; i < p.dim(); ++i) os << ",z" << (i + 1);
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k <= p.steps(); ++k) {
    os << p.grid().time(k);
    for (double x : p[k]) os << ',' << x;
    os << '\n';
  }
}

inline Path read_path_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("t", 0) != 0) {
    throw Error(ErrorKind::InvalidArgument, "path CSV must start with a `t,z1,...` header");
  }
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (dim == 0) throw Error(ErrorKind::InvalidArgument, "path CSV has no value columns");
  std::vector<double> times, values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(row, cell, ',')) {
      const double x = std::stod(cell);
      if (col == 0) times.push_back(x);
      else values.push_back(x);
      ++col;
    }
    if (col != dim + 1) throw Error(ErrorKind::InvalidArgument, "ragged path CSV row");
  }
  if (times.size() < 2) throw Error(ErrorKind::InvalidArgument, "path CSV needs >= 2 rows");
  return Path(TimeGrid(times.back(), times.size() - 1), dim, std::move(values));
}

}  // namespace rotinv
