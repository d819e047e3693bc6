#pragma once

#include "rotinv/error.hpp"
#include "rotinv/linalg.hpp"
#include "rotinv/paths.hpp"
#include "rotinv/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace rotinv {

/// Grid indices of successive exits of radius-h balls: k_1 is the first index
/// with ||W[k] - W[0]|| >= h, k_j the first index after k_{j-1} with
/// ||W[k] - W[k_{j-1}]|| >= h.
struct ExitTimeSequence {
  double h = 0.0;
  std::vector<std::size_t> indices;
  bool complete = false;  // true when the path ends exactly on an exit
};

inline ExitTimeSequence exit_times(const Path& w, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "exit radius must be positive");
  ExitTimeSequence out{h, {}, false};
  const std::size_t n = w.dim();
  std::size_t anchor = 0;
  for (std::size_t k = 1; k <= w.steps(); ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = w(k, i) - w(anchor, i);
      s += d * d;
    }
    if (std::sqrt(s) >= h) {
      out.indices.push_back(k);
      anchor = k;
    }
  }
  out.complete = !out.indices.empty() && out.indices.back() == w.steps();
  return out;
}

// ---------------------------------------------------------------------------
// Policies

/// The same matrix on every increment.
struct ConstantPolicy {
  Matrix b;
};

/// B_j on the j-th excursion of the driver out of radius-h balls; the
/// last matrix repeats once the list runs out.
struct ExitTimePolicy {
  double h = 0.1;
  std::vector<Matrix> matrices;
};

/// Like ExitTimePolicy with B_1, B_2, ... drawn Haar from one seeded stream.
struct HaarPerExitPolicy {
  double h = 0.1;
  std::uint64_t seed = 0;
};

/// B_k = Q^T where Q diagonalizes the windowed density estimate built from
/// the increments strictly before k. Identity until a full window exists.
struct DiagonalizingPolicy {
  std::size_t window = 50;
};

/// B_k is the smallest-angle rotation taking the windowed mean increment
/// direction to +e_1. Identity until a full window exists or when the
/// estimated drift is below 1e-12.
struct DriftAligningPolicy {
  std::size_t window = 50;
};

using RotationPolicy = std::variant<ConstantPolicy, ExitTimePolicy, HaarPerExitPolicy,
                                    DiagonalizingPolicy, DriftAligningPolicy>;

inline const char* policy_name(const RotationPolicy& p) {
  return std::visit(
      [](const auto& x) -> const char* {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ConstantPolicy>) return "constant";
        else if constexpr (std::is_same_v<T, ExitTimePolicy>) return "piecewise-exit-time";
        else if constexpr (std::is_same_v<T, HaarPerExitPolicy>) return "seeded-haar-per-exit";
        else if constexpr (std::is_same_v<T, DiagonalizingPolicy>) return "diagonalizing";
        else return "drift-aligning";
      },
      p);
}

inline bool uses_exit_times(const RotationPolicy& p) {
  return std::holds_alternative<ExitTimePolicy>(p) || std::holds_alternative<HaarPerExitPolicy>(p);
}

/// mats[k] acts on increment k (t_k -> t_{k+1}) and depends on path values
/// at indices <= k only.
struct RotationSchedule {
  TimeGrid grid;
  MatrixSequence mats;

  std::size_t dim() const noexcept { return mats.dim(); }
  std::size_t size() const noexcept { return mats.size(); }
};

inline constexpr double kOrthogonalityTolerance = 1e-12;

inline void require_orthogonal(const Matrix& b, std::size_t n) {
  if (b.size() != n) throw Error(ErrorKind::InvalidArgument, "rotation has wrong dimension");
  if (orthogonality_defect(b) > kOrthogonalityTolerance) {
    throw Error(ErrorKind::InvalidArgument, "matrix is not orthogonal", orthogonality_defect(b));
  }
}

/// Smallest-angle rotation R with R u = e_1 for a unit vector u. With
/// c = u_0, s = ||(u_1..u_{n-1})|| and p = (0, u_1..u_{n-1}) / s:
///   R = I + s (e_1 p^T - p e_1^T) + (c - 1)(e_1 e_1^T + p p^T),
/// the rotation by acos(c) in span(e_1, p). For u = -e_1 the half-turn in
/// the (0,1) plane is used; in n = 1 the only choice is [sign(u_0)].
inline Matrix rotation_to_first_axis(std::span<const double> u) {
  const std::size_t n = u.size();
  const double c = u[0];
  if (n == 1) return Matrix{{c < 0.0 ? -1.0 : 1.0}};
  double s = 0.0;
  for (std::size_t i = 1; i < n; ++i) s += u[i] * u[i];
  s = std::sqrt(s);
  Matrix r = Matrix::identity(n);
  if (s == 0.0) {
    if (c < 0.0) r(0, 0) = r(1, 1) = -1.0;
    return r;
  }
  std::vector<double> p(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) p[i] = u[i] / s;
  r(0, 0) += c - 1.0;
  for (std::size_t j = 1; j < n; ++j) {
    r(0, j) += s * p[j];
    r(j, 0) -= s * p[j];
    for (std::size_t i = 1; i < n; ++i) r(i, j) += (c - 1.0) * p[i] * p[j];
  }
  return r;
}

namespace detail {

inline void fill_exit_schedule(RotationSchedule& s, const ExitTimeSequence& exits,
                               auto&& matrix_for_excursion) {
  std::size_t excursion = 0;
  std::size_t next_exit = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    // exits at indices <= k have closed their excursions before increment k
    while (next_exit < exits.indices.size() && exits.indices[next_exit] <= k) {
      ++next_exit;
      ++excursion;
    }
    const auto src = matrix_for_excursion(excursion);
    std::ranges::copy(src, s.mats.view(k).begin());
  }
}

}  // namespace detail

inline RotationSchedule realize_policy(const RotationPolicy& policy, const Path& driver) {
  const std::size_t n = driver.dim();
  const std::size_t m = driver.steps();
  RotationSchedule s{driver.grid(), MatrixSequence(m, n)};
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ConstantPolicy>) {
          require_orthogonal(p.b, n);
          for (std::size_t k = 0; k < m; ++k) s.mats.set(k, p.b);
        } else if constexpr (std::is_same_v<T, ExitTimePolicy>) {
          if (p.matrices.empty()) throw Error(ErrorKind::EmptyMatrixList, "no rotations supplied");
          for (const Matrix& b : p.matrices) require_orthogonal(b, n);
          const ExitTimeSequence exits = exit_times(driver, p.h);
          detail::fill_exit_schedule(s, exits, [&](std::size_t j) {
            return p.matrices[std::min(j, p.matrices.size() - 1)].data();
          });
        } else if constexpr (std::is_same_v<T, HaarPerExitPolicy>) {
          const ExitTimeSequence exits = exit_times(driver, p.h);
          Engine engine(p.seed);
          std::vector<Matrix> drawn;
          drawn.reserve(exits.indices.size() + 1);
          for (std::size_t j = 0; j <= exits.indices.size(); ++j) drawn.push_back(haar_orthogonal(n, engine));
          detail::fill_exit_schedule(s, exits, [&](std::size_t j) { return drawn[j].data(); });
        } else if constexpr (std::is_same_v<T, DiagonalizingPolicy>) {
          if (p.window < n || p.window == 0) throw Error(ErrorKind::WindowTooSmall, "window < dimension");
          const RealizedCharacteristics rc = realized_covariation(driver);
          const double scale = 1.0 / (static_cast<double>(p.window) * driver.grid().dt());
          const Matrix id = Matrix::identity(n);
          for (std::size_t k = 0; k < m; ++k) {
            if (k < p.window) {
              s.mats.set(k, id);
              continue;
            }
            Matrix est = rc.a_hat.at(k) - rc.a_hat.at(k - p.window);
            est *= scale;
            s.mats.set(k, transpose(jacobi_eigh(est).q));
          }
        } else {
          if (p.window == 0) throw Error(ErrorKind::WindowTooSmall, "window must be positive");
          const double scale = 1.0 / (static_cast<double>(p.window) * driver.grid().dt());
          const Matrix id = Matrix::identity(n);
          std::vector<double> d(n);
          for (std::size_t k = 0; k < m; ++k) {
            if (k < p.window) {
              s.mats.set(k, id);
              continue;
            }
            double norm2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              d[i] = (driver(k, i) - driver(k - p.window, i)) * scale;
              norm2 += d[i] * d[i];
            }
            const double norm = std::sqrt(norm2);
            if (norm < 1e-12) {
              s.mats.set(k, id);
              continue;
            }
            for (double& x : d) x /= norm;
            s.mats.set(k, rotation_to_first_axis(d));
          }
        }
      },
      policy);
  return s;
}

/// Z'_0 = 0, Z'_{k+1} = Z'_k + mats[k] (Z_{k+1} - Z_k).
inline Path apply_rotation(const Path& z, const RotationSchedule& schedule) {
  if (!(z.grid() == schedule.grid) || z.dim() != schedule.dim() || schedule.size() != z.steps()) {
    throw Error(ErrorKind::GridMismatch, "schedule does not match the path grid");
  }
  const std::size_t n = z.dim();
  Path out(z.grid(), n);
  std::vector<double> d(n), r(n);
  for (std::size_t k = 0; k < z.steps(); ++k) {
    for (std::size_t i = 0; i < n; ++i) d[i] = z(k + 1, i) - z(k, i);
    matvec(schedule.mats.view(k), d, r);
    for (std::size_t i = 0; i < n; ++i) out(k + 1, i) = out(k, i) + r[i];
  }
  return out;
}

/// Per-step transpose at identical indices. Exit-time schedules stay valid
/// because the rotated driver exits at the same indices as the original.
inline RotationSchedule inverse_schedule(const RotationSchedule& s) {
  RotationSchedule inv{s.grid, MatrixSequence(s.size(), s.dim())};
  const std::size_t n = s.dim();
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto src = s.mats.view(k);
    auto dst = inv.mats.view(k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[j * n + i] = src[i * n + j];
  }
  return inv;
}

/// CSV: `step,b1_1,...,bn_n`; `step` is the grid index closing the increment
/// (1..M), entries row-major with 17 significant digits.
inline void write_schedule_csv(std::ostream& os, const RotationSchedule& s) {
  const std::size_t n = s.dim();
  os << "step";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) os << ",b" << (i + 1) << '_' << (j + 1);
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < s.size(); ++k) {
    os << (k + 1);
    for (double x : s.mats.view(k)) os << ',' << x;
    os << '\n';
  }
}

}  // namespace rotinv
