#pragma once

#include "rotinv/error.hpp"
#include "rotinv/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rotinv {

/// Dense n x n matrix, row-major. Sized for the small dimensions this library
/// works in (n <= 16 typical).
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}
  Matrix(std::size_t n, std::vector<double> entries) : n_(n), a_(std::move(entries)) {
    if (a_.size() != n_ * n_) {
      throw Error(ErrorKind::InvalidArgument, "matrix entry count does not match n*n");
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) : n_(rows.size()) {
    a_.reserve(n_ * n_);
    for (const auto& row : rows) {
      if (row.size() != n_) throw Error(ErrorKind::InvalidArgument, "matrix must be square");
      a_.insert(a_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return a_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return a_[i * n_ + j]; }
  std::span<double> data() noexcept { return a_; }
  std::span<const double> data() const noexcept { return a_; }

  bool operator==(const Matrix&) const = default;

  Matrix& operator+=(const Matrix& o) {
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& x : a_) x *= s;
    return *this;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.size();
  Matrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < n; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix t(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

/// out = m * v for a row-major n x n block.
inline void matvec(std::span<const double> m, std::span<const double> v, std::span<double> out) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += m[i * n + j] * v[j];
    out[i] = s;
  }
}

inline std::vector<double> operator*(const Matrix& m, std::span<const double> v) {
  std::vector<double> out(m.size());
  matvec(m.data(), v, out);
  return out;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

inline double trace(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a(i, i);
  return s;
}

/// max |B^T B - I| entrywise.
inline double orthogonality_defect(const Matrix& b) {
  Matrix g = transpose(b) * b;
  g -= Matrix::identity(b.size());
  return max_abs(g);
}

/// Determinant by partial-pivoting LU. Used in checks only.
inline double determinant(Matrix a) {
  const std::size_t n = a.size();
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
    if (a(p, k) == 0.0) return 0.0;
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(p, j), a(k, j));
      det = -det;
    }
    det *= a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return det;
}

struct EigenDecomposition {
  Matrix q;                    // columns are eigenvectors
  std::vector<double> lambda;  // ascending
};

inline constexpr double kSymmetryTolerance = 1e-12;
inline constexpr double kJacobiTolerance = 1e-13;
inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kDefaultEpsPd = 1e-10;

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix by the classical Jacobi method
/// (largest off-diagonal pivot). Eigenvalues come back ascending, each
/// eigenvector's first component above 1e-12 in magnitude is positive, which
/// pins down the O(n) gauge so results are reproducible.
inline EigenDecomposition jacobi_eigh(const Matrix& s) {
  const std::size_t n = s.size();
  const double norm = frobenius_norm(s);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(s(i, j) - s(j, i)) > kSymmetryTolerance * norm) {
        throw Error(ErrorKind::NonSymmetric, "entry (" + std::to_string(i) + "," +
                                                 std::to_string(j) + ") breaks symmetry");
      }

  Matrix a = s;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (s(i, j) + s(j, i));
  Matrix v = Matrix::identity(n);

  const double threshold = kJacobiTolerance * norm;
  const std::size_t rotations_per_sweep = n * (n - 1) / 2;
  const std::size_t max_rotations = static_cast<std::size_t>(kJacobiMaxSweeps) *
                                    std::max<std::size_t>(rotations_per_sweep, 1);
  std::size_t rotations = 0;
  while (detail::off_diagonal_norm(a) > threshold) {
    if (rotations++ >= max_rotations) {
      throw Error(ErrorKind::NoConvergence, "Jacobi did not converge",
                  detail::off_diagonal_norm(a));
    }
    std::size_t p = 0, q = 1;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (std::abs(a(i, j)) > best) {
          best = std::abs(a(i, j));
          p = i;
          q = j;
        }
    const double apq = a(p, q);
    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double sn = t * c;

    for (std::size_t k = 0; k < n; ++k) {
      if (k == p || k == q) continue;
      const double akp = a(k, p);
      const double akq = a(k, q);
      a(k, p) = a(p, k) = c * akp - sn * akq;
      a(k, q) = a(q, k) = sn * akp + c * akq;
    }
    a(p, p) -= t * apq;
    a(q, q) += t * apq;
    a(p, q) = a(q, p) = 0.0;

    for (std::size_t k = 0; k < n; ++k) {
      const double vkp = v(k, p);
      const double vkq = v(k, q);
      v(k, p) = c * vkp - sn * vkq;
      v(k, q) = sn * vkp + c * vkq;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  EigenDecomposition out{Matrix(n), std::vector<double>(n)};
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.lambda[c] = a(src, src);
    double sign = 1.0;
    for (std::size_t r = 0; r < n; ++r)
      if (std::abs(v(r, src)) > 1e-12) {
        sign = v(r, src) < 0.0 ? -1.0 : 1.0;
        break;
      }
    for (std::size_t r = 0; r < n; ++r) out.q(r, c) = sign * v(r, src);
  }
  return out;
}

namespace detail {

template <class F>
Matrix spectral_map(const EigenDecomposition& e, F&& f) {
  const std::size_t n = e.lambda.size();
  Matrix r(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = f(e.lambda[k]);
    for (std::size_t i = 0; i < n; ++i) {
      const double qik = e.q(i, k) * w;
      for (std::size_t j = 0; j < n; ++j) r(i, j) += qik * e.q(j, k);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) r(i, j) = r(j, i) = 0.5 * (r(i, j) + r(j, i));
  return r;
}

}  // namespace detail

/// Principal square root of a symmetric PSD matrix. Eigenvalues down to
/// -1e-12 * ||s||_F are clamped to zero; anything more negative is NotPSD.
inline Matrix sqrt_psd(const Matrix& s) {
  const EigenDecomposition e = jacobi_eigh(s);
  const double floor = -1e-12 * frobenius_norm(s);
  if (!e.lambda.empty() && e.lambda.front() < floor) {
    throw Error(ErrorKind::NotPSD, "smallest eigenvalue " + std::to_string(e.lambda.front()),
                e.lambda.front());
  }
  return detail::spectral_map(e, [](double l) { return std::sqrt(std::max(l, 0.0)); });
}

/// C = s^{-1/2}, the whitening matrix with C s C = I. Requires every
/// eigenvalue >= eps_pd (strict positive definiteness, not only PSD).
inline Matrix inv_sqrt_pd(const Matrix& s, double eps_pd = kDefaultEpsPd) {
  const EigenDecomposition e = jacobi_eigh(s);
  if (e.lambda.empty() || e.lambda.front() < eps_pd) {
    const double smallest = e.lambda.empty() ? 0.0 : e.lambda.front();
    throw Error(ErrorKind::NotPositiveDefinite,
                "smallest eigenvalue " + std::to_string(smallest) + " below eps_pd", smallest);
  }
  return detail::spectral_map(e, [](double l) { return 1.0 / std::sqrt(l); });
}

/// Haar-distributed draw from the full orthogonal group O(n): Gaussian matrix,
/// Householder QR, columns multiplied by sign(R_ii).
inline Matrix haar_orthogonal(std::size_t n, Engine& engine) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "dimension must be positive");
  for (;;) {
    Matrix r(n);
    fill_standard_normal(engine, r.data());
    Matrix q = Matrix::identity(n);
    bool degenerate = false;
    std::vector<double> v(n);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      double norm_x = 0.0;
      for (std::size_t i = k; i < n; ++i) norm_x += r(i, k) * r(i, k);
      norm_x = std::sqrt(norm_x);
      if (norm_x == 0.0) {
        degenerate = true;
        break;
      }
      const double alpha = r(k, k) > 0.0 ? -norm_x : norm_x;
      std::fill(v.begin(), v.end(), 0.0);
      v[k] = r(k, k) - alpha;
      for (std::size_t i = k + 1; i < n; ++i) v[i] = r(i, k);
      double vnorm2 = 0.0;
      for (std::size_t i = k; i < n; ++i) vnorm2 += v[i] * v[i];
      if (vnorm2 == 0.0) continue;
      // R <- H R, Q <- Q H with H = I - 2 v v^T / (v^T v)
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t i = k; i < n; ++i) dot += v[i] * r(i, j);
        const double f = 2.0 * dot / vnorm2;
        for (std::size_t i = k; i < n; ++i) r(i, j) -= f * v[i];
      }
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = k; j < n; ++j) dot += q(i, j) * v[j];
        const double f = 2.0 * dot / vnorm2;
        for (std::size_t j = k; j < n; ++j) q(i, j) -= f * v[j];
      }
    }
    if (degenerate) continue;
    for (std::size_t k = 0; k < n; ++k)
      if (std::abs(r(k, k)) < 1e-300) degenerate = true;
    if (degenerate) continue;
    for (std::size_t k = 0; k < n; ++k)
      if (r(k, k) < 0.0)
        for (std::size_t i = 0; i < n; ++i) q(i, k) = -q(i, k);
    return q;
  }
}

inline Matrix haar_orthogonal(std::size_t n, std::uint64_t seed) {
  Engine engine(seed);
  return haar_orthogonal(n, engine);
}

/// Rotation by `radians` in the (0,1) coordinate plane of R^n.
inline Matrix plane_rotation(std::size_t n, double radians) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "plane rotation needs n >= 2");
  Matrix m = Matrix::identity(n);
  m(0, 0) = std::cos(radians);
  m(0, 1) = -std::sin(radians);
  m(1, 0) = std::sin(radians);
  m(1, 1) = std::cos(radians);
  return m;
}

}  // namespace rotinv
