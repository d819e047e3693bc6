#pragma once

#include "rotinv/error.hpp"
#include "rotinv/linalg.hpp"
#include "rotinv/paths.hpp"
#include "rotinv/random.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace rotinv {

/// Increments sqrt(dt) * xi of an n-dimensional Brownian motion, drawn in
/// step-major order. brownian() is built on this, so any consumer that walks
/// the stream sees exactly the path brownian() would return for the seed.
class BrownianStream {
 public:
  BrownianStream(std::size_t dim, double dt, std::uint64_t seed)
      : engine_(seed), dim_(dim), sqrt_dt_(std::sqrt(dt)) {}

  void next(std::span<double> dw) {
    for (double& x : dw) x = sqrt_dt_ * normal_(engine_);
  }
  std::size_t dim() const noexcept { return dim_; }

 private:
  Engine engine_;
  boost::random::normal_distribution<double> normal_;
  std::size_t dim_;
  double sqrt_dt_;
};

inline Path brownian(std::size_t n, const TimeGrid& grid, std::uint64_t seed) {
  Path w(grid, n);
  BrownianStream stream(n, grid.dt(), seed);
  std::vector<double> dw(n);
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    stream.next(dw);
    for (std::size_t i = 0; i < n; ++i) w(k + 1, i) = w(k, i) + dw[i];
  }
  return w;
}

enum class VolatilityKind { constant, random_constant, log_ou, w_dependent };

inline const char* to_string(VolatilityKind kind) {
  switch (kind) {
    case VolatilityKind::constant: return "constant";
    case VolatilityKind::random_constant: return "random-constant";
    case VolatilityKind::log_ou: return "log-ou";
    case VolatilityKind::w_dependent: return "w-dependent";
  }
  return "unknown";
}

struct VolatilitySpec {
  VolatilityKind kind = VolatilityKind::constant;
  double sigma = 1.0;                 // constant
  double level_low = 1.0;             // random-constant: level_low w.p. p
  double level_high = 3.0;            //                  level_high otherwise
  double p = 0.5;
  double theta = 1.0;                 // log-ou: dY = -theta Y dt + eta dB, f = exp(Y)
  double eta = 0.5;
  double y0 = 0.0;

  void validate() const {
    const bool ok = sigma > 0.0 && level_low > 0.0 && level_high > 0.0 && p >= 0.0 && p <= 1.0 &&
                    theta >= 0.0 && eta >= 0.0 && std::isfinite(y0);
    if (!ok) throw Error(ErrorKind::InvalidArgument, "volatility parameters out of range");
  }
};

/// Scalar volatility f_k on grid points 0..M and its left-point integral
/// F_k = sum_{j<k} f_j^2 dt.
struct VolatilityPath {
  std::vector<double> f;
  std::vector<double> cumulative;
};

namespace detail {

inline VolatilityPath integrate_volatility(std::vector<double> f, double dt) {
  VolatilityPath v{std::move(f), {}};
  v.cumulative.assign(v.f.size(), 0.0);
  for (std::size_t k = 1; k < v.f.size(); ++k)
    v.cumulative[k] = v.cumulative[k - 1] + v.f[k - 1] * v.f[k - 1] * dt;
  return v;
}

}  // namespace detail

/// Volatility for the path-independent kinds; `seed` is the volatility
/// substream, disjoint from the Brownian one.
inline VolatilityPath sample_volatility(const VolatilitySpec& spec, const TimeGrid& grid,
                                        std::uint64_t seed) {
  spec.validate();
  const std::size_t m = grid.steps();
  std::vector<double> f(m + 1);
  switch (spec.kind) {
    case VolatilityKind::constant:
      std::fill(f.begin(), f.end(), spec.sigma);
      break;
    case VolatilityKind::random_constant: {
      Engine engine(seed);
      const double level = uniform01(engine) < spec.p ? spec.level_low : spec.level_high;
      std::fill(f.begin(), f.end(), level);
      break;
    }
    case VolatilityKind::log_ou: {
      Engine engine(seed);
      boost::random::normal_distribution<double> normal;
      const double dt = grid.dt();
      const double sqrt_dt = std::sqrt(dt);
      double y = spec.y0;
      f[0] = std::exp(y);
      for (std::size_t k = 1; k <= m; ++k) {
        y += -spec.theta * y * dt + spec.eta * sqrt_dt * normal(engine);
        f[k] = std::exp(y);
      }
      break;
    }
    case VolatilityKind::w_dependent:
      throw Error(ErrorKind::MissingDriver, "w-dependent volatility needs the driving path");
  }
  return detail::integrate_volatility(std::move(f), grid.dt());
}

/// w-dependent counterexample: f_k = 1 + ||w_{k-1}|| (f_0 = 1 + ||w_0||).
/// Deliberately breaks independence between f and W.
inline VolatilityPath sample_volatility(const VolatilitySpec& spec, const TimeGrid& grid,
                                        std::uint64_t seed, const Path& w) {
  if (spec.kind != VolatilityKind::w_dependent) {
    throw Error(ErrorKind::InvalidArgument, "a driving path is only accepted by w-dependent volatility");
  }
  (void)seed;
  if (!(w.grid() == grid)) throw Error(ErrorKind::GridMismatch, "driver grid differs");
  const std::size_t m = grid.steps();
  std::vector<double> f(m + 1);
  for (std::size_t k = 0; k <= m; ++k) {
    const auto x = w[k == 0 ? 0 : k - 1];
    double s = 0.0;
    for (double v : x) s += v * v;
    f[k] = 1.0 + std::sqrt(s);
  }
  return detail::integrate_volatility(std::move(f), grid.dt());
}

/// Z_k = sum_{j<k} f_j (W_{j+1} - W_j), Itô left-point rule, Z_0 = 0.
inline Path ito_scalar_integral(std::span<const double> f, const Path& w) {
  if (f.size() != w.steps() + 1) {
    throw Error(ErrorKind::GridMismatch, "volatility length does not match the path grid");
  }
  const std::size_t n = w.dim();
  Path z(w.grid(), n);
  for (std::size_t k = 0; k < w.steps(); ++k)
    for (std::size_t i = 0; i < n; ++i) z(k + 1, i) = z(k, i) + f[k] * (w(k + 1, i) - w(k, i));
  return z;
}

inline Path drifted_brownian(std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                             std::span<const double> b_tilde) {
  if (b_tilde.size() != n) throw Error(ErrorKind::InvalidArgument, "drift must have n components");
  Path z = brownian(n, grid, seed);
  for (std::size_t k = 0; k <= grid.steps(); ++k) {
    const double t = grid.time(k);
    for (std::size_t i = 0; i < n; ++i) z(k, i) = b_tilde[i] * t + z(k, i);
  }
  return z;
}

/// Z_k = sum_{j<k} sigma dW_j, so A_t = sigma sigma^T t.
inline Path anisotropic_diffusion(std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                                  const Matrix& sigma) {
  if (sigma.size() != n) throw Error(ErrorKind::InvalidArgument, "sigma must be n x n");
  for (double x : sigma.data())
    if (!std::isfinite(x)) throw Error(ErrorKind::InvalidArgument, "sigma must be finite");
  Path z(grid, n);
  BrownianStream stream(n, grid.dt(), seed);
  std::vector<double> dw(n), dz(n);
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    stream.next(dw);
    matvec(sigma.data(), dw, dz);
    for (std::size_t i = 0; i < n; ++i) z(k + 1, i) = z(k, i) + dz[i];
  }
  return z;
}

// ---------------------------------------------------------------------------
// Simulation jobs

struct BrownianProcess {};
struct DriftedProcess {
  std::vector<double> drift;
};
struct AnisotropicProcess {
  Matrix sigma;
};
/// Z = int f dW with f from a VolatilitySpec.
struct TimeChangedProcess {
  VolatilitySpec volatility;
};

using ProcessSpec = std::variant<BrownianProcess, DriftedProcess, AnisotropicProcess, TimeChangedProcess>;

struct SimJob {
  std::size_t dim = 2;
  TimeGrid grid;
  std::uint64_t base_seed = 0;
  ProcessSpec process = BrownianProcess{};
  // The w-dependent volatility violates the independence hypothesis; it is
  // only simulated when this flag is raised.
  bool counterexample = false;

  void validate() const {
    if (dim == 0) throw Error(ErrorKind::InvalidArgument, "dimension must be positive");
    if (const auto* d = std::get_if<DriftedProcess>(&process); d && d->drift.size() != dim) {
      throw Error(ErrorKind::InvalidArgument, "drift must have dim components");
    }
    if (const auto* a = std::get_if<AnisotropicProcess>(&process); a && a->sigma.size() != dim) {
      throw Error(ErrorKind::InvalidArgument, "sigma must be dim x dim");
    }
    if (const auto* t = std::get_if<TimeChangedProcess>(&process)) {
      t->volatility.validate();
      if (t->volatility.kind == VolatilityKind::w_dependent && !counterexample) {
        throw Error(ErrorKind::InvalidArgument,
                    "w-dependent volatility is a counterexample and must be flagged as such");
      }
    }
  }
};

inline const char* process_name(const ProcessSpec& p) {
  return std::visit(
      [](const auto& x) -> const char* {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, BrownianProcess>) return "brownian";
        else if constexpr (std::is_same_v<T, DriftedProcess>) return "drifted";
        else if constexpr (std::is_same_v<T, AnisotropicProcess>) return "anisotropic";
        else return "time-changed";
      },
      p);
}

/// One simulated path together with its driving Brownian motion and, for
/// time-changed processes, the volatility that produced it.
struct SimulatedPath {
  Path z;
  Path w;
  std::optional<VolatilityPath> volatility;
};

inline SimulatedPath simulate_path(const SimJob& job, std::size_t index) {
  const std::uint64_t w_seed = seed_for_path(job.base_seed, index, StreamTag::brownian);
  const std::uint64_t v_seed = seed_for_path(job.base_seed, index, StreamTag::volatility);
  Path w = brownian(job.dim, job.grid, w_seed);
  return std::visit(
      [&](const auto& proc) -> SimulatedPath {
        using T = std::decay_t<decltype(proc)>;
        if constexpr (std::is_same_v<T, BrownianProcess>) {
          Path z = w;
          return {std::move(z), std::move(w), std::nullopt};
        } else if constexpr (std::is_same_v<T, DriftedProcess>) {
          Path z = drifted_brownian(job.dim, job.grid, w_seed, proc.drift);
          return {std::move(z), std::move(w), std::nullopt};
        } else if constexpr (std::is_same_v<T, AnisotropicProcess>) {
          Path z = anisotropic_diffusion(job.dim, job.grid, w_seed, proc.sigma);
          return {std::move(z), std::move(w), std::nullopt};
        } else {
          VolatilityPath vol = proc.volatility.kind == VolatilityKind::w_dependent
                                   ? sample_volatility(proc.volatility, job.grid, v_seed, w)
                                   : sample_volatility(proc.volatility, job.grid, v_seed);
          Path z = ito_scalar_integral(vol.f, w);
          return {std::move(z), std::move(w), std::move(vol)};
        }
      },
      job.process);
}

/// The exact quadratic-variation density of a simulated path, one matrix per
/// increment: I for (drifted) Brownian motion, sigma sigma^T for the
/// anisotropic diffusion, f_k^2 I for time-changed processes.
inline MatrixSequence true_density(const SimJob& job, const SimulatedPath& sim) {
  const std::size_t n = job.dim;
  const std::size_t m = job.grid.steps();
  MatrixSequence out(m, n);
  Matrix base = Matrix::identity(n);
  if (const auto* a = std::get_if<AnisotropicProcess>(&job.process)) base = a->sigma * transpose(a->sigma);
  for (std::size_t k = 0; k < m; ++k) {
    const double s = sim.volatility ? sim.volatility->f[k] * sim.volatility->f[k] : 1.0;
    auto dst = out.view(k);
    for (std::size_t e = 0; e < n * n; ++e) dst[e] = s * base.data()[e];
  }
  return out;
}

}  // namespace rotinv
