#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "stcp/error.hpp"
#include "stcp/sampling.hpp"
#include "stcp/solvers.hpp"

namespace stcp {
namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double wave_dx(const WaveConfig& cfg) { return 2.0 / static_cast<double>(cfg.n_grid - 1); }

double convdiff_dx(const ConvDiffConfig& cfg) {
  return cfg.length / static_cast<double>(cfg.n_grid);
}

}  // namespace

void validate(const PoissonConfig& cfg) {
  if (cfg.n_grid < 3) fail(ErrorKind::Config, "poisson: n_grid must be >= 3");
  if (!std::isfinite(cfg.rho)) fail(ErrorKind::Config, "poisson: source must be finite");
}

void validate(const ConvDiffConfig& cfg) {
  if (!(cfg.k > 0.0)) fail(ErrorKind::Config, "convdiff: k must be > 0");
  if (!(cfg.sigma2 > 0.0)) fail(ErrorKind::Config, "convdiff: sigma2 must be > 0");
  if (cfg.n_grid < 3) fail(ErrorKind::Config, "convdiff: n_grid must be >= 3");
  if (!(cfg.length > 0.0) || !(cfg.dt > 0.0)) {
    fail(ErrorKind::Config, "convdiff: length and dt must be > 0");
  }
  if (cfg.stride == 0 || cfg.n_steps == 0 || cfg.n_steps % cfg.stride != 0) {
    fail(ErrorKind::Config, "convdiff: n_steps must be a positive multiple of stride");
  }
  if (cfg.constant_diffusion && !(*cfg.constant_diffusion >= 0.0)) {
    fail(ErrorKind::Config, "convdiff: constant diffusion must be >= 0");
  }
  const auto d = convdiff_diffusion(cfg);
  const double max_d = *std::max_element(d.begin(), d.end());
  const double dx = convdiff_dx(cfg);
  const double bound = dx * dx / (2.0 * max_d + std::fabs(cfg.c) * dx);
  if (cfg.dt > bound) {
    fail(ErrorKind::Config, "convdiff: dt " + format_double(cfg.dt) +
                                " violates FTCS stability bound " + format_double(bound));
  }
}

void validate(const WaveConfig& cfg) {
  if (cfg.n_grid < 3) fail(ErrorKind::Config, "wave: n_grid must be >= 3");
  if (cfg.n_steps < 1 || !(cfg.dt > 0.0)) {
    fail(ErrorKind::Config, "wave: n_steps >= 1 and dt > 0 required");
  }
  if (!std::isfinite(cfg.amplitude) || !std::isfinite(cfg.c)) {
    fail(ErrorKind::Config, "wave: non-finite parameter");
  }
  const double cfl = std::fabs(cfg.c) * cfg.dt / wave_dx(cfg);
  if (cfl > 1.0 / std::numbers::sqrt2) {
    fail(ErrorKind::Config, "wave: CFL number " + format_double(cfl) + " exceeds 1/sqrt(2)");
  }
}

std::vector<double> convdiff_grid(const ConvDiffConfig& cfg) {
  const double dx = convdiff_dx(cfg);
  std::vector<double> x(cfg.n_grid);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (static_cast<double>(i) + 0.5) * dx;
  return x;
}

std::vector<double> convdiff_diffusion(const ConvDiffConfig& cfg) {
  const auto x = convdiff_grid(cfg);
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    d[i] = cfg.constant_diffusion
               ? *cfg.constant_diffusion
               : std::max(std::sin(x[i] / (cfg.k * std::numbers::pi)), cfg.diffusion_floor);
  }
  return d;
}

std::vector<double> wave_grid(const WaveConfig& cfg) {
  const double dx = wave_dx(cfg);
  std::vector<double> x(cfg.n_grid);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = -1.0 + dx * static_cast<double>(i);
  x.back() = 1.0;
  return x;
}

FieldTensor solve_poisson_1d(const PoissonConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.n_grid;
  const double h = 1.0 / static_cast<double>(n - 1);
  const std::size_t m = n - 2;  // interior unknowns

  // Thomas algorithm on u[i-1] - 2 u[i] + u[i+1] = rho h^2.
  std::vector<double> c_prime(m), d_prime(m);
  const double rhs = cfg.rho * h * h;
  for (std::size_t i = 0; i < m; ++i) {
    const double denom = -2.0 - (i > 0 ? c_prime[i - 1] : 0.0);
    c_prime[i] = 1.0 / denom;
    d_prime[i] = (rhs - (i > 0 ? d_prime[i - 1] : 0.0)) / denom;
  }
  std::vector<double> u(n, 0.0);
  for (std::size_t j = m; j-- > 0;) {
    u[j + 1] = d_prime[j] - c_prime[j] * u[j + 2];
  }
  return FieldTensor(Dims{1, n, 1, 1}, std::move(u));
}

FieldTensor solve_convdiff_1d(const ConvDiffConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.n_grid;
  const double dx = convdiff_dx(cfg);
  const auto x = convdiff_grid(cfg);
  const auto diff = convdiff_diffusion(cfg);

  std::vector<double> ddiff(n, 0.0);
  if (!cfg.constant_diffusion) {
    const double kpi = cfg.k * std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::sin(x[i] / kpi) > cfg.diffusion_floor) ddiff[i] = std::cos(x[i] / kpi) / kpi;
    }
  }

  std::vector<double> u(n), next(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = x[i] - cfg.mu;
    u[i] = std::exp(-e * e / (2.0 * cfg.sigma2));
  }

  const std::size_t frames = cfg.n_steps / cfg.stride;
  std::vector<double> out;
  out.reserve(frames * n);
  const double inv_dx2 = 1.0 / (dx * dx);
  const double inv_dx = 1.0 / dx;

  for (std::size_t step = 0; step < cfg.n_steps; ++step) {
    if (step % cfg.stride == 0) out.insert(out.end(), u.begin(), u.end());
    for (std::size_t i = 0; i < n; ++i) {
      // Mirror ghosts give zero diffusive flux; advective flux is zero on the
      // two boundary faces.
      const double left = i > 0 ? u[i - 1] : u[i];
      const double right = i + 1 < n ? u[i + 1] : u[i];
      const double flux_l = i > 0 ? 0.5 * (u[i - 1] + u[i]) : 0.0;
      const double flux_r = i + 1 < n ? 0.5 * (u[i] + u[i + 1]) : 0.0;
      const double rate = diff[i] * (left - 2.0 * u[i] + right) * inv_dx2 + u[i] * ddiff[i] -
                          cfg.c * (flux_r - flux_l) * inv_dx;
      next[i] = u[i] + cfg.dt * rate;
    }
    u.swap(next);
    if (!all_finite(u)) {
      fail(ErrorKind::Divergence, "convdiff: non-finite field at step " + std::to_string(step + 1));
    }
  }
  return FieldTensor(Dims{frames, n, 1, 1}, std::move(out));
}

FieldTensor solve_wave_2d(const WaveConfig& cfg) {
  validate(cfg);
  const auto g = wave_grid(cfg);
  const std::size_t n = cfg.n_grid;
  std::vector<double> ic(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = g[i] - cfg.x_pos;
      const double dy = g[j] - cfg.y_pos;
      ic[i * n + j] = std::exp(-cfg.amplitude * (dx * dx + dy * dy));
    }
  }
  return solve_wave_2d(cfg, FieldTensor(Dims{1, n, n, 1}, std::move(ic)));
}

FieldTensor solve_wave_2d(const WaveConfig& cfg, const FieldTensor& initial) {
  validate(cfg);
  const std::size_t n = cfg.n_grid;
  if (initial.dims() != Dims{1, n, n, 1}) {
    fail(ErrorKind::Shape, "wave: initial field must be [1, n, n, 1]");
  }
  const double dx = wave_dx(cfg);
  const double r2 = (cfg.c * cfg.dt / dx) * (cfg.c * cfg.dt / dx);
  const std::size_t cells = n * n;

  std::vector<double> prev(initial.values().begin(), initial.values().end());
  auto zero_boundary = [n](std::vector<double>& u) {
    for (std::size_t k = 0; k < n; ++k) {
      u[k] = u[(n - 1) * n + k] = u[k * n] = u[k * n + n - 1] = 0.0;
    }
  };
  zero_boundary(prev);

  auto laplacian = [n](const std::vector<double>& u, std::size_t i, std::size_t j) {
    const std::size_t c = i * n + j;
    return u[c - n] + u[c + n] + u[c - 1] + u[c + 1] - 4.0 * u[c];
  };

  std::vector<double> out;
  out.reserve(cfg.n_steps * cells);
  out.insert(out.end(), prev.begin(), prev.end());
  if (cfg.n_steps == 1) return FieldTensor(Dims{1, n, n, 1}, std::move(out));

  // Zero initial velocity: Taylor start u1 = u0 + (c dt)^2 / 2 * lap(u0).
  std::vector<double> cur(cells, 0.0), next(cells, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    for (std::size_t j = 1; j + 1 < n; ++j) {
      cur[i * n + j] = prev[i * n + j] + 0.5 * r2 * laplacian(prev, i, j);
    }
  }
  out.insert(out.end(), cur.begin(), cur.end());

  for (std::size_t step = 2; step < cfg.n_steps; ++step) {
    for (std::size_t i = 1; i + 1 < n; ++i) {
      for (std::size_t j = 1; j + 1 < n; ++j) {
        const std::size_t c = i * n + j;
        next[c] = 2.0 * cur[c] - prev[c] + r2 * laplacian(cur, i, j);
      }
    }
    if (!all_finite(next)) {
      fail(ErrorKind::Divergence, "wave: non-finite field at step " + std::to_string(step));
    }
    out.insert(out.end(), next.begin(), next.end());
    prev.swap(cur);
    cur.swap(next);
  }
  return FieldTensor(Dims{cfg.n_steps, n, n, 1}, std::move(out));
}

}  // namespace stcp
