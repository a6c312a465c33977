#include <cmath>
#include <filesystem>
#include <numbers>

#include <gtest/gtest.h>

#include "stcp/error.hpp"
#include "stcp/sampling.hpp"
#include "stcp/solvers.hpp"

namespace stcp {
namespace {

using std::numbers::pi;

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no stcp::Error thrown";
  return ErrorKind::Io;
}

double frame_value(const FieldTensor& f, std::size_t t, std::size_t i, std::size_t j = 0) {
  return f.at(t, i, j, 0);
}

TEST(Poisson, ZeroSource) {
  const FieldTensor u = solve_poisson_1d({32, 0.0});
  for (double v : u.values()) EXPECT_EQ(v, 0.0);
}

TEST(Poisson, ClosedFormEverywhere) {
  for (double rho : {0.5, 2.0, 3.9, -1.0}) {
    const std::size_t n = 32;
    const FieldTensor u = solve_poisson_1d({n, rho});
    ASSERT_EQ(u.dims(), (Dims{1, n, 1, 1}));
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) / (n - 1);
      EXPECT_NEAR(u[i], 0.5 * rho * (x * x - x), 1e-10);
    }
  }
}

TEST(Poisson, MidpointAndLinearity) {
  const FieldTensor u2 = solve_poisson_1d({33, 2.0});
  EXPECT_NEAR(u2[16], -0.25, 1e-12);
  const FieldTensor u4 = solve_poisson_1d({33, 4.0});
  for (std::size_t i = 0; i < u2.size(); ++i) EXPECT_NEAR(u4[i], 2.0 * u2[i], 1e-14);
}

ConvDiffConfig constant_case(double d, double c) {
  ConvDiffConfig cfg;
  cfg.c = c;
  cfg.mu = 5.0;
  cfg.sigma2 = 0.5;
  cfg.constant_diffusion = d;
  return cfg;
}

TEST(ConvDiff, ShapeAndInitialCondition) {
  const ConvDiffConfig cfg;
  const FieldTensor u = solve_convdiff_1d(cfg);
  ASSERT_EQ(u.dims(), (Dims{20, 200, 1, 1}));
  const auto x = convdiff_grid(cfg);
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_DOUBLE_EQ(frame_value(u, 0, i),
                     std::exp(-(x[i] - cfg.mu) * (x[i] - cfg.mu) / (2 * cfg.sigma2)));
  }
}

TEST(ConvDiff, ConstantCoefficientGaussian) {
  const ConvDiffConfig cfg = constant_case(0.1, 0.5);
  const FieldTensor u = solve_convdiff_1d(cfg);
  const auto x = convdiff_grid(cfg);
  const double d = *cfg.constant_diffusion;
  double worst = 0.0;
  for (std::size_t f = 0; f < u.dims()[0]; ++f) {
    const double t = static_cast<double>(f * cfg.stride) * cfg.dt;
    const double s2 = cfg.sigma2 + 2.0 * d * t;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = x[i] - cfg.mu - cfg.c * t;
      const double exact = std::sqrt(cfg.sigma2 / s2) * std::exp(-e * e / (2.0 * s2));
      worst = std::max(worst, std::fabs(frame_value(u, f, i) - exact));
    }
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(ConvDiff, FrozenDynamics) {
  ConvDiffConfig cfg = constant_case(1e-8, 0.0);
  cfg.n_steps = 100;
  cfg.stride = 100;  // keep IC, then the state after the full run below
  const FieldTensor ic = solve_convdiff_1d(cfg);
  cfg.n_steps = 200;
  const FieldTensor two = solve_convdiff_1d(cfg);  // frame 1 is t = 100 dt = 0.05
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_NEAR(frame_value(two, 1, i), frame_value(ic, 0, i), 1e-6);
  }
}

TEST(ConvDiff, MassConservedForConstantDiffusion) {
  for (double c : {0.0, 0.5, -0.8}) {
    ConvDiffConfig cfg = constant_case(0.2, c);
    cfg.mu = 8.5;  // close to the boundary so boundary fluxes matter
    const FieldTensor u = solve_convdiff_1d(cfg);
    const double dx = cfg.length / static_cast<double>(cfg.n_grid);
    auto mass = [&](std::size_t f) {
      double m = 0.0;
      for (std::size_t i = 0; i < cfg.n_grid; ++i) m += frame_value(u, f, i) * dx;
      return m;
    };
    const double m0 = mass(0);
    for (std::size_t f = 1; f < u.dims()[0]; ++f) {
      EXPECT_LE(std::fabs(mass(f) - m0) / m0, 1e-6) << "c=" << c << " frame " << f;
    }
  }
}

TEST(ConvDiff, TrainingRegimeSampleIsFinite) {
  const DesignMatrix d = latin_hypercube(
      {{"k", 1, 2}, {"c", 0.1, 0.5}, {"mu", 1, 8}, {"sigma2", 0.25, 0.75}}, 8, 12);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    ConvDiffConfig cfg;
    cfg.k = d.at(r, 0);
    cfg.c = d.at(r, 1);
    cfg.mu = d.at(r, 2);
    cfg.sigma2 = d.at(r, 3);
    const FieldTensor u = solve_convdiff_1d(cfg);
    for (double v : u.values()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(ConvDiff, DiffusionFamily) {
  ConvDiffConfig cfg;
  cfg.k = 2.0;
  const auto x = convdiff_grid(cfg);
  const auto d = convdiff_diffusion(cfg);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_DOUBLE_EQ(d[i], std::max(std::sin(x[i] / (2.0 * pi)), 1e-4));
  }
}

TEST(ConvDiff, UnstableStepIsConfigError) {
  ConvDiffConfig cfg;
  cfg.dt = 0.01;
  EXPECT_EQ(kind_of([&] { (void)solve_convdiff_1d(cfg); }), ErrorKind::Config);
}

TEST(Wave, ZeroInitialFieldStaysZero) {
  WaveConfig cfg;
  const FieldTensor u = solve_wave_2d(cfg, FieldTensor(Dims{1, 33, 33, 1}));
  ASSERT_EQ(u.dims(), (Dims{150, 33, 33, 1}));
  for (double v : u.values()) EXPECT_EQ(v, 0.0);
}

TEST(Wave, StandingModeMatchesAnalytic) {
  WaveConfig cfg;
  const std::size_t n = cfg.n_grid;
  const auto g = wave_grid(cfg);
  std::vector<double> mode(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      mode[i * n + j] = std::sin(pi * (g[i] + 1) / 2) * std::sin(pi * (g[j] + 1) / 2);
  const FieldTensor u = solve_wave_2d(cfg, FieldTensor(Dims{1, n, n, 1}, mode));
  const double omega = cfg.c * pi * std::sqrt(2.0) / 2.0;
  double num = 0.0, den = 0.0;
  for (std::size_t f = 0; f < cfg.n_steps; ++f) {
    const double ct = std::cos(omega * static_cast<double>(f) * cfg.dt);
    for (std::size_t c = 0; c < n * n; ++c) {
      const double exact = ct * mode[c];
      const double e = u[f * n * n + c] - exact;
      num += e * e;
      den += exact * exact;
    }
  }
  EXPECT_LE(std::sqrt(num / den), 5e-2);
}

// Leapfrog conserves E^{n+1/2} = sum ((u^{n+1}-u^n)/dt)^2 + c^2 grad u^{n+1} . grad u^n.
double staggered_energy(const FieldTensor& u, std::size_t f, const WaveConfig& cfg, double dx) {
  const std::size_t n = cfg.n_grid;
  auto v = [&](std::size_t fr, std::size_t i, std::size_t j) { return u[(fr * n + i) * n + j]; };
  double kinetic = 0.0, potential = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double ut = (v(f + 1, i, j) - v(f, i, j)) / cfg.dt;
      kinetic += ut * ut;
      if (i + 1 < n) {
        potential += (v(f + 1, i + 1, j) - v(f + 1, i, j)) * (v(f, i + 1, j) - v(f, i, j));
      }
      if (j + 1 < n) {
        potential += (v(f + 1, i, j + 1) - v(f + 1, i, j)) * (v(f, i, j + 1) - v(f, i, j));
      }
    }
  }
  return (kinetic + cfg.c * cfg.c * potential / (dx * dx)) * dx * dx;
}

TEST(Wave, DiscreteEnergyDrift) {
  WaveConfig cfg;
  cfg.amplitude = 30.0;
  cfg.x_pos = 0.3;
  cfg.y_pos = 0.2;
  const FieldTensor u = solve_wave_2d(cfg);
  const double dx = 2.0 / static_cast<double>(cfg.n_grid - 1);
  // The Taylor start step is not a leapfrog step; measure from frame 1 on.
  const double e0 = staggered_energy(u, 1, cfg, dx);
  double drift = 0.0;
  for (std::size_t f = 1; f + 1 < cfg.n_steps; ++f) {
    drift = std::max(drift, std::fabs(staggered_energy(u, f, cfg, dx) - e0) / e0);
  }
  EXPECT_LE(drift, 1e-2);
}

TEST(Wave, DirichletBoundaryInEveryFrame) {
  WaveConfig cfg;
  cfg.n_grid = 17;
  cfg.amplitude = 10;
  const FieldTensor u = solve_wave_2d(cfg);
  const std::size_t n = cfg.n_grid;
  for (std::size_t f = 0; f < cfg.n_steps; ++f) {
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_EQ(u.at(f, 0, k, 0), 0.0);
      EXPECT_EQ(u.at(f, n - 1, k, 0), 0.0);
      EXPECT_EQ(u.at(f, k, 0, 0), 0.0);
      EXPECT_EQ(u.at(f, k, n - 1, 0), 0.0);
    }
  }
}

TEST(Wave, CflViolationIsConfigError) {
  WaveConfig cfg;
  cfg.c = 20.0;
  EXPECT_EQ(kind_of([&] { (void)solve_wave_2d(cfg); }), ErrorKind::Config);
}

TEST(Dataset, PoissonRecords) {
  const DesignMatrix d = latin_hypercube({{"rho", 0, 4}}, 3, 1);
  SolverSetup setup;
  const Dataset ds = generate_dataset(d, setup, {1, 1}, {}, 1);
  ASSERT_EQ(ds.records.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    const double rho = d.at(r, 0);
    for (double v : ds.records[r].input.values()) EXPECT_EQ(v, rho);
    EXPECT_EQ(ds.records[r].output, solve_poisson_1d({32, rho}));
  }
  EXPECT_EQ(ds.manifest.solver_version, kSolverVersion);
  EXPECT_EQ(ds.manifest.config_hash.size(), 64u);
}

TEST(Dataset, ConvDiffWindows) {
  const DesignMatrix d = latin_hypercube({{"k", 1, 2}, {"c", 0.1, 0.5}}, 2, 4);
  SolverSetup setup;
  setup.kind = SolverKind::ConvDiff;
  const std::map<std::string, double> fixed{{"mu", 4.0}, {"sigma2", 0.5}};
  const Dataset ds = generate_dataset(d, setup, {10, 10}, fixed, 4);
  ConvDiffConfig cfg;
  cfg.k = d.at(1, 0);
  cfg.c = d.at(1, 1);
  cfg.mu = 4.0;
  cfg.sigma2 = 0.5;
  const FieldTensor full = solve_convdiff_1d(cfg);
  EXPECT_EQ(ds.records[1].input, slice_frames(full, 0, 10));
  EXPECT_EQ(ds.records[1].output, slice_frames(full, 10, 10));
}

TEST(Dataset, WindowOverflowAndNameErrors) {
  const DesignMatrix d = latin_hypercube({{"rho", 0, 4}}, 2, 1);
  SolverSetup setup;
  EXPECT_EQ(kind_of([&] { (void)generate_dataset(d, setup, {2, 1}, {}, 1); }), ErrorKind::Config);
  const DesignMatrix wrong = latin_hypercube({{"density", 0, 4}}, 2, 1);
  EXPECT_EQ(kind_of([&] { (void)generate_dataset(wrong, setup, {1, 1}, {}, 1); }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { (void)generate_dataset(d, setup, {1, 1}, {{"rho", 1.0}}, 1); }),
            ErrorKind::Config);
}

TEST(Dataset, DeterministicAcrossWorkersAndRoundTrip) {
  const DesignMatrix d = latin_hypercube(
      {{"amplitude", 10, 50}, {"x_pos", 0.1, 0.5}, {"y_pos", 0.1, 0.5}}, 4, 8);
  SolverSetup setup;
  setup.kind = SolverKind::Wave;
  setup.wave.n_grid = 9;
  setup.wave.n_steps = 20;
  const Dataset a = generate_dataset(d, setup, {5, 5}, {{"c", 0.5}}, 8, 1);
  const Dataset b = generate_dataset(d, setup, {5, 5}, {{"c", 0.5}}, 8, 3);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(a.records[r].output, b.records[r].output);
  EXPECT_EQ(a.manifest.config_hash, b.manifest.config_hash);

  const auto dir = std::filesystem::temp_directory_path() / "stcp_test_dataset";
  std::filesystem::remove_all(dir);
  write_dataset(dir, a);
  const Dataset back = read_dataset(dir);
  ASSERT_EQ(back.records.size(), 4u);
  EXPECT_EQ(back.records[3].input, a.records[3].input);
  EXPECT_EQ(back.records[3].params, a.records[3].params);
  EXPECT_EQ(back.manifest.config_hash, a.manifest.config_hash);
  EXPECT_EQ(output_stack(back), output_stack(a));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace stcp
