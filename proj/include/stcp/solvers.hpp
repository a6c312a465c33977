#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stcp/sampling.hpp"
#include "stcp/tensor.hpp"

namespace stcp {

inline constexpr const char* kSolverVersion = "stcp-solvers/1";

/// u'' = rho on [0,1], u(0) = u(1) = 0, on n_grid nodes including both ends.
struct PoissonConfig {
  std::size_t n_grid = 32;
  double rho = 0.0;
};

/// u_t = D u_xx + u D_x - c u_x on [0, length], FTCS on n_grid cells with
/// zero-flux boundary faces. D(x) = max(sin(x / (k pi)), diffusion_floor)
/// unless constant_diffusion is set.
struct ConvDiffConfig {
  double k = 1.0;
  double c = 0.1;
  double mu = 5.0;
  double sigma2 = 0.5;
  std::size_t n_grid = 200;
  double length = 10.0;
  std::size_t n_steps = 100;
  double dt = 0.0005;
  std::size_t stride = 5;
  double diffusion_floor = 1e-4;
  std::optional<double> constant_diffusion;
};

/// u_tt = c^2 (u_xx + u_yy) on [-1,1]^2, u = 0 on the boundary, u_t(0) = 0.
/// Gaussian initial condition exp(-amplitude ((x - x_pos)^2 + (y - y_pos)^2)).
struct WaveConfig {
  double amplitude = 10.0;
  double x_pos = 0.3;
  double y_pos = 0.3;
  double c = 1.0;
  std::size_t n_grid = 33;
  std::size_t n_steps = 150;
  double dt = 0.00667;
};

void validate(const PoissonConfig& cfg);
void validate(const ConvDiffConfig& cfg);
void validate(const WaveConfig& cfg);

/// Cell-centre coordinates of the convection-diffusion grid.
[[nodiscard]] std::vector<double> convdiff_grid(const ConvDiffConfig& cfg);
[[nodiscard]] std::vector<double> convdiff_diffusion(const ConvDiffConfig& cfg);
/// Node coordinates of the wave grid (boundary nodes included).
[[nodiscard]] std::vector<double> wave_grid(const WaveConfig& cfg);

/// Steady field, dims [1, n_grid, 1, 1]. Direct tridiagonal elimination.
[[nodiscard]] FieldTensor solve_poisson_1d(const PoissonConfig& cfg);

/// Stored frames every `stride` steps starting with the initial condition,
/// dims [n_steps / stride, n_grid, 1, 1].
[[nodiscard]] FieldTensor solve_convdiff_1d(const ConvDiffConfig& cfg);

/// Leapfrog trajectory, dims [n_steps, n, n, 1]; frame j is time j * dt.
[[nodiscard]] FieldTensor solve_wave_2d(const WaveConfig& cfg);
/// Same scheme from an arbitrary initial field [1, n, n, 1] (boundary zeroed).
[[nodiscard]] FieldTensor solve_wave_2d(const WaveConfig& cfg, const FieldTensor& initial);

enum class SolverKind { Poisson, ConvDiff, Wave };

[[nodiscard]] const char* to_string(SolverKind kind);
[[nodiscard]] SolverKind solver_kind_from_string(const std::string& name);
/// Parameter names a design (plus fixed values) must supply for a solver.
[[nodiscard]] std::vector<std::string> solver_parameters(SolverKind kind);

/// Grid-level settings shared by every record of a dataset.
struct SolverSetup {
  SolverKind kind = SolverKind::Poisson;
  PoissonConfig poisson;
  ConvDiffConfig convdiff;
  WaveConfig wave;
};

struct Window {
  std::size_t t_in = 1;
  std::size_t t_out = 1;
};

/// One exchangeable (input window, output window) pair.
struct SimulationRecord {
  std::vector<double> params;  // ordered as solver_parameters(kind)
  FieldTensor input;
  FieldTensor output;
};

struct DatasetManifest {
  std::string solver;
  std::string solver_version = kSolverVersion;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  Window window;
  Dims input_dims{};
  Dims output_dims{};
  std::vector<std::string> parameter_names;
  std::map<std::string, double> fixed;
};

struct Dataset {
  std::vector<SimulationRecord> records;
  DatasetManifest manifest;
  std::vector<ParameterSpec> specs;  // design columns that were sampled
};

/// Full trajectory for one parameter row (Poisson: [IC, steady] as 2 frames).
[[nodiscard]] FieldTensor simulate(const SolverSetup& setup,
                                   const std::map<std::string, double>& params);

/// One record per design row: input = frames [0, t_in), output = frames
/// [t_in, t_in + t_out). `fixed` supplies solver parameters not in the design.
[[nodiscard]] Dataset generate_dataset(const DesignMatrix& design, const SolverSetup& setup,
                                       const Window& window,
                                       const std::map<std::string, double>& fixed,
                                       std::uint64_t seed, std::size_t workers = 1);

/// Canonical JSON of everything that determines a dataset's content.
[[nodiscard]] nlohmann::json dataset_identity(const DesignMatrix& design, const SolverSetup& setup,
                                              const Window& window,
                                              const std::map<std::string, double>& fixed);

/// Directory layout: manifest.json, params.csv, input_<i>.cpt, output_<i>.cpt.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
[[nodiscard]] Dataset read_dataset(const std::filesystem::path& dir);

[[nodiscard]] TensorStack input_stack(const Dataset& dataset);
[[nodiscard]] TensorStack output_stack(const Dataset& dataset);

}  // namespace stcp
