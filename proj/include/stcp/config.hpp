#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "stcp/conformal.hpp"
#include "stcp/neural.hpp"
#include "stcp/sampling.hpp"
#include "stcp/solvers.hpp"

namespace stcp {

/// How one dataset split is drawn: LHS over `params`, plus `fixed` values.
struct RegimeConfig {
  std::size_t n = 0;
  std::vector<ParameterSpec> params;
  std::map<std::string, double> fixed;
};

struct SurrogateConfig {
  std::vector<std::size_t> hidden{64, 64, 64};
  Activation activation = Activation::Tanh;
  double dropout = 0.1;     // STD model only
  std::size_t mc_passes = 32;
  double cqr_lo = 0.05;
  double cqr_mid = 0.5;
  double cqr_hi = 0.95;
  Loss::Kind aer_loss = Loss::Kind::L1;
  Loss::Kind std_loss = Loss::Kind::Mse;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 2024;
  std::filesystem::path output_dir = "runs";
  SolverSetup setup;
  Window window;
  RegimeConfig train;
  RegimeConfig calibration;
  RegimeConfig validation;
  std::vector<Method> methods;
  SurrogateConfig surrogate;
  TrainConfig training;
  double alpha = 0.1;
  std::vector<double> alphas;
  std::vector<std::size_t> ncal_sizes;
  std::size_t workers = 1;
};

/// Defaults for "poisson", "convdiff" or "wave"; config error otherwise.
[[nodiscard]] ExperimentConfig default_config(const std::string& experiment);

/// Defaults for `j["experiment"]` overlaid with the document. Unknown keys,
/// wrong types and invalid values are config errors naming the field.
[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::json& j);

/// Reads and parses a JSON file; syntax errors report the line.
[[nodiscard]] ExperimentConfig parse_config(const std::filesystem::path& path);

void validate(const ExperimentConfig& cfg);

/// Canonical form of everything that determines results (no output_dir,
/// no worker count).
[[nodiscard]] nlohmann::json canonical_json(const ExperimentConfig& cfg);
[[nodiscard]] std::string config_hash(const ExperimentConfig& cfg);

[[nodiscard]] const char* to_string(Loss::Kind kind);

}  // namespace stcp
