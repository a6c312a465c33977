#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stcp/random.hpp"
#include "stcp/solvers.hpp"
#include "stcp/tensor.hpp"

namespace stcp {

inline constexpr double kSigmaMin = 1e-6;

enum class Activation { Tanh, Gelu };
enum class OutputHead { Point, MeanLogVar };
enum class Mode { Train, Eval };

/// layer_sizes = {input, hidden..., targets}. A MeanLogVar head emits
/// interleaved (mu, log sigma^2) pairs, so its final layer is 2 * targets wide.
/// Dropout follows every hidden activation.
struct MlpConfig {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::Tanh;
  double dropout_rate = 0.0;
  OutputHead head = OutputHead::Point;
};

void validate(const MlpConfig& cfg);

struct Loss {
  enum class Kind { Mse, L1, Pinball, GaussianNll };
  Kind kind = Kind::Mse;
  double tau = 0.5;

  static Loss mse() { return {Kind::Mse, 0.5}; }
  static Loss l1() { return {Kind::L1, 0.5}; }
  static Loss pinball(double tau);
  static Loss gaussian_nll() { return {Kind::GaussianNll, 0.5}; }
};

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 50;
  double learning_rate = 0.005;
  std::size_t decay_every = 100;
  double decay_factor = 0.5;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

/// Affine map of [lo, hi] onto [-1, 1]. Default-constructed it is the identity.
struct RangeScaler {
  double lo = -1.0;
  double hi = 1.0;

  static RangeScaler fit(std::span<const double> values);
  [[nodiscard]] double transform(double v) const { return 2.0 * (v - lo) / (hi - lo) - 1.0; }
  [[nodiscard]] double inverse(double v) const { return lo + 0.5 * (v + 1.0) * (hi - lo); }
  /// Raw-units size of one normalised unit.
  [[nodiscard]] double unit() const { return 0.5 * (hi - lo); }
};

struct ModelParams {
  MlpConfig config;
  std::vector<Eigen::MatrixXd> weights;  // [out x in] per layer
  std::vector<Eigen::VectorXd> biases;
  RangeScaler input_scaler;
  RangeScaler output_scaler;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t input_size() const { return config.layer_sizes.front(); }
  [[nodiscard]] std::size_t target_size() const { return config.layer_sizes.back(); }
  [[nodiscard]] std::size_t output_width() const;
  [[nodiscard]] std::size_t parameter_count() const;
};

/// Glorot-uniform weights, zero biases, identity scalers.
[[nodiscard]] ModelParams init_model(const MlpConfig& cfg, std::uint64_t seed);

/// Network-space forward on a batch (columns are samples). Train mode draws
/// an inverted-dropout mask from `rng`; eval mode never touches it.
[[nodiscard]] Eigen::MatrixXd forward_network(const ModelParams& m, const Eigen::MatrixXd& x,
                                              Mode mode, Rng& rng);

/// Raw-units forward of one sample. MeanLogVar heads return interleaved
/// (mu, log sigma^2) pairs.
[[nodiscard]] std::vector<double> forward(const ModelParams& m, std::span<const double> x,
                                          Mode mode, Rng& rng);

struct McEstimate {
  std::vector<double> mean;
  std::vector<double> std;  // n-1 denominator, floored at kSigmaMin
};

/// Mean and spread of `passes` train-mode forwards (raw units, mu part only
/// for MeanLogVar heads).
[[nodiscard]] McEstimate forward_mc_dropout(const ModelParams& m, std::span<const double> x,
                                            std::size_t passes, Rng& rng);

/// Mean loss over every element; `pred` carries (mu, log sigma^2) pairs for
/// GaussianNll.
[[nodiscard]] double loss_eval(const Loss& loss, std::span<const double> pred,
                               std::span<const double> target);
[[nodiscard]] std::vector<double> loss_grad(const Loss& loss, std::span<const double> pred,
                                            std::span<const double> target);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double loss = 0.0;
};

/// Exact reverse-mode gradients of loss(forward_network(x), target) in
/// network space. Train mode uses `rng` for the dropout mask.
[[nodiscard]] Gradients backward_gradients(const ModelParams& m, const Eigen::MatrixXd& x,
                                           const Eigen::MatrixXd& target, const Loss& loss,
                                           Mode mode, Rng& rng);

struct TrainResult {
  ModelParams model;
  std::vector<double> loss_history;  // one mean training loss per epoch
};

/// Adam (0.9, 0.999, 1e-8) with step decay; inputs and outputs range-scaled
/// to [-1, 1] from training-set extrema.
[[nodiscard]] TrainResult train(const TensorStack& inputs, const TensorStack& outputs,
                                const MlpConfig& mcfg, const TrainConfig& tcfg,
                                const Loss& loss);
[[nodiscard]] TrainResult train(const std::vector<SimulationRecord>& dataset,
                                const MlpConfig& mcfg, const TrainConfig& tcfg,
                                const Loss& loss);

struct StackPrediction {
  TensorStack center;  // point output or mu
  TensorStack sigma;   // empty unless MeanLogVar head or MC dropout
};

/// Eval-mode predictions for every sample, shaped like `output_dims`.
[[nodiscard]] StackPrediction predict(const ModelParams& m, const TensorStack& inputs,
                                      const Dims& output_dims, std::size_t workers = 1);

/// MC-dropout predictions; sample i draws from Rng(derive_seed(seed, i)), so
/// results do not depend on `workers`.
[[nodiscard]] StackPrediction predict_mc(const ModelParams& m, const TensorStack& inputs,
                                         const Dims& output_dims, std::size_t passes,
                                         std::uint64_t seed, std::size_t workers = 1);

/// Checkpoint directory: model.json + layer<i>_weight.cpt / layer<i>_bias.cpt.
void save_model(const std::filesystem::path& dir, const ModelParams& m,
                const std::vector<double>& loss_history = {});
[[nodiscard]] ModelParams load_model(const std::filesystem::path& dir);

}  // namespace stcp
