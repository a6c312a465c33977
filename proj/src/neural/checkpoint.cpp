#include <fstream>

#include <json.hpp>

#include "stcp/error.hpp"
#include "stcp/neural.hpp"
#include "stcp/tensor_io.hpp"

namespace stcp {

namespace fs = std::filesystem;

namespace {

FieldTensor weight_tensor(const Eigen::MatrixXd& w) {
  const auto rows = static_cast<std::size_t>(w.rows());
  const auto cols = static_cast<std::size_t>(w.cols());
  std::vector<double> data(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      data[r * cols + c] = w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  return FieldTensor(Dims{1, rows, cols, 1}, std::move(data));
}

Eigen::MatrixXd weight_matrix(const FieldTensor& t) {
  const auto rows = t.dims()[1];
  const auto cols = t.dims()[2];
  Eigen::MatrixXd w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t[r * cols + c];
    }
  }
  return w;
}

}  // namespace

void save_model(const fs::path& dir, const ModelParams& m, const std::vector<double>& loss_history) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["layer_sizes"] = m.config.layer_sizes;
  j["activation"] = m.config.activation == Activation::Tanh ? "tanh" : "gelu";
  j["dropout_rate"] = m.config.dropout_rate;
  j["head"] = m.config.head == OutputHead::Point ? "point" : "mean_logvar";
  j["input_scaler"] = {{"lo", m.input_scaler.lo}, {"hi", m.input_scaler.hi}};
  j["output_scaler"] = {{"lo", m.output_scaler.lo}, {"hi", m.output_scaler.hi}};
  j["seed"] = m.seed;
  j["layers"] = m.weights.size();
  j["loss_history"] = loss_history;

  TensorSidecar sc;
  sc.axes = {"-", "out", "in", "-"};
  sc.provenance = {{"seed", m.seed}};
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const std::string stem = "layer" + std::to_string(l);
    write_tensor_file(dir / (stem + "_weight.cpt"), weight_tensor(m.weights[l]), sc);
    const Eigen::VectorXd& b = m.biases[l];
    write_tensor_file(dir / (stem + "_bias.cpt"),
                      FieldTensor(Dims{1, static_cast<std::size_t>(b.size()), 1, 1},
                                  std::vector<double>(b.data(), b.data() + b.size())),
                      sc);
  }
  std::ofstream(dir / "model.json") << j.dump(2) << '\n';
}

ModelParams load_model(const fs::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) fail(ErrorKind::Io, "missing checkpoint " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, (dir / "model.json").string() + ": " + e.what());
  }
  ModelParams m;
  m.config.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  m.config.activation = j.at("activation") == "tanh" ? Activation::Tanh : Activation::Gelu;
  m.config.dropout_rate = j.at("dropout_rate").get<double>();
  m.config.head = j.at("head") == "point" ? OutputHead::Point : OutputHead::MeanLogVar;
  m.input_scaler = {j.at("input_scaler").at("lo").get<double>(),
                    j.at("input_scaler").at("hi").get<double>()};
  m.output_scaler = {j.at("output_scaler").at("lo").get<double>(),
                     j.at("output_scaler").at("hi").get<double>()};
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto layers = j.at("layers").get<std::size_t>();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string stem = "layer" + std::to_string(l);
    m.weights.push_back(weight_matrix(read_tensor_file(dir / (stem + "_weight.cpt"))));
    const FieldTensor b = read_tensor_file(dir / (stem + "_bias.cpt"));
    m.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.values().data(),
                                                         static_cast<Eigen::Index>(b.size())));
  }
  validate(m.config);
  if (m.weights.size() + 1 != m.config.layer_sizes.size()) {
    fail(ErrorKind::Format, "checkpoint layer count disagrees with layer_sizes");
  }
  return m;
}

}  // namespace stcp
