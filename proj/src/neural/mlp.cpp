#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "stcp/error.hpp"
#include "stcp/neural.hpp"
#include "stcp/parallel.hpp"

namespace stcp {
namespace {

constexpr double kLogVarMin = -27.631021115928547;  // log(kSigmaMin^2)

struct Trace {
  std::vector<Eigen::MatrixXd> pre;    // pre-activation of every layer
  std::vector<Eigen::MatrixXd> input;  // input to every layer (input[0] = x)
  std::vector<Eigen::MatrixXd> mask;   // scaled dropout mask per hidden layer
};

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2)); }

double gelu_grad(double z) {
  const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + z * pdf;
}

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::Tanh) return z.array().tanh().matrix();
  return z.unaryExpr(&gelu);
}

Eigen::MatrixXd activate_grad(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::Tanh) {
    const Eigen::ArrayXXd t = z.array().tanh();
    return (1.0 - t * t).matrix();
  }
  return z.unaryExpr(&gelu_grad);
}

Eigen::MatrixXd run(const ModelParams& m, const Eigen::MatrixXd& x, Mode mode, Rng& rng,
                    Trace* trace) {
  if (static_cast<std::size_t>(x.rows()) != m.input_size()) {
    fail(ErrorKind::Shape, "forward: input has " + std::to_string(x.rows()) +
                               " features, model expects " + std::to_string(m.input_size()));
  }
  const std::size_t layers = m.weights.size();
  const double p = m.config.dropout_rate;
  const bool drop = mode == Mode::Train && p > 0.0;
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = m.weights[l] * a;
    z.colwise() += m.biases[l];
    if (trace) {
      trace->input.push_back(a);
      trace->pre.push_back(z);
    }
    if (l + 1 == layers) return z;
    a = activate(m.config.activation, z);
    if (drop) {
      Eigen::MatrixXd mask(a.rows(), a.cols());
      const double keep_scale = 1.0 / (1.0 - p);
      for (Eigen::Index c = 0; c < mask.cols(); ++c) {
        for (Eigen::Index r = 0; r < mask.rows(); ++r) {
          mask(r, c) = rng.bernoulli(p) ? 0.0 : keep_scale;
        }
      }
      a = a.cwiseProduct(mask);
      if (trace) trace->mask.push_back(std::move(mask));
    } else if (trace) {
      trace->mask.push_back(Eigen::MatrixXd::Ones(a.rows(), a.cols()));
    }
  }
  return a;
}

Eigen::MatrixXd scaled_column_block(const TensorStack& s, const RangeScaler& sc,
                                    std::size_t begin, std::size_t count) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(s.cells()), static_cast<Eigen::Index>(count));
  for (std::size_t j = 0; j < count; ++j) {
    const auto v = s.sample(begin + j);
    for (std::size_t r = 0; r < v.size(); ++r) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = sc.transform(v[r]);
    }
  }
  return out;
}

}  // namespace

void validate(const MlpConfig& cfg) {
  if (cfg.layer_sizes.size() < 2) fail(ErrorKind::Config, "mlp: at least 2 layer sizes required");
  for (std::size_t s : cfg.layer_sizes) {
    if (s == 0) fail(ErrorKind::Config, "mlp: layer sizes must be positive");
  }
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
    fail(ErrorKind::Config, "mlp: dropout rate must lie in [0, 1)");
  }
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.decay_every == 0) {
    fail(ErrorKind::Config, "train: epochs, batch size and decay interval must be positive");
  }
  if (!(cfg.learning_rate > 0.0)) fail(ErrorKind::Config, "train: learning rate must be > 0");
  if (!(cfg.decay_factor > 0.0)) fail(ErrorKind::Config, "train: decay factor must be > 0");
}

Loss Loss::pinball(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) fail(ErrorKind::Config, "pinball: tau must lie in (0, 1)");
  return {Kind::Pinball, tau};
}

RangeScaler RangeScaler::fit(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  RangeScaler s{*lo, *hi};
  if (!(s.hi > s.lo)) s.hi = s.lo + 1.0;
  return s;
}

std::size_t ModelParams::output_width() const {
  return config.head == OutputHead::MeanLogVar ? 2 * target_size() : target_size();
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

ModelParams init_model(const MlpConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  ModelParams m;
  m.config = cfg;
  m.seed = seed;
  Rng rng(derive_seed(seed, 0));
  const std::size_t layers = cfg.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = cfg.layer_sizes[l];
    std::size_t out = cfg.layer_sizes[l + 1];
    if (l + 1 == layers && cfg.head == OutputHead::MeanLogVar) out *= 2;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Eigen::MatrixXd w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out)));
  }
  return m;
}

Eigen::MatrixXd forward_network(const ModelParams& m, const Eigen::MatrixXd& x, Mode mode,
                                Rng& rng) {
  return run(m, x, mode, rng, nullptr);
}

std::vector<double> forward(const ModelParams& m, std::span<const double> x, Mode mode,
                            Rng& rng) {
  if (x.size() != m.input_size()) {
    fail(ErrorKind::Shape, "forward: input length " + std::to_string(x.size()) +
                               " != " + std::to_string(m.input_size()));
  }
  Eigen::MatrixXd in(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    in(static_cast<Eigen::Index>(i), 0) = m.input_scaler.transform(x[i]);
  }
  const Eigen::MatrixXd out = run(m, in, mode, rng, nullptr);
  std::vector<double> y(static_cast<std::size_t>(out.rows()));
  if (m.config.head == OutputHead::MeanLogVar) {
    const double log_unit2 = 2.0 * std::log(m.output_scaler.unit());
    for (std::size_t i = 0; i < y.size(); i += 2) {
      y[i] = m.output_scaler.inverse(out(static_cast<Eigen::Index>(i), 0));
      y[i + 1] = out(static_cast<Eigen::Index>(i + 1), 0) + log_unit2;
    }
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = m.output_scaler.inverse(out(static_cast<Eigen::Index>(i), 0));
    }
  }
  return y;
}

McEstimate forward_mc_dropout(const ModelParams& m, std::span<const double> x,
                              std::size_t passes, Rng& rng) {
  if (passes < 2) fail(ErrorKind::Config, "MC dropout needs at least 2 passes");
  if (x.size() != m.input_size()) {
    fail(ErrorKind::Shape, "forward: input length " + std::to_string(x.size()) +
                               " != " + std::to_string(m.input_size()));
  }
  Eigen::MatrixXd in(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(passes));
  for (std::size_t i = 0; i < x.size(); ++i) {
    in.row(static_cast<Eigen::Index>(i)).setConstant(m.input_scaler.transform(x[i]));
  }
  const Eigen::MatrixXd out = run(m, in, Mode::Train, rng, nullptr);
  const std::size_t stride = m.config.head == OutputHead::MeanLogVar ? 2 : 1;
  const std::size_t n = m.target_size();
  McEstimate est;
  est.mean.resize(n);
  est.std.resize(n);
  const double unit = m.output_scaler.unit();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = out.row(static_cast<Eigen::Index>(i * stride));
    const double mean = row.mean();
    const double var = (row.array() - mean).square().sum() / static_cast<double>(passes - 1);
    est.mean[i] = m.output_scaler.inverse(mean);
    est.std[i] = std::max(std::sqrt(var) * unit, kSigmaMin);
  }
  return est;
}

double loss_eval(const Loss& loss, std::span<const double> pred, std::span<const double> target) {
  const bool nll = loss.kind == Loss::Kind::GaussianNll;
  if (pred.size() != (nll ? 2 : 1) * target.size()) {
    fail(ErrorKind::Shape, "loss: prediction/target length mismatch");
  }
  const std::size_t n = target.size();
  if (n == 0) return 0.0;
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (loss.kind) {
      case Loss::Kind::Mse: {
        const double e = target[i] - pred[i];
        terms[i] = e * e;
        break;
      }
      case Loss::Kind::L1: terms[i] = std::fabs(target[i] - pred[i]); break;
      case Loss::Kind::Pinball: {
        const double e = target[i] - pred[i];
        terms[i] = std::max(loss.tau * e, (loss.tau - 1.0) * e);
        break;
      }
      case Loss::Kind::GaussianNll: {
        const double mu = pred[2 * i];
        const double s = std::max(pred[2 * i + 1], kLogVarMin);
        const double e = target[i] - mu;
        terms[i] = 0.5 * s + 0.5 * e * e * std::exp(-s);
        break;
      }
    }
  }
  return pairwise_sum(terms) / static_cast<double>(n);
}

std::vector<double> loss_grad(const Loss& loss, std::span<const double> pred,
                              std::span<const double> target) {
  const bool nll = loss.kind == Loss::Kind::GaussianNll;
  if (pred.size() != (nll ? 2 : 1) * target.size()) {
    fail(ErrorKind::Shape, "loss: prediction/target length mismatch");
  }
  const std::size_t n = target.size();
  std::vector<double> g(pred.size(), 0.0);
  if (n == 0) return g;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (loss.kind) {
      case Loss::Kind::Mse: g[i] = 2.0 * (pred[i] - target[i]) * inv_n; break;
      case Loss::Kind::L1: {
        const double e = target[i] - pred[i];
        g[i] = (e > 0.0 ? -1.0 : e < 0.0 ? 1.0 : 0.0) * inv_n;
        break;
      }
      case Loss::Kind::Pinball: {
        const double e = target[i] - pred[i];
        g[i] = (e > 0.0 ? -loss.tau : e < 0.0 ? 1.0 - loss.tau : 0.0) * inv_n;
        break;
      }
      case Loss::Kind::GaussianNll: {
        const double mu = pred[2 * i];
        const double raw_s = pred[2 * i + 1];
        const double s = std::max(raw_s, kLogVarMin);
        const double e = target[i] - mu;
        const double inv_var = std::exp(-s);
        g[2 * i] = -e * inv_var * inv_n;
        g[2 * i + 1] = raw_s < kLogVarMin ? 0.0 : (0.5 - 0.5 * e * e * inv_var) * inv_n;
        break;
      }
    }
  }
  return g;
}

Gradients backward_gradients(const ModelParams& m, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& target, const Loss& loss, Mode mode,
                             Rng& rng) {
  if (static_cast<std::size_t>(target.rows()) != m.target_size() || target.cols() != x.cols()) {
    fail(ErrorKind::Shape, "backward: target shape does not match model/batch");
  }
  Trace trace;
  const Eigen::MatrixXd out = run(m, x, mode, rng, &trace);
  const std::span<const double> pred(out.data(), static_cast<std::size_t>(out.size()));
  const std::span<const double> tgt(target.data(), static_cast<std::size_t>(target.size()));

  Gradients g;
  g.loss = loss_eval(loss, pred, tgt);
  const std::vector<double> dout = loss_grad(loss, pred, tgt);
  Eigen::MatrixXd delta = Eigen::Map<const Eigen::MatrixXd>(dout.data(), out.rows(), out.cols());

  const std::size_t layers = m.weights.size();
  g.weights.resize(layers);
  g.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = delta * trace.input[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    delta = m.weights[l].transpose() * delta;
    delta = delta.cwiseProduct(trace.mask[l - 1])
                .cwiseProduct(activate_grad(m.config.activation, trace.pre[l - 1]));
  }
  return g;
}

TrainResult train(const TensorStack& inputs, const TensorStack& outputs, const MlpConfig& mcfg,
                  const TrainConfig& tcfg, const Loss& loss) {
  validate(mcfg);
  validate(tcfg);
  if (inputs.count() == 0) fail(ErrorKind::Data, "train: empty dataset");
  if (inputs.count() != outputs.count()) fail(ErrorKind::Shape, "train: input/output counts differ");
  if (inputs.cells() != mcfg.layer_sizes.front() || outputs.cells() != mcfg.layer_sizes.back()) {
    fail(ErrorKind::Shape, "train: flattened sample sizes do not match the MLP layer sizes");
  }
  if ((loss.kind == Loss::Kind::GaussianNll) != (mcfg.head == OutputHead::MeanLogVar)) {
    fail(ErrorKind::Config, "train: Gaussian NLL requires (and is required by) a mean-logvar head");
  }

  TrainResult result;
  ModelParams& m = result.model;
  m = init_model(mcfg, tcfg.seed);
  m.input_scaler = RangeScaler::fit(inputs.values());
  m.output_scaler = RangeScaler::fit(outputs.values());

  const std::size_t n = inputs.count();
  const Eigen::MatrixXd x_all = scaled_column_block(inputs, m.input_scaler, 0, n);
  const Eigen::MatrixXd t_all = scaled_column_block(outputs, m.output_scaler, 0, n);

  const std::size_t layers = m.weights.size();
  std::vector<Eigen::MatrixXd> mw(layers), vw(layers);
  std::vector<Eigen::VectorXd> mb(layers), vb(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    mw[l] = vw[l] = Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols());
    mb[l] = vb[l] = Eigen::VectorXd::Zero(m.biases[l].size());
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  Rng rng(derive_seed(tcfg.seed, 1));
  std::vector<Eigen::Index> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Eigen::Index>(i);
  std::size_t step = 0;
  result.loss_history.reserve(tcfg.epochs);

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = tcfg.learning_rate *
                      std::pow(tcfg.decay_factor, static_cast<double>(epoch / tcfg.decay_every));
    rng.shuffle(std::span<Eigen::Index>(order));
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n; begin += tcfg.batch_size) {
      const std::size_t count = std::min(tcfg.batch_size, n - begin);
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(begin + count));
      const Eigen::MatrixXd xb = x_all(Eigen::all, idx);
      const Eigen::MatrixXd tb = t_all(Eigen::all, idx);
      const Gradients g = backward_gradients(m, xb, tb, loss, Mode::Train, rng);
      epoch_loss += g.loss * static_cast<double>(count);

      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t l = 0; l < layers; ++l) {
        mw[l] = kBeta1 * mw[l] + (1.0 - kBeta1) * g.weights[l];
        vw[l] = kBeta2 * vw[l] + (1.0 - kBeta2) * g.weights[l].cwiseProduct(g.weights[l]);
        m.weights[l].array() -=
            lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + kEps);
        mb[l] = kBeta1 * mb[l] + (1.0 - kBeta1) * g.biases[l];
        vb[l] = kBeta2 * vb[l] + (1.0 - kBeta2) * g.biases[l].cwiseProduct(g.biases[l]);
        m.biases[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + kEps);
      }
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      fail(ErrorKind::Divergence, "train: non-finite loss at epoch " + std::to_string(epoch));
    }
    result.loss_history.push_back(epoch_loss);
  }
  return result;
}

TrainResult train(const std::vector<SimulationRecord>& dataset, const MlpConfig& mcfg,
                  const TrainConfig& tcfg, const Loss& loss) {
  if (dataset.empty()) fail(ErrorKind::Data, "train: empty dataset");
  std::vector<FieldTensor> in, out;
  in.reserve(dataset.size());
  out.reserve(dataset.size());
  for (const auto& r : dataset) {
    in.push_back(r.input);
    out.push_back(r.output);
  }
  return train(TensorStack::from_tensors(in), TensorStack::from_tensors(out), mcfg, tcfg, loss);
}

StackPrediction predict(const ModelParams& m, const TensorStack& inputs, const Dims& output_dims,
                        std::size_t workers) {
  if (inputs.cells() != m.input_size() || element_count(output_dims) != m.target_size()) {
    fail(ErrorKind::Shape, "predict: stack shape does not match the model");
  }
  constexpr std::size_t kChunk = 256;
  const std::size_t n = inputs.count();
  const bool has_sigma = m.config.head == OutputHead::MeanLogVar;
  StackPrediction p{TensorStack(output_dims, n),
                    has_sigma ? TensorStack(output_dims, n) : TensorStack{}};
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  const double unit = m.output_scaler.unit();
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t count = std::min(kChunk, n - begin);
    Rng unused(0);
    const Eigen::MatrixXd out =
        run(m, scaled_column_block(inputs, m.input_scaler, begin, count), Mode::Eval, unused, nullptr);
    for (std::size_t j = 0; j < count; ++j) {
      auto center = p.center.mutable_sample(begin + j);
      for (std::size_t i = 0; i < center.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(has_sigma ? 2 * i : i);
        center[i] = m.output_scaler.inverse(out(r, static_cast<Eigen::Index>(j)));
      }
      if (has_sigma) {
        auto sigma = p.sigma.mutable_sample(begin + j);
        for (std::size_t i = 0; i < sigma.size(); ++i) {
          const double s = out(static_cast<Eigen::Index>(2 * i + 1), static_cast<Eigen::Index>(j));
          sigma[i] = std::max(std::exp(0.5 * s) * unit, kSigmaMin);
        }
      }
    }
  });
  return p;
}

StackPrediction predict_mc(const ModelParams& m, const TensorStack& inputs, const Dims& output_dims,
                           std::size_t passes, std::uint64_t seed, std::size_t workers) {
  if (inputs.cells() != m.input_size() || element_count(output_dims) != m.target_size()) {
    fail(ErrorKind::Shape, "predict: stack shape does not match the model");
  }
  if (passes < 2) fail(ErrorKind::Config, "MC dropout needs at least 2 passes");
  const std::size_t n = inputs.count();
  StackPrediction p{TensorStack(output_dims, n), TensorStack(output_dims, n)};
  parallel_for(n, workers, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    const McEstimate est = forward_mc_dropout(m, inputs.sample(i), passes, rng);
    std::copy(est.mean.begin(), est.mean.end(), p.center.mutable_sample(i).begin());
    std::copy(est.std.begin(), est.std.end(), p.sigma.mutable_sample(i).begin());
  });
  return p;
}

}  // namespace stcp
