#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "stcp/error.hpp"
#include "stcp/neural.hpp"
#include "stcp/solvers.hpp"

namespace stcp {
namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no stcp::Error thrown";
  return ErrorKind::Io;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1,
                              double hi = 1) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

TEST(Forward, IdentityLinearLayer) {
  ModelParams m = init_model({{3, 3}}, 1);
  m.weights[0] = Eigen::MatrixXd::Identity(3, 3);
  m.biases[0].setZero();
  Rng rng(0);
  const std::vector<double> x{0.5, -2.0, 7.0};
  EXPECT_EQ(forward(m, x, Mode::Eval, rng), x);
}

TEST(Forward, NoDropoutTrainEqualsEval) {
  const ModelParams m = init_model({{4, 8, 3}, Activation::Gelu, 0.0}, 5);
  Rng a(1), b(2);
  const std::vector<double> x{0.1, 0.2, -0.3, 0.9};
  EXPECT_EQ(forward(m, x, Mode::Train, a), forward(m, x, Mode::Eval, b));
}

TEST(Forward, HandComputedTwoLayerNet) {
  ModelParams m = init_model({{2, 2, 1}, Activation::Tanh}, 0);
  m.weights[0] << 1.0, 2.0, -1.0, 0.5;
  m.biases[0] << 0.1, -0.2;
  m.weights[1] << 3.0, -1.0;
  m.biases[1] << 0.25;
  Rng rng(0);
  const double expected = 3.0 * std::tanh(1.0 + 0.1) - std::tanh(-1.0 - 0.2) + 0.25;
  EXPECT_NEAR(forward(m, std::vector<double>{1.0, 0.0}, Mode::Eval, rng)[0], expected, 1e-15);
}

TEST(Forward, ShapeMismatch) {
  const ModelParams m = init_model({{2, 1}}, 0);
  Rng rng(0);
  EXPECT_EQ(kind_of([&] { (void)forward(m, std::vector<double>{1.0}, Mode::Eval, rng); }),
            ErrorKind::Shape);
}

TEST(Forward, EvalIsPure) {
  const ModelParams m = init_model({{3, 6, 2}, Activation::Tanh, 0.3}, 9);
  const ModelParams copy = m;
  Rng rng(4);
  const std::vector<double> x{0.3, 0.1, 0.2};
  const auto y1 = forward(m, x, Mode::Eval, rng);
  const auto y2 = forward(m, x, Mode::Eval, rng);
  EXPECT_EQ(y1, y2);
  for (std::size_t l = 0; l < m.weights.size(); ++l) EXPECT_EQ(m.weights[l], copy.weights[l]);
}

ModelParams unit_dropout_net(double p) {
  ModelParams m = init_model({{1, 1, 1}, Activation::Tanh, p}, 0);
  // tanh(atanh(0.5)) = 0.5, doubled by the output layer: deterministic output 1.
  m.weights[0](0, 0) = std::atanh(0.5);
  m.biases[0].setZero();
  m.weights[1](0, 0) = 2.0;
  m.biases[1].setZero();
  return m;
}

TEST(McDropout, ZeroRateGivesFloorStd) {
  const ModelParams m = init_model({{2, 5, 2}, Activation::Tanh, 0.0}, 3);
  Rng rng(1), eval(0);
  const std::vector<double> x{0.4, -0.4};
  const McEstimate est = forward_mc_dropout(m, x, 16, rng);
  const auto det = forward(m, x, Mode::Eval, eval);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(est.std[i], kSigmaMin);
    EXPECT_NEAR(est.mean[i], det[i], 1e-15);
  }
}

TEST(McDropout, InvertedDropoutExpectation) {
  const ModelParams m = unit_dropout_net(0.5);
  Rng rng(2024);
  const McEstimate est = forward_mc_dropout(m, std::vector<double>{1.0}, 10000, rng);
  EXPECT_NEAR(est.mean[0], 1.0, 0.03);
}

TEST(McDropout, MeanErrorShrinksWithPasses) {
  const ModelParams m = unit_dropout_net(0.5);
  auto spread = [&](std::size_t passes) {
    std::vector<double> means;
    for (std::uint64_t s = 0; s < 200; ++s) {
      Rng rng(derive_seed(77, s));
      means.push_back(forward_mc_dropout(m, std::vector<double>{1.0}, passes, rng).mean[0]);
    }
    double mu = 0.0;
    for (double v : means) mu += v;
    mu /= means.size();
    double var = 0.0;
    for (double v : means) var += (v - mu) * (v - mu);
    return std::sqrt(var / (means.size() - 1));
  };
  // 16x the passes: 4x smaller standard error, within Monte-Carlo slack.
  const double ratio = spread(32) / spread(512);
  EXPECT_GT(ratio, 3.0);
  EXPECT_LT(ratio, 5.3);
}

TEST(McDropout, TooFewPasses) {
  const ModelParams m = unit_dropout_net(0.5);
  Rng rng(0);
  EXPECT_EQ(kind_of([&] { (void)forward_mc_dropout(m, std::vector<double>{1.0}, 1, rng); }),
            ErrorKind::Config);
}

TEST(Loss, PinballHalfIsHalfL1) {
  Rng rng(8);
  std::vector<double> p(50), t(50);
  for (auto& v : p) v = rng.uniform(-2, 2);
  for (auto& v : t) v = rng.uniform(-2, 2);
  EXPECT_NEAR(loss_eval(Loss::pinball(0.5), p, t), 0.5 * loss_eval(Loss::l1(), p, t), 1e-15);
}

TEST(Loss, MseZeroAtTarget) {
  const std::vector<double> v{1.0, -2.0, 3.5};
  EXPECT_EQ(loss_eval(Loss::mse(), v, v), 0.0);
  for (double g : loss_grad(Loss::mse(), v, v)) EXPECT_EQ(g, 0.0);
  for (double g : loss_grad(Loss::l1(), v, v)) EXPECT_EQ(g, 0.0);
  for (double g : loss_grad(Loss::pinball(0.9), v, v)) EXPECT_EQ(g, 0.0);
}

TEST(Loss, PinballHandValues) {
  const Loss q = Loss::pinball(0.9);
  // e = target - pred
  EXPECT_NEAR(loss_eval(q, std::vector<double>{0.0}, std::vector<double>{1.0}), 0.9, 1e-15);
  EXPECT_NEAR(loss_eval(q, std::vector<double>{1.0}, std::vector<double>{0.0}), 0.1, 1e-15);
}

TEST(Loss, GaussianNllHandValue) {
  const double logvar = std::log(4.0);
  const double v = loss_eval(Loss::gaussian_nll(), std::vector<double>{1.0, logvar},
                             std::vector<double>{3.0});
  EXPECT_NEAR(v, 0.5 * logvar + 4.0 / 8.0, 1e-15);
}

TEST(Loss, InvalidInputs) {
  EXPECT_EQ(kind_of([] { (void)Loss::pinball(1.0); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { (void)Loss::pinball(0.0); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] {
              (void)loss_eval(Loss::mse(), std::vector<double>{1.0}, std::vector<double>{1, 2});
            }),
            ErrorKind::Shape);
}

struct GradCase {
  std::vector<std::size_t> sizes;
  Activation act;
  Loss loss;
  double dropout;
};

double loss_at(const ModelParams& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t,
               const Loss& loss, Mode mode, std::uint64_t mask_seed) {
  Rng rng(mask_seed);
  const Eigen::MatrixXd out = forward_network(m, x, mode, rng);
  return loss_eval(loss, std::span<const double>(out.data(), static_cast<std::size_t>(out.size())),
                   std::span<const double>(t.data(), static_cast<std::size_t>(t.size())));
}

TEST(Gradients, MatchCentralDifferencesForEveryCombination) {
  const std::vector<Loss> losses{Loss::mse(), Loss::l1(), Loss::pinball(0.3),
                                 Loss::gaussian_nll()};
  const std::vector<std::vector<std::size_t>> shapes{{3, 5, 2}, {3, 4, 6, 2}, {2, 3}};
  constexpr double kStep = 1e-5;
  constexpr double kRelTol = 1e-4;
  constexpr double kFloor = 1e-8;
  std::size_t checked = 0;
  std::uint64_t seed = 100;
  for (const auto& sizes : shapes) {
    for (Activation act : {Activation::Tanh, Activation::Gelu}) {
      for (const Loss& loss : losses) {
        for (double dropout : {0.0, 0.25}) {
          ++seed;
          MlpConfig cfg{sizes, act, dropout,
                        loss.kind == Loss::Kind::GaussianNll ? OutputHead::MeanLogVar
                                                             : OutputHead::Point};
          ModelParams m = init_model(cfg, seed);
          Rng rng(seed);
          for (auto& b : m.biases) b = random_matrix(b.size(), 1, rng, -0.3, 0.3);
          const Eigen::MatrixXd x = random_matrix(static_cast<Eigen::Index>(sizes.front()), 5, rng);
          const Eigen::MatrixXd t =
              random_matrix(static_cast<Eigen::Index>(sizes.back()), 5, rng, -3, 3);
          const Mode mode = dropout > 0 ? Mode::Train : Mode::Eval;
          const std::uint64_t mask_seed = seed * 31;
          Rng mask_rng(mask_seed);
          const Gradients g = backward_gradients(m, x, t, loss, mode, mask_rng);
          for (std::size_t l = 0; l < m.weights.size(); ++l) {
            auto check = [&](double& param, double analytic, const char* what, Eigen::Index i) {
              const double saved = param;
              param = saved + kStep;
              const double up = loss_at(m, x, t, loss, mode, mask_seed);
              param = saved - kStep;
              const double down = loss_at(m, x, t, loss, mode, mask_seed);
              param = saved;
              const double fd = (up - down) / (2 * kStep);
              EXPECT_LE(std::fabs(analytic - fd) / (std::fabs(analytic) + kFloor), kRelTol)
                  << what << " layer " << l << " index " << i << " act " << int(act) << " loss "
                  << int(loss.kind) << " dropout " << dropout << " analytic " << analytic
                  << " fd " << fd;
              ++checked;
            };
            for (Eigen::Index i = 0; i < m.weights[l].size(); ++i) {
              check(m.weights[l].data()[i], g.weights[l].data()[i], "weight", i);
            }
            for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) {
              check(m.biases[l].data()[i], g.biases[l].data()[i], "bias", i);
            }
          }
        }
      }
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Gradients, ZeroLossGivesZeroGradient) {
  const ModelParams m = init_model({{2, 4, 2}, Activation::Tanh}, 3);
  Rng rng(1);
  const Eigen::MatrixXd x = random_matrix(2, 5, rng);
  const Eigen::MatrixXd t = forward_network(m, x, Mode::Eval, rng);
  const Gradients g = backward_gradients(m, x, t, Loss::mse(), Mode::Eval, rng);
  for (const auto& w : g.weights) EXPECT_EQ(w.norm(), 0.0);
}

TEST(Gradients, MseOutputGradientIsLinearInError) {
  const ModelParams m = init_model({{2, 4, 1}, Activation::Gelu}, 3);
  Rng rng(1);
  const Eigen::MatrixXd x = random_matrix(2, 5, rng);
  const Eigen::MatrixXd y = forward_network(m, x, Mode::Eval, rng);
  const Eigen::MatrixXd e = random_matrix(1, 5, rng);
  const Gradients g1 = backward_gradients(m, x, y + e, Loss::mse(), Mode::Eval, rng);
  const Gradients g2 = backward_gradients(m, x, y + 2 * e, Loss::mse(), Mode::Eval, rng);
  EXPECT_LE((g2.weights[1] - 2 * g1.weights[1]).norm(), 1e-12);
  EXPECT_LE((g2.biases[1] - 2 * g1.biases[1]).norm(), 1e-12);
}

TEST(Scaler, RoundTrip) {
  const std::vector<double> v{-3.0, 0.5, 7.25};
  const RangeScaler s = RangeScaler::fit(v);
  EXPECT_DOUBLE_EQ(s.transform(-3.0), -1.0);
  EXPECT_DOUBLE_EQ(s.transform(7.25), 1.0);
  for (double x : {-3.0, 0.5, 7.25, 100.0}) EXPECT_NEAR(s.inverse(s.transform(x)), x, 1e-12);
}

TEST(Train, LinearGroundTruth) {
  std::vector<double> xs(100), ys(100);
  for (std::size_t i = 0; i < 100; ++i) {
    xs[i] = -1.0 + 2.0 * static_cast<double>(i) / 99.0;
    ys[i] = 2.0 * xs[i];
  }
  const TensorStack in({1, 1, 1, 1}, 100, xs), out({1, 1, 1, 1}, 100, ys);
  TrainConfig tc;
  tc.epochs = 500;
  tc.seed = 3;
  const TrainResult r = train(in, out, {{1, 1}}, tc, Loss::mse());
  ASSERT_EQ(r.loss_history.size(), 500u);
  EXPECT_LE(r.loss_history.back(), 1e-6);
}

TEST(Train, PoissonLossDropsTenfold) {
  const DesignMatrix d = latin_hypercube({{"rho", 0, 4}}, 200, 5);
  const Dataset ds = generate_dataset(d, SolverSetup{}, {1, 1}, {}, 5);
  TrainConfig tc;
  tc.epochs = 60;
  tc.seed = 11;
  const TrainResult r = train(ds.records, {{32, 64, 64, 64, 32}, Activation::Tanh}, tc, Loss::l1());
  EXPECT_LE(r.loss_history.back() * 10.0, r.loss_history.front());
}

TEST(Train, PinballTripleOrdersQuantiles) {
  const std::size_t n = 400;
  std::vector<double> xs(n), ys(n);
  Rng rng(12);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = rng.uniform(-1, 1);
    ys[i] = xs[i] + rng.uniform(-0.5, 0.5);
  }
  const TensorStack in({1, 1, 1, 1}, n, xs), out({1, 1, 1, 1}, n, ys);
  TrainConfig tc;
  tc.epochs = 150;
  tc.seed = 4;
  const MlpConfig mc{{1, 16, 1}, Activation::Tanh};
  std::vector<double> fraction_below;
  for (double tau : {0.05, 0.5, 0.95}) {
    const ModelParams m = train(in, out, mc, tc, Loss::pinball(tau)).model;
    const StackPrediction p = predict(m, in, {1, 1, 1, 1});
    std::size_t below = 0;
    for (std::size_t i = 0; i < n; ++i) below += ys[i] <= p.center.at(i, 0);
    fraction_below.push_back(static_cast<double>(below) / n);
  }
  EXPECT_NEAR(fraction_below[0], 0.05, 0.05);
  EXPECT_NEAR(fraction_below[1], 0.5, 0.07);
  EXPECT_NEAR(fraction_below[2], 0.95, 0.05);
}

TEST(Train, DeterministicGivenSeed) {
  std::vector<double> xs(60), ys(60);
  Rng rng(3);
  for (std::size_t i = 0; i < 60; ++i) {
    xs[i] = rng.uniform(-1, 1);
    ys[i] = std::sin(3 * xs[i]);
  }
  const TensorStack in({1, 1, 1, 1}, 60, xs), out({1, 1, 1, 1}, 60, ys);
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 16;
  tc.seed = 8;
  const MlpConfig mc{{1, 8, 1}, Activation::Gelu, 0.1};
  const TrainResult a = train(in, out, mc, tc, Loss::mse());
  const TrainResult b = train(in, out, mc, tc, Loss::mse());
  EXPECT_EQ(a.loss_history, b.loss_history);
  for (std::size_t l = 0; l < a.model.weights.size(); ++l) {
    EXPECT_EQ(a.model.weights[l], b.model.weights[l]);
  }
}

TEST(Train, Errors) {
  const TensorStack empty({1, 1, 1, 1}, 0);
  EXPECT_EQ(kind_of([&] { (void)train(empty, empty, {{1, 1}}, {}, Loss::mse()); }),
            ErrorKind::Data);
  const TensorStack one({1, 1, 1, 1}, 1, {1.0});
  EXPECT_EQ(kind_of([&] { (void)train(one, one, {{1, 1}}, {}, Loss::gaussian_nll()); }),
            ErrorKind::Config);
  TrainConfig tc;
  tc.epochs = 5;
  tc.learning_rate = 1e300;
  const TensorStack xs({1, 1, 1, 1}, 3, {0.0, 1.0, 2.0});
  const TensorStack ys({1, 1, 1, 1}, 3, {0.0, 1.0, 5.0});
  EXPECT_EQ(kind_of([&] { (void)train(xs, ys, {{1, 50, 1}}, tc, Loss::mse()); }),
            ErrorKind::Divergence);
}

TEST(Predict, WorkerInvariantAndCheckpointRoundTrip) {
  const std::size_t n = 700;
  std::vector<double> xs(n * 3);
  Rng rng(5);
  for (auto& v : xs) v = rng.uniform(-2, 2);
  const TensorStack in({1, 3, 1, 1}, n, xs);
  ModelParams m = init_model({{3, 10, 4}, Activation::Gelu, 0.2, OutputHead::MeanLogVar}, 2);
  m.output_scaler = {-5.0, 3.0};
  const StackPrediction a = predict(m, in, {1, 2, 2, 1}, 1);
  const StackPrediction b = predict(m, in, {1, 2, 2, 1}, 3);
  EXPECT_EQ(a.center, b.center);
  EXPECT_EQ(a.sigma, b.sigma);
  const StackPrediction ma = predict_mc(m, in, {1, 2, 2, 1}, 8, 42, 1);
  const StackPrediction mb = predict_mc(m, in, {1, 2, 2, 1}, 8, 42, 4);
  EXPECT_EQ(ma.center, mb.center);
  EXPECT_EQ(ma.sigma, mb.sigma);

  const auto dir = std::filesystem::temp_directory_path() / "stcp_test_ckpt";
  std::filesystem::remove_all(dir);
  save_model(dir, m, {1.0, 0.5});
  const ModelParams back = load_model(dir);
  EXPECT_EQ(predict(back, in, {1, 2, 2, 1}).center, a.center);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace stcp
