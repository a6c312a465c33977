#include "stcp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>

#include "stcp/error.hpp"
#include "stcp/parallel.hpp"
#include "stcp/special.hpp"
#include "stcp/text.hpp"

namespace stcp {
namespace {

constexpr std::size_t kCellBlock = 64;
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorKind::Config, "alpha " + format_double(alpha) + " outside (0, 1)");
  }
}

void require_samples(const TensorStack& s, const char* what) {
  if (s.count() == 0) fail(ErrorKind::Data, std::string(what) + ": empty stack");
}

std::size_t block_count(std::size_t cells) { return (cells + kCellBlock - 1) / kCellBlock; }

// Calls body(cell, buffer) for every cell, blocks of cells per task, one
// scratch buffer per block.
template <typename Body>
void for_each_cell(std::size_t cells, std::size_t workers, Body&& body) {
  parallel_for(block_count(cells), workers, [&](std::size_t b) {
    std::vector<double> buffer;
    const std::size_t end = std::min(cells, (b + 1) * kCellBlock);
    for (std::size_t cell = b * kCellBlock; cell < end; ++cell) body(cell, buffer);
  });
}

// [lo - q, hi + q]; when the ends cross the band collapses onto the
// midpoint of the quantile outputs, which keeps bands nested in q.
std::pair<double, double> cqr_interval(double lo, double hi, double q) {
  const double mid = 0.5 * (lo + hi);
  return {std::min(lo - q, mid), std::max(hi + q, mid)};
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::Aer:
      return "aer";
    case Method::Std:
      return "std";
    case Method::Cqr:
      return "cqr";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "aer") return Method::Aer;
  if (name == "std") return Method::Std;
  if (name == "cqr") return Method::Cqr;
  fail(ErrorKind::Config, "unknown method '" + name + "' (expected aer, std or cqr)");
}

void validate(const NonconformityMethod& m) {
  if (m.tag == Method::Std && m.passes < 2) {
    fail(ErrorKind::Config, "std: passes must be >= 2");
  }
  if (m.tag == Method::Cqr && !(m.alpha_lo > 0.0 && m.alpha_lo < m.alpha_hi && m.alpha_hi < 1.0)) {
    fail(ErrorKind::Config, "cqr: need 0 < alpha_lo < alpha_hi < 1");
  }
}

std::size_t SurrogateOutputs::count() const {
  return method == Method::Cqr ? lower.count() : center.count();
}

const Dims& SurrogateOutputs::dims() const {
  return method == Method::Cqr ? lower.dims() : center.dims();
}

ScoreTensor score_aer(const TensorStack& pred, const TensorStack& truth) {
  require_same_shape(pred, truth, "score_aer");
  require_samples(truth, "score_aer");
  std::vector<double> s(truth.values().size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::fabs(truth.values()[i] - pred.values()[i]);
  return {Method::Aer, TensorStack(truth.dims(), truth.count(), std::move(s))};
}

ScoreTensor score_std(const TensorStack& mu, const TensorStack& sigma, const TensorStack& truth) {
  require_same_shape(mu, truth, "score_std");
  require_same_shape(sigma, truth, "score_std");
  require_samples(truth, "score_std");
  std::vector<double> s(truth.values().size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double sd = sigma.values()[i];
    if (!(sd >= kScoreSigmaFloor)) {
      fail(ErrorKind::Data, "score_std: sigma " + format_double(sd) + " below floor at element " +
                                std::to_string(i));
    }
    s[i] = std::fabs(truth.values()[i] - mu.values()[i]) / sd;
  }
  return {Method::Std, TensorStack(truth.dims(), truth.count(), std::move(s))};
}

ScoreTensor score_cqr(const TensorStack& lo, const TensorStack& hi, const TensorStack& truth) {
  require_same_shape(lo, truth, "score_cqr");
  require_same_shape(hi, truth, "score_cqr");
  require_samples(truth, "score_cqr");
  std::vector<double> s(truth.values().size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double y = truth.values()[i];
    s[i] = std::max(lo.values()[i] - y, y - hi.values()[i]);
  }
  return {Method::Cqr, TensorStack(truth.dims(), truth.count(), std::move(s))};
}

ScoreTensor score(const SurrogateOutputs& outputs, const TensorStack& truth) {
  switch (outputs.method) {
    case Method::Aer:
      return score_aer(outputs.center, truth);
    case Method::Std:
      return score_std(outputs.center, outputs.sigma, truth);
    case Method::Cqr:
      return score_cqr(outputs.lower, outputs.upper, truth);
  }
  fail(ErrorKind::Config, "score: unknown method");
}

std::size_t conformal_rank(std::size_t n_cal, double alpha) {
  require_alpha(alpha);
  if (n_cal == 0) fail(ErrorKind::Data, "conformal rank: n_cal must be >= 1");
  const double x = static_cast<double>(n_cal + 1) * (1.0 - alpha);
  // (n+1)(1-alpha) may land a few ulps above an integer it equals exactly.
  const double k = std::ceil(x - 1e-9 * std::max(1.0, x));
  return std::max<std::size_t>(1, static_cast<std::size_t>(k));
}

QuantileField conformal_quantile(const ScoreTensor& scores, double alpha, std::size_t workers) {
  require_alpha(alpha);
  const TensorStack& s = scores.scores;
  const std::size_t n = s.count();
  if (n == 0) fail(ErrorKind::Data, "conformal quantile: no calibration scores");
  const std::size_t k = conformal_rank(n, alpha);
  const std::size_t cells = s.cells();
  std::vector<double> q(cells, kInf);
  if (k <= n) {
    const auto values = s.values();
    for_each_cell(cells, workers, [&](std::size_t cell, std::vector<double>& buf) {
      buf.resize(n);
      for (std::size_t i = 0; i < n; ++i) buf[i] = values[i * cells + cell];
      const auto kth = buf.begin() + static_cast<std::ptrdiff_t>(k - 1);
      std::nth_element(buf.begin(), kth, buf.end());
      q[cell] = *kth;
    });
  }
  return {FieldTensor(s.dims(), std::move(q), Finiteness::AllowInfinite), alpha, n, scores.method};
}

PredictionBand build_band(const SurrogateOutputs& outputs, const QuantileField& q,
                          std::size_t workers) {
  if (q.method != outputs.method) {
    fail(ErrorKind::Config, std::string("build_band: quantile method ") + to_string(q.method) +
                                " does not match outputs " + to_string(outputs.method));
  }
  if (q.qhat.dims() != outputs.dims()) fail(ErrorKind::Shape, "build_band: quantile dims mismatch");
  const std::size_t count = outputs.count();
  const std::size_t cells = q.qhat.size();
  PredictionBand band{TensorStack(outputs.dims(), count), TensorStack(outputs.dims(), count),
                      outputs.method, q.alpha, q.n_cal};
  if (outputs.method == Method::Std) require_same_shape(outputs.center, outputs.sigma, "build_band");
  if (outputs.method == Method::Cqr) require_same_shape(outputs.lower, outputs.upper, "build_band");

  parallel_for(count, workers, [&](std::size_t i) {
    auto lo = band.lower.mutable_sample(i);
    auto hi = band.upper.mutable_sample(i);
    for (std::size_t c = 0; c < cells; ++c) {
      const double qc = q.qhat[c];
      switch (outputs.method) {
        case Method::Aer: {
          const double f = outputs.center.at(i, c);
          lo[c] = f - qc;
          hi[c] = f + qc;
          break;
        }
        case Method::Std: {
          const double mu = outputs.center.at(i, c);
          const double half = qc * outputs.sigma.at(i, c);
          lo[c] = mu - half;
          hi[c] = mu + half;
          break;
        }
        case Method::Cqr: {
          const auto [l, u] = cqr_interval(outputs.lower.at(i, c), outputs.upper.at(i, c), qc);
          lo[c] = l;
          hi[c] = u;
          break;
        }
      }
    }
  });
  return band;
}

PredictionBand uncalibrated_band(const SurrogateOutputs& outputs, double alpha) {
  require_alpha(alpha);
  const std::size_t count = outputs.count();
  PredictionBand band{TensorStack(outputs.dims(), count), TensorStack(outputs.dims(), count),
                      outputs.method, alpha, 0};
  auto lo = band.lower.mutable_values();
  auto hi = band.upper.mutable_values();
  switch (outputs.method) {
    case Method::Aer:
      fail(ErrorKind::Config, "aer has no uncalibrated band");
    case Method::Std: {
      require_same_shape(outputs.center, outputs.sigma, "uncalibrated_band");
      const double z = normal_quantile(1.0 - 0.5 * alpha);
      for (std::size_t j = 0; j < lo.size(); ++j) {
        lo[j] = outputs.center.values()[j] - z * outputs.sigma.values()[j];
        hi[j] = outputs.center.values()[j] + z * outputs.sigma.values()[j];
      }
      break;
    }
    case Method::Cqr:
      require_same_shape(outputs.lower, outputs.upper, "uncalibrated_band");
      for (std::size_t j = 0; j < lo.size(); ++j) {
        std::tie(lo[j], hi[j]) =
            cqr_interval(outputs.lower.values()[j], outputs.upper.values()[j], 0.0);
      }
      break;
  }
  return band;
}

BetaLaw coverage_beta(std::size_t n_cal, double alpha, double mass) {
  if (!(mass > 0.0 && mass < 1.0)) fail(ErrorKind::Config, "coverage_beta: mass outside (0, 1)");
  const std::size_t k = conformal_rank(n_cal, alpha);
  BetaLaw law;
  law.rank = k;
  if (k > n_cal) {
    law.degenerate = true;
    return law;
  }
  law.a = static_cast<double>(k);
  law.b = static_cast<double>(n_cal + 1 - k);
  law.mean = law.a / (law.a + law.b);
  const double tail = 0.5 * (1.0 - mass);
  law.lo = beta_quantile(law.a, law.b, tail);
  law.hi = beta_quantile(law.a, law.b, 1.0 - tail);
  return law;
}

CoverageReport empirical_coverage(const PredictionBand& band, const TensorStack& truths,
                                  double width_scale, double mass, std::size_t workers) {
  require_same_shape(band.lower, truths, "empirical_coverage");
  require_same_shape(band.upper, truths, "empirical_coverage");
  require_samples(truths, "empirical_coverage");
  const std::size_t n = truths.count();
  const std::size_t cells = truths.cells();
  std::vector<double> coverage(cells);
  std::vector<double> mean_width(cells);
  std::vector<char> infinite(cells, 0);

  for_each_cell(cells, workers, [&](std::size_t cell, std::vector<double>& widths) {
    widths.resize(n);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double lo = band.lower.at(i, cell);
      const double hi = band.upper.at(i, cell);
      const double y = truths.at(i, cell);
      if (lo <= y && y <= hi) ++covered;
      widths[i] = hi - lo;
      if (std::isinf(widths[i])) infinite[cell] = 1;
    }
    coverage[cell] = static_cast<double>(covered) / static_cast<double>(n);
    mean_width[cell] = infinite[cell] ? 0.0 : pairwise_sum(widths) / static_cast<double>(n);
  });

  CoverageReport report;
  report.per_cell_coverage = FieldTensor(truths.dims(), coverage);
  report.mean_coverage = pairwise_sum(coverage) / static_cast<double>(cells);
  std::vector<double> finite;
  finite.reserve(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    if (infinite[c]) {
      ++report.infinite_cells;
    } else {
      finite.push_back(mean_width[c]);
    }
  }
  report.tightness = finite.empty()
                         ? kInf
                         : width_scale * pairwise_sum(finite) / static_cast<double>(finite.size());
  report.n_val = n;
  report.alpha = band.alpha;
  if (band.n_cal > 0) report.beta = coverage_beta(band.n_cal, band.alpha, mass);
  return report;
}

void validate_alpha_grid(std::span<const double> alphas) {
  if (alphas.empty()) fail(ErrorKind::Config, "alpha grid is empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    require_alpha(alphas[i]);
    if (i > 0 && !(alphas[i] > alphas[i - 1])) {
      fail(ErrorKind::Config, "alpha grid must be strictly increasing");
    }
  }
}

std::vector<SweepRow> validation_sweep(const ScoreTensor& calibration_scores,
                                       const SurrogateOutputs& validation_outputs,
                                       const TensorStack& validation_truth,
                                       std::span<const double> alphas, double width_scale,
                                       std::size_t workers) {
  validate_alpha_grid(alphas);
  std::vector<SweepRow> rows;
  rows.reserve(alphas.size());
  for (const double alpha : alphas) {
    const QuantileField q = conformal_quantile(calibration_scores, alpha, workers);
    const PredictionBand band = build_band(validation_outputs, q, workers);
    const CoverageReport r =
        empirical_coverage(band, validation_truth, width_scale, 0.99, workers);
    rows.push_back({alpha, 1.0 - alpha, r.mean_coverage, r.tightness, r.beta.lo, r.beta.hi});
  }
  return rows;
}

std::vector<SweepRow> validation_sweep(const SurrogateOutputs& calibration_outputs,
                                       const TensorStack& calibration_truth,
                                       const SurrogateOutputs& validation_outputs,
                                       const TensorStack& validation_truth,
                                       std::span<const double> alphas, double width_scale,
                                       std::size_t workers) {
  return validation_sweep(score(calibration_outputs, calibration_truth), validation_outputs,
                          validation_truth, alphas, width_scale, workers);
}

std::vector<double> alpha_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) fail(ErrorKind::Config, "alpha grid: need step > 0, hi >= lo");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> out;
  for (std::size_t i = 0; i <= n; ++i) {
    const double v = lo + static_cast<double>(i) * step;
    out.push_back(std::round(v * 1e10) / 1e10);
  }
  validate_alpha_grid(out);
  return out;
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "alpha,target,empirical,tightness,beta_lo,beta_hi\n";
  for (const SweepRow& r : rows) {
    os << format_double(r.alpha) << ',' << format_double(r.target) << ','
       << format_double(r.empirical) << ',' << format_double(r.tightness) << ','
       << format_double(r.beta_lo) << ',' << format_double(r.beta_hi) << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("alpha,target,empirical,tightness,beta_lo,beta_hi", 0)) {
    fail(ErrorKind::Format, "sweep csv: bad header");
  }
  std::vector<SweepRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    const std::string where = "sweep csv line " + std::to_string(lineno);
    if (f.size() != 6) fail(ErrorKind::Format, where + ": expected 6 fields");
    rows.push_back({parse_double(f[0], where), parse_double(f[1], where),
                    parse_double(f[2], where), parse_double(f[3], where),
                    parse_double(f[4], where), parse_double(f[5], where)});
  }
  return rows;
}

bool meets_coverage_bound(const SweepRow& row) {
  const double delta = 0.5 * (row.beta_hi - row.beta_lo);
  return row.empirical >= row.target - delta;
}

nlohmann::json report_json(const CoverageReport& report) {
  const auto cov = report.per_cell_coverage.values();
  const auto [mn, mx] = std::minmax_element(cov.begin(), cov.end());
  nlohmann::json beta = {{"rank", report.beta.rank},     {"a", report.beta.a},
                         {"b", report.beta.b},           {"mean", report.beta.mean},
                         {"lo", report.beta.lo},         {"hi", report.beta.hi},
                         {"degenerate", report.beta.degenerate}};
  return {{"alpha", report.alpha},
          {"n_val", report.n_val},
          {"mean_coverage", report.mean_coverage},
          {"tightness", std::isinf(report.tightness) ? nlohmann::json("inf")
                                                     : nlohmann::json(report.tightness)},
          {"infinite_cells", report.infinite_cells},
          {"cells", cov.size()},
          {"cell_coverage_min", *mn},
          {"cell_coverage_max", *mx},
          {"beta", beta}};
}

}  // namespace stcp
