#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stcp/tensor.hpp"

namespace stcp {

enum class Method { Aer, Std, Cqr };

/// STD scores require sigma at or above this floor.
inline constexpr double kScoreSigmaFloor = 1e-6;

[[nodiscard]] const char* to_string(Method m);
[[nodiscard]] Method method_from_string(const std::string& name);

/// Non-conformity score choice with its parameters.
struct NonconformityMethod {
  Method tag = Method::Aer;
  std::size_t passes = 32;  // STD: MC-dropout forwards
  double alpha_lo = 0.05;   // CQR: lower/upper quantile levels
  double alpha_hi = 0.95;

  static NonconformityMethod aer() { return {}; }
  static NonconformityMethod std_dev(std::size_t passes = 32) { return {Method::Std, passes}; }
  static NonconformityMethod cqr(double lo = 0.05, double hi = 0.95) {
    return {Method::Cqr, 32, lo, hi};
  }
};

void validate(const NonconformityMethod& m);

/// What a surrogate produced for a batch of inputs. Which stacks are used
/// depends on the method: AER `center`; STD `center` (mu) and `sigma`;
/// CQR `lower` and `upper` (`center` optionally holds the median).
struct SurrogateOutputs {
  Method method = Method::Aer;
  TensorStack center;
  TensorStack sigma;
  TensorStack lower;
  TensorStack upper;

  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] const Dims& dims() const;
};

struct ScoreTensor {
  Method method = Method::Aer;
  TensorStack scores;  // n_cal samples of per-cell scores

  [[nodiscard]] std::size_t n_cal() const { return scores.count(); }
};

/// |y - f(x)|
[[nodiscard]] ScoreTensor score_aer(const TensorStack& pred, const TensorStack& truth);
/// |y - mu(x)| / sigma(x); data error if sigma < kScoreSigmaFloor anywhere.
[[nodiscard]] ScoreTensor score_std(const TensorStack& mu, const TensorStack& sigma,
                                    const TensorStack& truth);
/// max(lo(x) - y, y - hi(x)); negative inside the band.
[[nodiscard]] ScoreTensor score_cqr(const TensorStack& lo, const TensorStack& hi,
                                    const TensorStack& truth);
[[nodiscard]] ScoreTensor score(const SurrogateOutputs& outputs, const TensorStack& truth);

/// k = ceil((n_cal + 1)(1 - alpha)), guarded against round-off just above an
/// integer.
[[nodiscard]] std::size_t conformal_rank(std::size_t n_cal, double alpha);

/// Per-cell conformal quantile; +Inf cells where the rank exceeds n_cal.
struct QuantileField {
  FieldTensor qhat;
  double alpha = 0.1;
  std::size_t n_cal = 0;
  Method method = Method::Aer;
};

/// Per cell, the k-th smallest score (nth_element selection, parallel over
/// cells).
[[nodiscard]] QuantileField conformal_quantile(const ScoreTensor& scores, double alpha,
                                               std::size_t workers = 1);

struct PredictionBand {
  TensorStack lower;
  TensorStack upper;
  Method method = Method::Aer;
  double alpha = 0.1;
  std::size_t n_cal = 0;  // 0 for uncalibrated bands
};

/// AER f -/+ q; STD mu -/+ q sigma; CQR [lo - q, hi + q], collapsed onto
/// (lo + hi) / 2 where the ends cross.
[[nodiscard]] PredictionBand build_band(const SurrogateOutputs& outputs, const QuantileField& q,
                                        std::size_t workers = 1);

/// Band before calibration: CQR [lo, hi] (crossing collapsed as above); STD mu -/+ z_{1-alpha/2} sigma.
/// AER has no uncalibrated band (config error).
[[nodiscard]] PredictionBand uncalibrated_band(const SurrogateOutputs& outputs, double alpha);

/// Beta law of per-cell coverage: parameters (k, n_cal + 1 - k).
struct BetaLaw {
  std::size_t rank = 0;
  double a = 0.0;
  double b = 0.0;
  double mean = 1.0;
  double lo = 1.0;
  double hi = 1.0;
  bool degenerate = false;  // k > n_cal: infinite band, coverage 1

  [[nodiscard]] double half_width() const { return 0.5 * (hi - lo); }
};

[[nodiscard]] BetaLaw coverage_beta(std::size_t n_cal, double alpha, double mass = 0.99);

struct CoverageReport {
  FieldTensor per_cell_coverage;
  double mean_coverage = 0.0;
  double tightness = 0.0;          // mean finite width x width_scale
  std::size_t infinite_cells = 0;  // cells excluded from tightness
  std::size_t n_val = 0;
  double alpha = 0.0;
  BetaLaw beta;
};

/// Closed-interval coverage per cell, averaged over cells in a fixed
/// reduction order. `width_scale` converts widths to reporting units.
[[nodiscard]] CoverageReport empirical_coverage(const PredictionBand& band,
                                                const TensorStack& truths,
                                                double width_scale = 1.0, double mass = 0.99,
                                                std::size_t workers = 1);

struct SweepRow {
  double alpha = 0.0;
  double target = 0.0;
  double empirical = 0.0;
  double tightness = 0.0;
  double beta_lo = 0.0;
  double beta_hi = 0.0;
};

/// One row per alpha; calibration scores are quantiled afresh per alpha.
[[nodiscard]] std::vector<SweepRow> validation_sweep(const ScoreTensor& calibration_scores,
                                                     const SurrogateOutputs& validation_outputs,
                                                     const TensorStack& validation_truth,
                                                     std::span<const double> alphas,
                                                     double width_scale = 1.0,
                                                     std::size_t workers = 1);
[[nodiscard]] std::vector<SweepRow> validation_sweep(const SurrogateOutputs& calibration_outputs,
                                                     const TensorStack& calibration_truth,
                                                     const SurrogateOutputs& validation_outputs,
                                                     const TensorStack& validation_truth,
                                                     std::span<const double> alphas,
                                                     double width_scale = 1.0,
                                                     std::size_t workers = 1);

/// lo, lo + step, ..., hi with values rounded to 10 decimals.
[[nodiscard]] std::vector<double> alpha_grid(double lo, double hi, double step);
void validate_alpha_grid(std::span<const double> alphas);

/// Header: alpha,target,empirical,tightness,beta_lo,beta_hi
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);
[[nodiscard]] std::vector<SweepRow> read_sweep_csv(std::istream& is);

/// Whether the row's coverage is at least target - half-width of its Beta band.
[[nodiscard]] bool meets_coverage_bound(const SweepRow& row);

[[nodiscard]] nlohmann::json report_json(const CoverageReport& report);

}  // namespace stcp
