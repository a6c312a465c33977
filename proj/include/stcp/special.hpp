#pragma once

#include <functional>
#include <span>

namespace stcp {

/// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
[[nodiscard]] double incomplete_beta(double a, double b, double x);

/// Inverse of I_x(a, b) in x by bisection to an absolute tolerance.
[[nodiscard]] double beta_quantile(double a, double b, double p, double tol = 1e-10);

[[nodiscard]] double normal_cdf(double z);
[[nodiscard]] double normal_quantile(double p);

/// Two-sided one-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
[[nodiscard]] double ks_statistic(std::span<const double> samples,
                                  const std::function<double(double)>& cdf);

/// Asymptotic p-value of the KS statistic with Stephens' small-n correction.
[[nodiscard]] double ks_pvalue(double statistic, std::size_t n);

}  // namespace stcp
