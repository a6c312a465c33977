#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stcp/text.hpp"

namespace stcp {

enum class ParameterKind { Continuous, DiscreteInteger };

/// One sampled parameter over [lo, hi).
struct ParameterSpec {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  ParameterKind kind = ParameterKind::Continuous;
};

void validate(const ParameterSpec& spec);

/// n x d design; row-major values.
class DesignMatrix {
 public:
  DesignMatrix(std::vector<ParameterSpec> specs, std::size_t rows, std::vector<double> values,
               std::uint64_t seed);

  [[nodiscard]] const std::vector<ParameterSpec>& specs() const noexcept { return specs_; }
  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return specs_.size(); }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] double at(std::size_t row, std::size_t col) const {
    return values_[row * cols() + col];
  }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols(), cols());
  }
  [[nodiscard]] std::vector<double> column(std::size_t c) const;
  /// Column index by parameter name, or -1.
  [[nodiscard]] int find(const std::string& name) const;

  /// CSV with a header row of parameter names; values printed round-trip exact.
  void write_csv(std::ostream& os) const;

 private:
  std::vector<ParameterSpec> specs_;
  std::size_t rows_;
  std::vector<double> values_;
  std::uint64_t seed_;
};

/// Latin hypercube design: each column, cut into n equal strata of [lo, hi),
/// holds exactly one sample per stratum (uniform jitter inside the stratum).
/// Column c uses the stream derive_seed(seed, c).
[[nodiscard]] DesignMatrix latin_hypercube(std::vector<ParameterSpec> specs, std::size_t n,
                                           std::uint64_t seed);

}  // namespace stcp
