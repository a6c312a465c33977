#include "stcp/sampling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "stcp/error.hpp"
#include "stcp/random.hpp"

namespace stcp {

void validate(const ParameterSpec& spec) {
  if (spec.name.empty()) fail(ErrorKind::Config, "parameter with empty name");
  if (!std::isfinite(spec.lo) || !std::isfinite(spec.hi) || !(spec.lo < spec.hi)) {
    fail(ErrorKind::Config, "parameter '" + spec.name + "': require lo < hi, got [" +
                                format_double(spec.lo) + ", " + format_double(spec.hi) + ")");
  }
  if (spec.kind == ParameterKind::DiscreteInteger &&
      (std::floor(spec.lo) != spec.lo || std::floor(spec.hi) != spec.hi)) {
    fail(ErrorKind::Config, "parameter '" + spec.name + "': integer bounds required");
  }
}

DesignMatrix::DesignMatrix(std::vector<ParameterSpec> specs, std::size_t rows,
                           std::vector<double> values, std::uint64_t seed)
    : specs_(std::move(specs)), rows_(rows), values_(std::move(values)), seed_(seed) {
  if (values_.size() != rows_ * specs_.size()) {
    fail(ErrorKind::Shape, "design values do not match rows x specs");
  }
}

std::vector<double> DesignMatrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = at(r, c);
  return out;
}

int DesignMatrix::find(const std::string& name) const {
  for (std::size_t c = 0; c < specs_.size(); ++c) {
    if (specs_[c].name == name) return static_cast<int>(c);
  }
  return -1;
}

void DesignMatrix::write_csv(std::ostream& os) const {
  for (std::size_t c = 0; c < cols(); ++c) os << (c ? "," : "") << specs_[c].name;
  os << '\n';
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols(); ++c) os << (c ? "," : "") << format_double(at(r, c));
    os << '\n';
  }
}

DesignMatrix latin_hypercube(std::vector<ParameterSpec> specs, std::size_t n,
                             std::uint64_t seed) {
  if (n == 0) fail(ErrorKind::Config, "latin hypercube needs n >= 1");
  if (specs.empty()) fail(ErrorKind::Config, "latin hypercube needs at least one parameter");
  std::set<std::string> names;
  for (const auto& s : specs) {
    validate(s);
    if (!names.insert(s.name).second) {
      fail(ErrorKind::Config, "duplicate parameter name '" + s.name + "'");
    }
  }

  const std::size_t d = specs.size();
  std::vector<double> values(n * d);
  std::vector<std::size_t> strata(n);
  for (std::size_t c = 0; c < d; ++c) {
    const ParameterSpec& spec = specs[c];
    Rng rng(derive_seed(seed, c));
    std::iota(strata.begin(), strata.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(strata));
    const double width = spec.hi - spec.lo;
    const double top = std::nextafter(spec.hi, spec.lo);
    for (std::size_t r = 0; r < n; ++r) {
      const double u = (static_cast<double>(strata[r]) + rng.uniform()) / static_cast<double>(n);
      double v = std::min(spec.lo + width * u, top);
      if (spec.kind == ParameterKind::DiscreteInteger) {
        v = std::clamp(std::round(v), spec.lo, spec.hi - 1.0);
      }
      values[r * d + c] = v;
    }
  }
  return DesignMatrix(std::move(specs), n, std::move(values), seed);
}

}  // namespace stcp
