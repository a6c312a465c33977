#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace stcp {

/// Extents [T, Nx, Ny, Nvar]. Unused axes carry extent 1.
using Dims = std::array<std::size_t, 4>;

[[nodiscard]] std::size_t element_count(const Dims& dims) noexcept;

/// Whether a tensor may hold +Inf cells (only quantile fields and the bands
/// derived from them).
enum class Finiteness { Required, AllowInfinite };

/// Dense rank-4 field of doubles, row-major, immutable after construction.
class FieldTensor {
 public:
  FieldTensor() : FieldTensor(Dims{1, 1, 1, 1}) {}
  explicit FieldTensor(const Dims& dims);
  FieldTensor(const Dims& dims, std::vector<double> data,
              Finiteness finiteness = Finiteness::Required);

  [[nodiscard]] const Dims& dims() const noexcept { return dims_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
  [[nodiscard]] Finiteness finiteness() const noexcept { return finiteness_; }

  [[nodiscard]] std::size_t offset(std::size_t t, std::size_t x, std::size_t y,
                                   std::size_t v) const;
  [[nodiscard]] double at(std::size_t t, std::size_t x, std::size_t y,
                          std::size_t v) const {
    return data_[offset(t, x, y, v)];
  }
  [[nodiscard]] double operator[](std::size_t flat) const { return data_[flat]; }

  /// Releases the payload; leaves this tensor empty-shaped.
  [[nodiscard]] std::vector<double> take_values() &&;

  friend bool operator==(const FieldTensor& a, const FieldTensor& b) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
  Finiteness finiteness_ = Finiteness::Required;
};

/// Validating factory: shape error on length mismatch, data error on NaN/Inf.
[[nodiscard]] FieldTensor make_tensor(const Dims& dims, std::vector<double> data);

struct TensorStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double l2norm = 0.0;
};

[[nodiscard]] TensorStats stats(const FieldTensor& t);

[[nodiscard]] FieldTensor add(const FieldTensor& a, const FieldTensor& b);
[[nodiscard]] FieldTensor sub(const FieldTensor& a, const FieldTensor& b);
[[nodiscard]] FieldTensor abs(const FieldTensor& a);
[[nodiscard]] FieldTensor scale(const FieldTensor& a, double factor);

/// Frames [begin, begin + count) along the leading (time) axis.
[[nodiscard]] FieldTensor slice_frames(const FieldTensor& a, std::size_t begin, std::size_t count);

/// Sum in a fixed pairwise order; the result depends only on the input
/// sequence, never on how work was split.
[[nodiscard]] double pairwise_sum(std::span<const double> values) noexcept;

/// `count` samples sharing one per-sample shape, stored sample-major.
class TensorStack {
 public:
  TensorStack() = default;
  TensorStack(const Dims& dims, std::size_t count);
  TensorStack(const Dims& dims, std::size_t count, std::vector<double> data,
              Finiteness finiteness = Finiteness::Required);

  static TensorStack from_tensors(std::span<const FieldTensor> tensors);

  [[nodiscard]] const Dims& dims() const noexcept { return dims_; }
  [[nodiscard]] std::size_t count() const noexcept { return count_; }
  [[nodiscard]] std::size_t cells() const noexcept { return cells_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
  [[nodiscard]] std::span<double> mutable_values() noexcept { return data_; }
  [[nodiscard]] std::span<const double> sample(std::size_t i) const;
  [[nodiscard]] std::span<double> mutable_sample(std::size_t i);
  [[nodiscard]] double at(std::size_t i, std::size_t cell) const {
    return data_[i * cells_ + cell];
  }
  [[nodiscard]] FieldTensor tensor(std::size_t i) const;

  /// Samples at the given indices, in order.
  [[nodiscard]] TensorStack select(std::span<const std::size_t> indices) const;

  /// Stack stored as one rank-4 tensor [count*T, Nx, Ny, Nvar].
  [[nodiscard]] FieldTensor flatten(Finiteness finiteness = Finiteness::Required) const;
  static TensorStack unflatten(const FieldTensor& flat, std::size_t count);

  friend bool operator==(const TensorStack& a, const TensorStack& b) = default;

 private:
  Dims dims_{1, 1, 1, 1};
  std::size_t count_ = 0;
  std::size_t cells_ = 1;
  std::vector<double> data_;
};

void require_same_shape(const TensorStack& a, const TensorStack& b, const char* what);

// Binary "CPT1" format: magic, u8 rank (4), 4 x u32 LE extents, f64 LE payload.
std::size_t write_tensor(const FieldTensor& t, std::ostream& sink);
[[nodiscard]] FieldTensor read_tensor(std::istream& source);

}  // namespace stcp
