#include "stcp/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "stcp/error.hpp"

namespace stcp {
namespace {

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

void check_values(std::span<const double> data, Finiteness finiteness) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = data[i];
    if (std::isnan(v)) {
      fail(ErrorKind::Data, "NaN at flat index " + std::to_string(i));
    }
    if (std::isinf(v) && finiteness == Finiteness::Required) {
      fail(ErrorKind::Data, "non-finite value at flat index " + std::to_string(i));
    }
  }
}

std::string dims_string(const Dims& d) {
  return "[" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," +
         std::to_string(d[2]) + "," + std::to_string(d[3]) + "]";
}

template <typename Op>
FieldTensor zip(const FieldTensor& a, const FieldTensor& b, Op op) {
  if (a.dims() != b.dims()) {
    fail(ErrorKind::Shape, "dims mismatch " + dims_string(a.dims()) + " vs " +
                               dims_string(b.dims()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(a[i], b[i]);
  return FieldTensor(a.dims(), std::move(out));
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr char kMagic[4] = {'C', 'P', 'T', '1'};

}  // namespace

std::size_t element_count(const Dims& dims) noexcept {
  return dims[0] * dims[1] * dims[2] * dims[3];
}

FieldTensor::FieldTensor(const Dims& dims) : dims_(dims), data_(element_count(dims), 0.0) {}

FieldTensor::FieldTensor(const Dims& dims, std::vector<double> data, Finiteness finiteness)
    : dims_(dims), data_(std::move(data)), finiteness_(finiteness) {
  if (data_.size() != element_count(dims_)) {
    fail(ErrorKind::Shape, "data length " + std::to_string(data_.size()) +
                               " does not match dims " + dims_string(dims_));
  }
  check_values(data_, finiteness_);
}

std::size_t FieldTensor::offset(std::size_t t, std::size_t x, std::size_t y,
                                std::size_t v) const {
  if (t >= dims_[0] || x >= dims_[1] || y >= dims_[2] || v >= dims_[3]) {
    fail(ErrorKind::Shape, "index out of range for dims " + dims_string(dims_));
  }
  return ((t * dims_[1] + x) * dims_[2] + y) * dims_[3] + v;
}

std::vector<double> FieldTensor::take_values() && {
  dims_ = {0, 0, 0, 0};
  return std::move(data_);
}

FieldTensor make_tensor(const Dims& dims, std::vector<double> data) {
  return FieldTensor(dims, std::move(data), Finiteness::Required);
}

double pairwise_sum(std::span<const double> values) noexcept {
  constexpr std::size_t kLeaf = 32;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

TensorStats stats(const FieldTensor& t) {
  TensorStats s;
  const auto v = t.values();
  if (v.empty()) return s;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  s.min = *lo;
  s.max = *hi;
  s.mean = std::clamp(pairwise_sum(v) / static_cast<double>(v.size()), s.min, s.max);
  std::vector<double> sq(v.size());
  std::transform(v.begin(), v.end(), sq.begin(), [](double x) { return x * x; });
  s.l2norm = std::sqrt(pairwise_sum(sq));
  return s;
}

FieldTensor add(const FieldTensor& a, const FieldTensor& b) {
  return zip(a, b, [](double x, double y) { return x + y; });
}

FieldTensor sub(const FieldTensor& a, const FieldTensor& b) {
  return zip(a, b, [](double x, double y) { return x - y; });
}

FieldTensor abs(const FieldTensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = std::fabs(v);
  return FieldTensor(a.dims(), std::move(out), a.finiteness());
}

FieldTensor scale(const FieldTensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return FieldTensor(a.dims(), std::move(out), a.finiteness());
}

FieldTensor slice_frames(const FieldTensor& a, std::size_t begin, std::size_t count) {
  const Dims& d = a.dims();
  if (begin + count > d[0]) {
    fail(ErrorKind::Shape, "frame slice [" + std::to_string(begin) + ", " +
                               std::to_string(begin + count) + ") exceeds " +
                               std::to_string(d[0]) + " frames");
  }
  const std::size_t frame = d[1] * d[2] * d[3];
  const auto v = a.values();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * frame),
                          v.begin() + static_cast<std::ptrdiff_t>((begin + count) * frame));
  return FieldTensor(Dims{count, d[1], d[2], d[3]}, std::move(out), a.finiteness());
}

// --- TensorStack ------------------------------------------------------------

TensorStack::TensorStack(const Dims& dims, std::size_t count)
    : dims_(dims), count_(count), cells_(element_count(dims)), data_(count * cells_, 0.0) {}

TensorStack::TensorStack(const Dims& dims, std::size_t count, std::vector<double> data,
                         Finiteness finiteness)
    : dims_(dims), count_(count), cells_(element_count(dims)), data_(std::move(data)) {
  if (data_.size() != count_ * cells_) {
    fail(ErrorKind::Shape, "stack of " + std::to_string(count_) + " x " + dims_string(dims_) +
                               " cannot hold " + std::to_string(data_.size()) + " values");
  }
  check_values(data_, finiteness);
}

TensorStack TensorStack::from_tensors(std::span<const FieldTensor> tensors) {
  if (tensors.empty()) return {};
  const Dims dims = tensors.front().dims();
  TensorStack out(dims, tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].dims() != dims) {
      fail(ErrorKind::Shape, "stack member " + std::to_string(i) + " has dims " +
                                 dims_string(tensors[i].dims()) + ", expected " +
                                 dims_string(dims));
    }
    std::copy(tensors[i].values().begin(), tensors[i].values().end(),
              out.mutable_sample(i).begin());
  }
  return out;
}

std::span<const double> TensorStack::sample(std::size_t i) const {
  if (i >= count_) fail(ErrorKind::Shape, "sample index out of range");
  return std::span<const double>(data_).subspan(i * cells_, cells_);
}

std::span<double> TensorStack::mutable_sample(std::size_t i) {
  if (i >= count_) fail(ErrorKind::Shape, "sample index out of range");
  return std::span<double>(data_).subspan(i * cells_, cells_);
}

FieldTensor TensorStack::tensor(std::size_t i) const {
  const auto s = sample(i);
  const bool any_inf = std::any_of(s.begin(), s.end(), [](double v) { return std::isinf(v); });
  return FieldTensor(dims_, std::vector<double>(s.begin(), s.end()),
                     any_inf ? Finiteness::AllowInfinite : Finiteness::Required);
}

TensorStack TensorStack::select(std::span<const std::size_t> indices) const {
  TensorStack out(dims_, indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto src = sample(indices[j]);
    std::copy(src.begin(), src.end(), out.mutable_sample(j).begin());
  }
  return out;
}

FieldTensor TensorStack::flatten(Finiteness finiteness) const {
  return FieldTensor(Dims{count_ * dims_[0], dims_[1], dims_[2], dims_[3]}, data_, finiteness);
}

TensorStack TensorStack::unflatten(const FieldTensor& flat, std::size_t count) {
  const Dims& d = flat.dims();
  if (count == 0 || d[0] % count != 0) {
    fail(ErrorKind::Shape, "cannot split leading extent " + std::to_string(d[0]) + " into " +
                               std::to_string(count) + " samples");
  }
  std::vector<double> data(flat.values().begin(), flat.values().end());
  return TensorStack(Dims{d[0] / count, d[1], d[2], d[3]}, count, std::move(data),
                     flat.finiteness());
}

void require_same_shape(const TensorStack& a, const TensorStack& b, const char* what) {
  if (a.dims() != b.dims() || a.count() != b.count()) {
    fail(ErrorKind::Shape, std::string(what) + ": stacks differ (" + std::to_string(a.count()) +
                               " x " + dims_string(a.dims()) + " vs " +
                               std::to_string(b.count()) + " x " + dims_string(b.dims()) + ")");
  }
}

// --- CPT1 -------------------------------------------------------------------

std::size_t write_tensor(const FieldTensor& t, std::ostream& sink) {
  for (std::size_t e : t.dims()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) {
      fail(ErrorKind::Format, "extent does not fit in 32 bits");
    }
  }
  sink.write(kMagic, 4);
  sink.put(static_cast<char>(4));
  for (std::size_t e : t.dims()) put_u32(sink, static_cast<std::uint32_t>(e));
  std::vector<unsigned char> payload(t.size() * 8);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(t[i]);
    for (int b = 0; b < 8; ++b) payload[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  sink.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
  if (!sink) fail(ErrorKind::Io, "failed writing tensor");
  return 4 + 1 + 16 + payload.size();
}

FieldTensor read_tensor(std::istream& source) {
  unsigned char header[21];
  source.read(reinterpret_cast<char*>(header), sizeof header);
  if (source.gcount() != static_cast<std::streamsize>(sizeof header)) {
    fail(ErrorKind::Format, "truncated CPT1 header");
  }
  if (std::memcmp(header, kMagic, 4) != 0) fail(ErrorKind::Format, "bad magic, expected CPT1");
  if (header[4] != 4) fail(ErrorKind::Format, "rank " + std::to_string(header[4]) + " != 4");
  Dims dims{};
  for (int i = 0; i < 4; ++i) dims[i] = get_u32(header + 5 + 4 * i);
  const std::size_t n = element_count(dims);
  std::vector<unsigned char> payload(n * 8);
  source.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (source.gcount() != static_cast<std::streamsize>(payload.size())) {
    fail(ErrorKind::Format, "truncated CPT1 payload: expected " + std::to_string(n) + " values");
  }
  std::vector<double> data(n);
  bool any_inf = false;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(payload[i * 8 + b]) << (8 * b);
    data[i] = std::bit_cast<double>(bits);
    any_inf = any_inf || std::isinf(data[i]);
  }
  return FieldTensor(dims, std::move(data),
                     any_inf ? Finiteness::AllowInfinite : Finiteness::Required);
}

}  // namespace stcp
