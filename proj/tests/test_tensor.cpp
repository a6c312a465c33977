#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "stcp/error.hpp"
#include "stcp/random.hpp"
#include "stcp/tensor.hpp"
#include "stcp/tensor_io.hpp"

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

TEST(Tensor, ScalarTensor) {
  const FieldTensor t = make_tensor({1, 1, 1, 1}, {0.0});
  EXPECT_EQ(t.at(0, 0, 0, 0), 0.0);
}

TEST(Tensor, LengthMismatchIsShapeError) {
  EXPECT_EQ(kind_of([] { (void)make_tensor({2, 3, 1, 1}, {1, 2, 3, 4, 5}); }), ErrorKind::Shape);
}

TEST(Tensor, NonFiniteIsDataError) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(kind_of([&] { (void)make_tensor({1, 2, 1, 1}, {1.0, inf}); }), ErrorKind::Data);
  EXPECT_EQ(kind_of([] { (void)make_tensor({1, 1, 1, 1}, {std::nan("")}); }), ErrorKind::Data);
  // Quantile fields may hold +Inf but never NaN.
  EXPECT_NO_THROW(FieldTensor({1, 2, 1, 1}, {1.0, inf}, Finiteness::AllowInfinite));
  EXPECT_EQ(kind_of([] {
              (void)FieldTensor({1, 1, 1, 1}, {std::nan("")}, Finiteness::AllowInfinite);
            }),
            ErrorKind::Data);
}

TEST(Tensor, RowMajorIndexing) {
  const FieldTensor t = make_tensor({2, 2, 1, 1}, {1, 2, 3, 4});
  EXPECT_EQ(t.at(1, 0, 0, 0), 3.0);
}

TEST(Tensor, OffsetIsBijection) {
  const Dims d{2, 3, 4, 5};
  const FieldTensor t(d);
  std::vector<int> hits(t.size(), 0);
  for (std::size_t a = 0; a < d[0]; ++a)
    for (std::size_t b = 0; b < d[1]; ++b)
      for (std::size_t c = 0; c < d[2]; ++c)
        for (std::size_t v = 0; v < d[3]; ++v) {
          const std::size_t off = t.offset(a, b, c, v);
          EXPECT_EQ(off, ((a * d[1] + b) * d[2] + c) * d[3] + v);
          ++hits[off];
        }
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_EQ(kind_of([&] { (void)t.offset(2, 0, 0, 0); }), ErrorKind::Shape);
}

TEST(Tensor, ElementwiseOpsMatchFlatOps) {
  Rng rng(7);
  std::vector<double> a(24), b(24);
  for (auto& v : a) v = rng.uniform(-3, 3);
  for (auto& v : b) v = rng.uniform(-3, 3);
  const Dims d{2, 3, 4, 1};
  const FieldTensor ta = make_tensor(d, a);
  const FieldTensor tb = make_tensor(d, b);
  const FieldTensor s = add(ta, tb), df = sub(ta, tb), ab = abs(ta), sc = scale(ta, -2.5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(s[i], a[i] + b[i]);
    EXPECT_EQ(df[i], a[i] - b[i]);
    EXPECT_EQ(ab[i], std::fabs(a[i]));
    EXPECT_EQ(sc[i], -2.5 * a[i]);
  }
  EXPECT_EQ(kind_of([&] { (void)add(ta, make_tensor({1, 1, 1, 1}, {0.0})); }), ErrorKind::Shape);
}

TEST(Tensor, StatsOrdering) {
  const FieldTensor t = make_tensor({1, 4, 1, 1}, {3, -1, 2, 0});
  const TensorStats s = stats(t);
  EXPECT_DOUBLE_EQ(s.mean, 1.0);
  EXPECT_EQ(s.min, -1.0);
  EXPECT_EQ(s.max, 3.0);
  EXPECT_DOUBLE_EQ(s.l2norm, std::sqrt(14.0));
}

TEST(Tensor, PairwiseSumIndependentOfSplit) {
  std::vector<double> v(1000);
  Rng rng(3);
  for (auto& x : v) x = rng.uniform(-1, 1);
  const double once = pairwise_sum(v);
  EXPECT_EQ(once, pairwise_sum(v));
  double naive = 0.0;
  for (double x : v) naive += x;
  EXPECT_NEAR(once, naive, 1e-12);
  EXPECT_EQ(pairwise_sum(std::span<const double>{}), 0.0);
}

TEST(TensorIo, NegativeZeroRoundTrip) {
  std::stringstream ss;
  write_tensor(make_tensor({1, 1, 1, 1}, {-0.0}), ss);
  const FieldTensor back = read_tensor(ss);
  EXPECT_TRUE(std::signbit(back[0]));
}

TEST(TensorIo, BadMagicIsFormatError) {
  std::stringstream ss("XXXX\x04");
  EXPECT_EQ(kind_of([&] { (void)read_tensor(ss); }), ErrorKind::Format);
}

TEST(TensorIo, TruncatedAndBadRank) {
  std::stringstream ss;
  write_tensor(make_tensor({1, 3, 1, 1}, {1, 2, 3}), ss);
  std::string bytes = ss.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 4));
  EXPECT_EQ(kind_of([&] { (void)read_tensor(cut); }), ErrorKind::Format);
  bytes[4] = 3;
  std::stringstream rank3(bytes);
  EXPECT_EQ(kind_of([&] { (void)read_tensor(rank3); }), ErrorKind::Format);
}

TEST(TensorIo, LayoutIsLittleEndian) {
  std::stringstream ss;
  const std::size_t n = write_tensor(make_tensor({1, 2, 1, 1}, {1.0, -2.0}), ss);
  const std::string b = ss.str();
  ASSERT_EQ(b.size(), 4u + 1u + 16u + 16u);
  EXPECT_EQ(n, b.size());
  EXPECT_EQ(b.substr(0, 4), "CPT1");
  EXPECT_EQ(b[4], 4);
  EXPECT_EQ(static_cast<unsigned char>(b[9]), 2u);  // Nx, low byte first
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(b[21 + i]);
  EXPECT_EQ(std::bit_cast<double>(bits), 1.0);
}

TEST(TensorIo, RandomPayloadBitExact) {
  Rng rng(901);
  std::vector<double> v(901);
  for (auto& x : v) x = rng.uniform(-1e6, 1e6);
  const FieldTensor t = make_tensor({1, 901, 1, 1}, v);
  std::stringstream ss;
  write_tensor(t, ss);
  const FieldTensor back = read_tensor(ss);
  ASSERT_EQ(back.dims(), t.dims());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(v[i]));
  }
}

TEST(TensorIo, InfinityRoundTripsAsQuantileField) {
  const double inf = std::numeric_limits<double>::infinity();
  std::stringstream ss;
  write_tensor(FieldTensor({1, 2, 1, 1}, {0.5, inf}, Finiteness::AllowInfinite), ss);
  const FieldTensor back = read_tensor(ss);
  EXPECT_EQ(back.finiteness(), Finiteness::AllowInfinite);
  EXPECT_EQ(back[1], inf);
}

TEST(TensorIo, FileWithSidecar) {
  const auto dir = std::filesystem::temp_directory_path() / "stcp_test_tensor_io";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const FieldTensor t = make_tensor({2, 2, 1, 1}, {1, 2, 3, 4});
  TensorSidecar sc;
  sc.provenance = {{"seed", 11}, {"config_hash", "abc"}};
  write_tensor_file(dir / "a.cpt", t, sc);
  EXPECT_EQ(read_tensor_file(dir / "a.cpt"), t);
  const TensorSidecar back = read_sidecar(dir / "a.cpt");
  EXPECT_EQ(back.axes[0], "t");
  EXPECT_EQ(back.provenance.at("seed"), 11);
  std::filesystem::remove_all(dir);
}

TEST(TensorStack, FlattenRoundTripAndSelect) {
  std::vector<FieldTensor> ts;
  for (int i = 0; i < 3; ++i) ts.push_back(make_tensor({2, 1, 1, 1}, {1.0 * i, 10.0 * i}));
  const TensorStack s = TensorStack::from_tensors(ts);
  EXPECT_EQ(s.count(), 3u);
  EXPECT_EQ(s.cells(), 2u);
  EXPECT_EQ(s.at(2, 1), 20.0);
  EXPECT_EQ(TensorStack::unflatten(s.flatten(), 3), s);
  const std::vector<std::size_t> idx{2, 0};
  const TensorStack sel = s.select(idx);
  EXPECT_EQ(sel.tensor(0), ts[2]);
  EXPECT_EQ(sel.tensor(1), ts[0]);
}

TEST(TensorStack, SliceFrames) {
  const FieldTensor t = make_tensor({3, 2, 1, 1}, {1, 2, 3, 4, 5, 6});
  const FieldTensor s = slice_frames(t, 1, 2);
  EXPECT_EQ(s.dims(), (Dims{2, 2, 1, 1}));
  EXPECT_EQ(s[0], 3.0);
  EXPECT_EQ(kind_of([&] { (void)slice_frames(t, 2, 2); }), ErrorKind::Shape);
}

}  // namespace
}  // namespace stcp
