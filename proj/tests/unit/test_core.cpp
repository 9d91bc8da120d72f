// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include "ctmmcp/core/canonical_json.hpp"
#include "ctmmcp/core/digest.hpp"
#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/core/tensor.hpp"
#include "ctmmcp/core/weight_file.hpp"

namespace ctmmcp {
namespace {

// Reference outputs of the public splitmix64 generator seeded with 0.
TEST(SplitMix64, MatchesReferenceStream) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.next(), 0x06c45d188009454fULL);
}

TEST(SplitMix64, UniformStaysInHalfOpenInterval) {
  SplitMix64 rng(99);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.index(7), 7u);
  }
}

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("enc.vision"), 0xde9415540c585bebULL);
  EXPECT_EQ(derive_seed(42, "enc.vision"), 0xd8fbf44fd350263dULL);
}

TEST(DeriveSeed, IndexStreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(7, i));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Matrix, UniformInitWithinBoundAndDeterministic) {
  const Matrix a = Matrix::uniform(16, 64, 5);
  const Matrix b = Matrix::uniform(16, 64, 5);
  EXPECT_EQ(a, b);
  for (float v : a.data()) {
    ASSERT_LE(std::abs(v), 1.0f / 8.0f);
  }
  EXPECT_NE(a, Matrix::uniform(16, 64, 6));
}

TEST(Tensor, BoundedTanhStaysInsideOpenInterval) {
  EXPECT_EQ(bounded_tanh(0.0), 0.0f);
  EXPECT_LT(bounded_tanh(100.0), 1.0f);
  EXPECT_GT(bounded_tanh(-100.0), -1.0f);
  EXPECT_EQ(bounded_tanh(100.0), 1.0f - 0x1p-24f);
  EXPECT_NEAR(bounded_tanh(0.5), 0.46211715726, 1e-7);
}

TEST(Tensor, MatvecRejectsWrongWidth) {
  const Matrix w(3, 4);
  const Vector x(5, 1.0f);
  EXPECT_THROW(matvec(w, x, "test"), Error);
  try {
    matvec(w, x, "test");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(WeightFile, RoundTripIsExact) {
  TensorMap t;
  t["a"] = Matrix::uniform(3, 5, 1);
  t["b.long.name"] = Matrix(1, 2, std::vector<float>{-0.0f, 1e-30f});
  std::stringstream buf;
  write_weights(buf, t);
  EXPECT_EQ(buf.str().substr(0, 8), "CTMW0001");
  EXPECT_EQ(read_weights(buf), t);
}

TEST(WeightFile, LayoutIsLittleEndianRowMajor) {
  TensorMap t;
  t["w"] = Matrix(1, 2, std::vector<float>{1.0f, -2.0f});
  std::stringstream buf;
  write_weights(buf, t);
  const std::string expected("CTMW0001\x01\x00\x00\x00w\x01\x00\x00\x00\x02\x00\x00\x00\x00\x00\x80\x3f\x00\x00\x00\xc0",
                             8 + 4 + 1 + 4 + 4 + 8);
  EXPECT_EQ(buf.str(), expected);
}

TEST(WeightFile, RejectsBadMagicTruncationAndNonFinite) {
  TensorMap t;
  t["w"] = Matrix(2, 2, 0.5f);
  std::stringstream good;
  write_weights(good, t);
  const std::string bytes = good.str();

  auto expect_malformed = [](const std::string& b) {
    std::stringstream in(b);
    try {
      read_weights(in);
      ADD_FAILURE() << "accepted malformed weights";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::MalformedWeights);
    }
  };
  expect_malformed("CTMW0002" + bytes.substr(8));
  expect_malformed(bytes.substr(0, bytes.size() - 1));
  expect_malformed(bytes + "\x01");

  std::string nan_bytes = bytes;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan_bytes.data() + nan_bytes.size() - 4, &nan, 4);
  expect_malformed(nan_bytes);
}

TEST(Digest, Sha256KnownAnswer) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const unsigned char*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Digest, SyncDigestHashesLittleEndianFloats) {
  const Vector s{0.5f, -1.25f, 3.0f, 0.0f};
  EXPECT_EQ(sync_digest(s), "55ca0245eae79ccee566a5e011162536ee6dab222f4625dab0ab7f3cdf3128b0");
  EXPECT_TRUE(is_hex_digest(sync_digest(s)));
  EXPECT_FALSE(is_hex_digest("55CA0245EAE79CCEE566A5E011162536EE6DAB222F4625DAB0AB7F3CDF3128B0"));
  EXPECT_FALSE(is_hex_digest("abc"));
}

TEST(CanonicalJson, SortsKeysAndUsesShortestReals) {
  Json j = {{"zeta", 1}, {"alpha", 0.1}, {"mid", {{"b", 1e-05}, {"a", -0.0}}}, {"u", "café"}};
  EXPECT_EQ(canonical_dump(j), "{\"alpha\":0.1,\"mid\":{\"a\":-0.0,\"b\":1e-05},\"u\":\"café\",\"zeta\":1}");
}

TEST(CanonicalJson, RejectsNonFinite) {
  Json j = {{"x", {1.0, std::numeric_limits<double>::infinity()}}};
  try {
    canonical_dump(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteMetadata);
  }
}

TEST(Error, MessageCarriesKindPathAndLine) {
  const Error e(ErrorKind::SchemaViolation, "missing field", "goal", 3);
  EXPECT_EQ(std::string(e.what()), "SchemaViolation (line 3) at 'goal': missing field");
  EXPECT_EQ(e.message(), "missing field");
}

}  // namespace
}  // namespace ctmmcp
