#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "rankprompt/binary_io.hpp"
#include "rankprompt/encoders.hpp"
#include "rankprompt/errors.hpp"
#include "rankprompt/gradcheck.hpp"

using namespace rankprompt;
using rptest::random_matrix;

namespace {

double row_norm(const Matrix& m, std::size_t r) {
  double s = 0.0;
  for (double v : m.row(r)) s += v * v;
  return std::sqrt(s);
}

FormatError::Kind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError";
  return FormatError::Kind::Io;
}

}  // namespace

TEST(TextEncoder, PrototypesAreUnitNorm) {
  PseudoTextEncoder enc(TextEncoderConfig{}, 1);
  std::vector<Matrix> seqs;
  for (std::uint64_t s = 0; s < 6; ++s) seqs.push_back(random_matrix(1 + s, 32, s));
  const Matrix p = enc.encode(seqs);
  ASSERT_EQ(p.rows(), 6u);
  ASSERT_EQ(p.cols(), 64u);
  for (std::size_t r = 0; r < 6; ++r) EXPECT_NEAR(row_norm(p, r), 1.0, 1e-9);
}

TEST(TextEncoder, IdenticalSequencesGiveIdenticalPrototypes) {
  PseudoTextEncoder enc(TextEncoderConfig{}, 2);
  const Matrix s = random_matrix(5, 32, 3);
  const std::vector<Matrix> seqs = {s, s};
  const Matrix p = enc.encode(seqs);
  for (std::size_t c = 0; c < p.cols(); ++c) EXPECT_EQ(p(0, c), p(1, c));
}

TEST(TextEncoder, DeterministicAcrossInstances) {
  PseudoTextEncoder a(TextEncoderConfig{}, 9);
  PseudoTextEncoder b(TextEncoderConfig{}, 9);
  EXPECT_EQ(a.mixing(), b.mixing());
  EXPECT_EQ(a.token_table(), b.token_table());
  PseudoTextEncoder c(TextEncoderConfig{}, 10);
  EXPECT_NE(a.projection(), c.projection());
}

TEST(TextEncoder, AllZeroSequenceRejected) {
  PseudoTextEncoder enc(TextEncoderConfig{}, 1);
  const std::vector<Matrix> seqs = {Matrix(3, 32, 0.0)};
  EXPECT_THROW(enc.encode(seqs), NumericError);
}

TEST(TextEncoder, EmptyOrTooLongSequenceRejected) {
  TextEncoderConfig cfg;
  cfg.max_len = 4;
  PseudoTextEncoder enc(cfg, 1);
  const std::vector<Matrix> empty = {Matrix(0, 32)};
  const std::vector<Matrix> long_seq = {random_matrix(5, 32, 1)};
  const std::vector<Matrix> wrong_dim = {random_matrix(2, 31, 1)};
  EXPECT_THROW(enc.encode(empty), ShapeError);
  EXPECT_THROW(enc.encode(long_seq), ShapeError);
  EXPECT_THROW(enc.encode(wrong_dim), ShapeError);
}

TEST(TextEncoder, ScalingInvariantWithUniformPositions) {
  TextEncoderConfig cfg;
  cfg.uniform_positions = true;
  PseudoTextEncoder enc(cfg, 4);
  const Matrix s = random_matrix(3, 32, 5);
  Matrix doubled = s;
  for (double& v : doubled.values()) v *= 2.0;
  const std::vector<Matrix> seqs = {s, doubled};
  const Matrix p = enc.encode(seqs);
  for (std::size_t c = 0; c < p.cols(); ++c) EXPECT_NEAR(p(0, c), p(1, c), 1e-15);
}

TEST(TextEncoder, TokenOrderMattersWithPositionWeights) {
  PseudoTextEncoder enc(TextEncoderConfig{}, 4);
  const Matrix s = random_matrix(2, 32, 6);
  Matrix swapped(2, 32);
  for (std::size_t c = 0; c < 32; ++c) {
    swapped(0, c) = s(1, c);
    swapped(1, c) = s(0, c);
  }
  const std::vector<Matrix> seqs = {s, swapped};
  const Matrix p = enc.encode(seqs);
  EXPECT_GT(std::fabs(p(0, 0) - p(1, 0)) + std::fabs(p(0, 1) - p(1, 1)), 1e-6);
}

TEST(TextEncoder, VocabularyLookup) {
  PseudoTextEncoder enc(TextEncoderConfig{}, 0);
  EXPECT_EQ(enc.token_table().rows(), PseudoTextEncoder::vocabulary().size());
  EXPECT_EQ(PseudoTextEncoder::vocabulary()[enc.token_id("person")], "person");
  EXPECT_EQ(PseudoTextEncoder::vocabulary()[enc.token_id("127")], "127");
  EXPECT_THROW(enc.token_id("zebra"), ConfigError);
}

TEST(TextEncoder, GradientReachesSequencesOnly) {
  PseudoTextEncoder enc(TextEncoderConfig{}, 7);
  const Matrix s0 = random_matrix(3, 32, 8);
  const Matrix s1 = random_matrix(2, 32, 9);
  const Matrix w = random_matrix(2, 64, 10);
  auto eval = [&](const Matrix& p, Gradients* g) {
    Tape t;
    Var v0 = t.parameter("s0", p);
    Var v1 = t.constant(s1);
    const Var seqs[] = {v0, v1};
    Var loss = t.sum(t.mul(enc.encode(t, seqs), t.constant(w)));
    if (g) *g = t.backward(loss);
    return t.value(loss)(0, 0);
  };
  Gradients g;
  eval(s0, &g);
  EXPECT_EQ(g.size(), 1u);
  EXPECT_LE(finite_difference_check([&](const Matrix& p) { return eval(p, nullptr); }, s0, g.at("s0"), 1e-5),
            1e-4);
}

TEST(ImageEncoder, UnitRowsAndDuplicatesMatch) {
  const ImageEncoderParams params = init_image_encoder(6, 10, 12, 1);
  Matrix batch = random_matrix(3, 6, 2);
  for (std::size_t c = 0; c < 6; ++c) batch(1, c) = batch(0, c);
  const ImageEmbeddings e = encode_images(params, batch);
  ASSERT_EQ(e.embeddings.cols(), 12u);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(row_norm(e.embeddings, r), 1.0, 1e-9);
  for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(e.embeddings(0, c), e.embeddings(1, c));
}

TEST(ImageEncoder, ZeroFeatureRowRejectedWithIndex) {
  ImageEncoderParams params = init_image_encoder(2, 3, 4, 1);
  params.w2 = Matrix(3, 4, 0.0);
  params.b2 = Matrix(1, 4, 0.0);
  try {
    encode_images(params, random_matrix(2, 2, 1));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("row 0"), std::string::npos) << e.what();
  }
}

TEST(ImageEncoder, WrongInputDimRejected) {
  const ImageEncoderParams params = init_image_encoder(6, 10, 12, 1);
  EXPECT_THROW(encode_images(params, Matrix(2, 5, 1.0)), ShapeError);
}

TEST(ImageEncoder, SumOfEmbeddingGradientMatchesFiniteDifferences) {
  const ImageEncoderParams base = init_image_encoder(5, 7, 6, 3);
  const Matrix batch = random_matrix(4, 5, 4);
  for (const char* name : {kImageW1, kImageB1, kImageW2, kImageB2}) {
    auto eval = [&](const Matrix& p, Gradients* g) {
      ImageEncoderParams params = base;
      const std::string n = name;
      if (n == kImageW1) params.w1 = p;
      if (n == kImageB1) params.b1 = p;
      if (n == kImageW2) params.w2 = p;
      if (n == kImageB2) params.b2 = p;
      Tape t;
      Var loss = t.sum(encode_images(t, params, t.constant(batch)).embeddings);
      if (g) *g = t.backward(loss);
      return t.value(loss)(0, 0);
    };
    const std::string n = name;
    const Matrix& point = n == kImageW1 ? base.w1 : n == kImageB1 ? base.b1 : n == kImageW2 ? base.w2 : base.b2;
    Gradients g;
    eval(point, &g);
    EXPECT_LE(finite_difference_check([&](const Matrix& p) { return eval(p, nullptr); }, point, g.at(name), 1e-5),
              1e-4)
        << name;
  }
}

class PrototypeFile : public ::testing::Test {
 protected:
  rptest::TempDir dir{"proto"};
  Matrix protos = [] {
    PseudoTextEncoder enc(TextEncoderConfig{}, 1);
    std::vector<Matrix> seqs;
    for (std::uint64_t s = 0; s < 5; ++s) seqs.push_back(random_matrix(3, 32, 20 + s));
    return enc.encode(seqs);
  }();
};

TEST_F(PrototypeFile, RoundTripIsBitwise) {
  export_prototypes(dir.file("p.opro"), protos);
  EXPECT_EQ(import_prototypes(dir.file("p.opro")), protos);
}

TEST_F(PrototypeFile, LayoutMatchesFormat) {
  const auto bytes = serialize_prototypes(protos);
  EXPECT_EQ(bytes.size(), 5u + 8 + 8 + protos.size() * 8 + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 5), "OPRO1");
  EXPECT_EQ(bytes[5], 5);
  EXPECT_EQ(bytes[13], 64);
  const std::span<const unsigned char> payload(bytes.data() + 21, protos.size() * 8);
  std::uint64_t stored = 0;
  for (int i = 7; i >= 0; --i) stored = (stored << 8) | bytes[bytes.size() - 8 + static_cast<std::size_t>(i)];
  EXPECT_EQ(stored, fnv1a64(payload));
}

TEST_F(PrototypeFile, UnnormalizedRowsAreRenormalized) {
  Matrix scaled = protos;
  for (double& v : scaled.row(2)) v *= 3.0;
  const Matrix back = deserialize_prototypes(serialize_prototypes(scaled));
  for (std::size_t r = 0; r < back.rows(); ++r) EXPECT_NEAR(row_norm(back, r), 1.0, 1e-12);
  for (std::size_t c = 0; c < back.cols(); ++c) EXPECT_NEAR(back(2, c), protos(2, c), 1e-15);
}

TEST_F(PrototypeFile, DistinctErrorKinds) {
  auto bytes = serialize_prototypes(protos);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { deserialize_prototypes(bad_magic); }), FormatError::Kind::BadMagic);

  auto tampered = bytes;
  tampered[40] ^= 0x01;
  EXPECT_EQ(kind_of([&] { deserialize_prototypes(tampered); }), FormatError::Kind::ChecksumMismatch);

  // Header says 5 rows but only 4 rows (and no checksum) follow.
  std::vector<unsigned char> short_file(bytes.begin(), bytes.begin() + 21 + 4 * 64 * 8);
  EXPECT_EQ(kind_of([&] { deserialize_prototypes(short_file); }), FormatError::Kind::Truncated);

  Matrix with_nan = protos;
  with_nan(3, 7) = std::numeric_limits<double>::quiet_NaN();
  ByteWriter w;
  w.magic("OPRO1");
  w.u64(5);
  w.u64(64);
  w.matrix_values(with_nan);
  std::vector<unsigned char> payload(w.bytes().begin() + 21, w.bytes().end());
  w.u64(fnv1a64(payload));
  try {
    deserialize_prototypes(w.bytes());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::NonFinite);
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("col 7"), std::string::npos) << e.what();
  }
}

TEST_F(PrototypeFile, MissingFileIsIoError) {
  EXPECT_EQ(kind_of([&] { import_prototypes(dir.file("absent.opro")); }), FormatError::Kind::Io);
}

TEST(Fnv, KnownVectors) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(fnv1a64(std::string_view("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64(std::string_view("foobar")), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}
