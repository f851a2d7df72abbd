#include "rankprompt/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "rankprompt/binary_io.hpp"
#include "rankprompt/errors.hpp"
#include "rankprompt/rng.hpp"

namespace rankprompt {
namespace {

constexpr std::string_view kPrototypeMagic = "OPRO1";
constexpr std::size_t kMaxNumeral = 128;

std::vector<std::string> build_vocabulary() {
  std::vector<std::string> words = {"<pad>", "a",      "photo",  "of",     "the",     "person",
                                    "is",    "aged",   "age",    "years",  "old",     "estimation",
                                    "rank",  "level",  "score",  "image",  "quality", "aesthetics",
                                    "taken", "in",     "decade", "year",   "face",    "grade"};
  for (std::size_t i = 0; i < kMaxNumeral; ++i) words.push_back(std::to_string(i));
  return words;
}

}  // namespace

PseudoTextEncoder::PseudoTextEncoder(const TextEncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.word_dim == 0 || cfg.latent_dim == 0 || cfg.max_len == 0) {
    throw ConfigError("text encoder: word_dim, latent_dim and max_len must be positive");
  }
  Engine rng(derive_seed(seed, "text-encoder"));
  const double wd = static_cast<double>(cfg.word_dim);
  mixing_ = Matrix::identity(cfg.word_dim);
  Matrix noise = gaussian_matrix(cfg.word_dim, cfg.word_dim, 0.5 / std::sqrt(wd), rng);
  for (std::size_t i = 0; i < mixing_.size(); ++i) mixing_.values()[i] += noise.values()[i];

  positions_ = Matrix(1, cfg.max_len, 1.0);
  std::uniform_real_distribution<double> pos(0.5, 1.5);
  for (double& w : positions_.values()) {
    const double draw = pos(rng);
    if (!cfg.uniform_positions) w = draw;
  }
  projection_ = gaussian_matrix(cfg.word_dim, cfg.latent_dim, 1.0 / std::sqrt(wd), rng);
  token_table_ = gaussian_matrix(vocabulary().size(), cfg.word_dim, 0.02, rng);
}

const std::vector<std::string>& PseudoTextEncoder::vocabulary() {
  static const std::vector<std::string> vocab = build_vocabulary();
  return vocab;
}

std::size_t PseudoTextEncoder::token_id(std::string_view token) const {
  const auto& vocab = vocabulary();
  auto it = std::find(vocab.begin(), vocab.end(), token);
  if (it == vocab.end()) throw ConfigError("unknown token \"" + std::string(token) + "\"");
  return static_cast<std::size_t>(it - vocab.begin());
}

Matrix PseudoTextEncoder::token_rows(std::span<const std::string> tokens) const {
  Matrix out(tokens.size(), cfg_.word_dim);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto src = token_table_.row(token_id(tokens[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Var PseudoTextEncoder::encode(Tape& tape, std::span<const Var> sequences) const {
  if (sequences.empty()) throw ShapeError("encode_text: no sequences");
  std::vector<Var> pooled;
  pooled.reserve(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const Matrix& seq = tape.value(sequences[s]);
    if (seq.rows() == 0) throw ShapeError("encode_text: sequence " + std::to_string(s) + " is empty");
    if (seq.rows() > cfg_.max_len) {
      throw ShapeError("encode_text: sequence " + std::to_string(s) + " has " +
                       std::to_string(seq.rows()) + " tokens, max_len is " +
                       std::to_string(cfg_.max_len));
    }
    if (seq.cols() != cfg_.word_dim) {
      throw ShapeError("encode_text: sequence " + seq.shape_string() + " for word_dim " +
                       std::to_string(cfg_.word_dim));
    }
    std::vector<double> weights(positions_.values().begin(),
                                positions_.values().begin() + static_cast<std::ptrdiff_t>(seq.rows()));
    double total = 0.0;
    for (double w : weights) total += w;
    for (double& w : weights) w /= total;
    pooled.push_back(tape.weighted_sum(sequences[s], std::move(weights)));
  }
  Var stacked = tape.concat_rows(pooled);
  Var mixed = tape.matmul(stacked, tape.constant(mixing_));
  Var projected = tape.matmul(mixed, tape.constant(projection_));
  return tape.l2_normalize_rows(projected);
}

Matrix PseudoTextEncoder::encode(std::span<const Matrix> sequences) const {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(sequences.size());
  for (const Matrix& s : sequences) vars.push_back(tape.constant(s));
  return tape.value(encode(tape, vars));
}

ImageEncoderParams init_image_encoder(std::size_t input_dim, std::size_t hidden_dim,
                                      std::size_t latent_dim, std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0 || latent_dim == 0) {
    throw ConfigError("image encoder: dimensions must be positive");
  }
  Engine rng(derive_seed(seed, "image-encoder"));
  ImageEncoderParams p;
  p.w1 = gaussian_matrix(input_dim, hidden_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
  p.b1 = Matrix(1, hidden_dim);
  p.w2 = gaussian_matrix(hidden_dim, latent_dim, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
  p.b2 = Matrix(1, latent_dim);
  return p;
}

ImageEncoding encode_images(Tape& tape, const ImageEncoderParams& params, Var batch, bool trainable) {
  const Matrix& x = tape.value(batch);
  if (x.cols() != params.w1.rows()) {
    throw ShapeError("encode_images: batch " + x.shape_string() + " for input_dim " +
                     std::to_string(params.w1.rows()));
  }
  Var w1 = tape.parameter(kImageW1, params.w1, trainable);
  Var b1 = tape.parameter(kImageB1, params.b1, trainable);
  Var w2 = tape.parameter(kImageW2, params.w2, trainable);
  Var b2 = tape.parameter(kImageB2, params.b2, trainable);
  Var hidden = tape.tanh(tape.add_row(tape.matmul(batch, w1), b1));
  Var features = tape.add_row(tape.matmul(hidden, w2), b2);
  try {
    return {features, tape.l2_normalize_rows(features)};
  } catch (const NumericError& e) {
    throw NumericError(std::string("encode_images: ") + e.what());
  }
}

ImageEmbeddings encode_images(const ImageEncoderParams& params, const Matrix& batch) {
  Tape tape;
  ImageEncoding enc = encode_images(tape, params, tape.constant(batch), false);
  return {tape.value(enc.features), tape.value(enc.embeddings)};
}

std::vector<unsigned char> serialize_prototypes(const Matrix& prototypes) {
  ByteWriter w;
  w.magic(kPrototypeMagic);
  w.u64(prototypes.rows());
  w.u64(prototypes.cols());
  const std::size_t payload_begin = w.size();
  w.matrix_values(prototypes);
  const auto& bytes = w.bytes();
  w.u64(fnv1a64(std::span(bytes).subspan(payload_begin)));
  return w.bytes();
}

Matrix deserialize_prototypes(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kPrototypeMagic);
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  const std::size_t payload_begin = r.position();
  Matrix m = r.matrix_values(rows, cols, "prototype file");
  const std::size_t payload_end = r.position();
  const std::uint64_t stored = r.u64();
  const std::uint64_t actual = fnv1a64(bytes.subspan(payload_begin, payload_end - payload_begin));
  if (stored != actual) {
    throw FormatError(FormatError::Kind::ChecksumMismatch,
                      "prototype file: checksum " + hex64(stored) + " does not match payload " +
                          hex64(actual));
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v * v;
    const double norm = std::sqrt(s);
    if (norm == 0.0) {
      throw FormatError(FormatError::Kind::NonFinite,
                        "prototype file: row " + std::to_string(i) + " has zero norm");
    }
    if (std::abs(norm - 1.0) > 1e-12) {
      for (double& v : m.row(i)) v /= norm;
    }
  }
  return m;
}

void export_prototypes(const std::string& path, const Matrix& prototypes) {
  write_file_bytes(path, serialize_prototypes(prototypes));
}

Matrix import_prototypes(const std::string& path) { return deserialize_prototypes(read_file_bytes(path)); }

}  // namespace rankprompt
