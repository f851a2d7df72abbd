#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankprompt/matrix.hpp"
#include "rankprompt/tape.hpp"

namespace rankprompt {

struct TextEncoderConfig {
  std::size_t word_dim = 32;
  std::size_t latent_dim = 64;
  std::size_t max_len = 16;
  /// All position weights equal to 1 (pooling becomes a plain mean).
  bool uniform_positions = false;
};

/// Frozen stand-in for a pretrained text tower: position-weighted mean pooling
/// of the token rows, a fixed mixing matrix, a fixed projection into the latent
/// space, then l2 normalization. Also owns a fixed token table for a small
/// vocabulary of words and numerals.
class PseudoTextEncoder {
 public:
  PseudoTextEncoder(const TextEncoderConfig& cfg, std::uint64_t seed);

  const TextEncoderConfig& config() const noexcept { return cfg_; }
  const Matrix& mixing() const noexcept { return mixing_; }
  const Matrix& positions() const noexcept { return positions_; }
  const Matrix& projection() const noexcept { return projection_; }
  const Matrix& token_table() const noexcept { return token_table_; }

  /// Words first, then the numerals "0".."127".
  static const std::vector<std::string>& vocabulary();
  std::size_t token_id(std::string_view token) const;
  /// One token-table row per token.
  Matrix token_rows(std::span<const std::string> tokens) const;

  /// Encodes each (len x word_dim) sequence into one unit-norm row of the
  /// returned (count x latent_dim) node. Differentiable w.r.t. the sequences;
  /// the encoder's own weights enter the tape as constants.
  Var encode(Tape& tape, std::span<const Var> sequences) const;
  Matrix encode(std::span<const Matrix> sequences) const;

 private:
  TextEncoderConfig cfg_;
  Matrix mixing_;
  Matrix positions_;  // 1 x max_len
  Matrix projection_;
  Matrix token_table_;
};

/// Two affine layers with tanh between: input -> hidden -> latent.
struct ImageEncoderParams {
  Matrix w1;  // input x hidden
  Matrix b1;  // 1 x hidden
  Matrix w2;  // hidden x latent
  Matrix b2;  // 1 x latent
};

ImageEncoderParams init_image_encoder(std::size_t input_dim, std::size_t hidden_dim,
                                      std::size_t latent_dim, std::uint64_t seed);

inline constexpr const char* kImageW1 = "image.w1";
inline constexpr const char* kImageB1 = "image.b1";
inline constexpr const char* kImageW2 = "image.w2";
inline constexpr const char* kImageB2 = "image.b2";

struct ImageEncoding {
  Var features;    // pre-normalization outputs f_i
  Var embeddings;  // unit-norm rows I_i
};

/// Registers the encoder weights as parameters named image.{w1,b1,w2,b2}.
ImageEncoding encode_images(Tape& tape, const ImageEncoderParams& params, Var batch,
                            bool trainable = true);

struct ImageEmbeddings {
  Matrix features;
  Matrix embeddings;
};

ImageEmbeddings encode_images(const ImageEncoderParams& params, const Matrix& batch);

// Prototype file: "OPRO1", u64 C, u64 latent_dim, C*latent_dim f64 row-major,
// u64 FNV-1a over the f64 payload bytes. All little-endian.
std::vector<unsigned char> serialize_prototypes(const Matrix& prototypes);
Matrix deserialize_prototypes(std::span<const unsigned char> bytes);
void export_prototypes(const std::string& path, const Matrix& prototypes);
/// Rows whose norm deviates from 1 by more than 1e-12 are re-normalized.
Matrix import_prototypes(const std::string& path);

}  // namespace rankprompt
