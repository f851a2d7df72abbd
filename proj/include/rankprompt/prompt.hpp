#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rankprompt/encoders.hpp"
#include "rankprompt/matrix.hpp"
#include "rankprompt/tape.hpp"

namespace rankprompt {

enum class Interpolation { Linear, InverseProportion };

const char* to_string(Interpolation kind);
Interpolation parse_interpolation(const std::string& text);

struct PromptConfig {
  std::size_t num_ranks = 20;      // C
  std::size_t num_base_ranks = 3;  // C'
  std::size_t num_context = 4;     // m
  std::size_t word_dim = 32;
  Interpolation interpolation = Interpolation::Linear;
  double epsilon = 1e-5;
  bool tune_rank = true;
  bool tune_ctx = true;
  bool init_ctx = false;

  /// Throws ConfigError when 2 <= C' <= C, m >= 0, word_dim >= 1, epsilon > 0 fails.
  void validate() const;
};

/// C x C' row-stochastic weights. Distances w_{j,k} = |j - k (C-1)/(C'-1)| go
/// through I(w) = 1 - w/(C-1) (linear) or 1/(w + eps) (inverse proportion) and
/// each row is divided by its sum.
Matrix build_interpolation_matrix(std::size_t num_ranks, std::size_t num_base_ranks,
                                  Interpolation kind, double epsilon = 1e-5);
Matrix build_interpolation_matrix(const PromptConfig& cfg);

/// Rank embeddings W' R' (C x word_dim); the weights are a tape constant.
Var interpolate_rank_embeddings(Tape& tape, const Matrix& weights, Var base_ranks);
Matrix interpolate_rank_embeddings(const Matrix& weights, const Matrix& base_ranks);

/// One (m+1) x word_dim sequence per rank: the shared context rows followed by
/// that rank's embedding.
std::vector<Var> assemble_sequences(Tape& tape, Var context, Var ranks);
std::vector<Matrix> assemble_sequences(const Matrix& context, const Matrix& ranks);

/// Template written into the context when init_ctx is set.
const std::vector<std::string>& default_context_template();

struct PromptParameters {
  Matrix context;     // m x word_dim
  Matrix base_ranks;  // C' x word_dim

  friend bool operator==(const PromptParameters&, const PromptParameters&) = default;
};

/// Base ranks ~ N(0, 0.02^2). With init_ctx the last |template| context rows
/// are the encoder's token-table rows for the template (remaining leading rows
/// stay Gaussian); otherwise all context rows are Gaussian.
PromptParameters init_parameters(const PromptConfig& cfg, const PseudoTextEncoder& encoder,
                                 std::uint64_t seed,
                                 std::span<const std::string> context_template = default_context_template());

class ByteWriter;
class ByteReader;

// Checkpoint record: "OPRM1", u64 C, C', m, word_dim, then context rows and
// base-rank rows as f64, row-major, little-endian. Further tensors may follow.
void write_prompt_record(ByteWriter& out, std::size_t num_ranks, const PromptParameters& params);
/// Returns the parameters; `num_ranks` receives C from the header.
PromptParameters read_prompt_record(ByteReader& in, std::size_t& num_ranks);

inline constexpr const char* kContextParam = "prompt.context";
inline constexpr const char* kRankParam = "prompt.ranks";

}  // namespace rankprompt
