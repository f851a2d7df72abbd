#include "rankprompt/prompt.hpp"

#include <cassert>
#include <cmath>

#include "rankprompt/binary_io.hpp"
#include "rankprompt/errors.hpp"
#include "rankprompt/rng.hpp"

namespace rankprompt {
namespace {

constexpr std::string_view kCheckpointMagic = "OPRM1";
constexpr double kInitStddev = 0.02;

}  // namespace

const char* to_string(Interpolation kind) {
  return kind == Interpolation::Linear ? "linear" : "inverse_proportion";
}

Interpolation parse_interpolation(const std::string& text) {
  if (text == "linear") return Interpolation::Linear;
  if (text == "inverse_proportion" || text == "inv_prop") return Interpolation::InverseProportion;
  throw ConfigError("interpolation must be linear or inverse_proportion, got \"" + text + "\"");
}

void PromptConfig::validate() const {
  if (num_ranks < 2) throw ConfigError("num_ranks must be >= 2");
  if (num_base_ranks < 2) throw ConfigError("num_base_ranks must be >= 2");
  if (num_base_ranks > num_ranks) throw ConfigError("num_base_ranks must not exceed num_ranks");
  if (word_dim < 1) throw ConfigError("word_dim must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

Matrix build_interpolation_matrix(std::size_t num_ranks, std::size_t num_base_ranks,
                                  Interpolation kind, double epsilon) {
  PromptConfig cfg;
  cfg.num_ranks = num_ranks;
  cfg.num_base_ranks = num_base_ranks;
  cfg.epsilon = epsilon;
  cfg.validate();

  const double span = static_cast<double>(num_ranks - 1);
  const double spacing = span / static_cast<double>(num_base_ranks - 1);
  Matrix weights(num_ranks, num_base_ranks);
  for (std::size_t j = 0; j < num_ranks; ++j) {
    double total = 0.0;
    for (std::size_t k = 0; k < num_base_ranks; ++k) {
      const double distance = std::abs(static_cast<double>(j) - spacing * static_cast<double>(k));
      double value = 0.0;
      if (kind == Interpolation::Linear) {
        value = 1.0 - distance / span;
        // distance <= C-1 by construction; allow rounding just below zero.
        assert(value > -1e-12);
        value = std::max(value, 0.0);
      } else {
        value = 1.0 / (distance + epsilon);
      }
      weights(j, k) = value;
      total += value;
    }
    for (double& v : weights.row(j)) v /= total;
  }
  return weights;
}

Matrix build_interpolation_matrix(const PromptConfig& cfg) {
  cfg.validate();
  return build_interpolation_matrix(cfg.num_ranks, cfg.num_base_ranks, cfg.interpolation, cfg.epsilon);
}

Var interpolate_rank_embeddings(Tape& tape, const Matrix& weights, Var base_ranks) {
  const Matrix& base = tape.value(base_ranks);
  if (weights.cols() != base.rows()) {
    throw ShapeError("interpolate_rank_embeddings: weights " + weights.shape_string() +
                     " for base ranks " + base.shape_string());
  }
  return tape.matmul(tape.constant(weights), base_ranks);
}

Matrix interpolate_rank_embeddings(const Matrix& weights, const Matrix& base_ranks) {
  Tape tape;
  return tape.value(interpolate_rank_embeddings(tape, weights, tape.constant(base_ranks)));
}

std::vector<Var> assemble_sequences(Tape& tape, Var context, Var ranks) {
  const Matrix& ctx = tape.value(context);
  const Matrix& rk = tape.value(ranks);
  if (ctx.rows() > 0 && ctx.cols() != rk.cols()) {
    throw ShapeError("assemble_sequences: context " + ctx.shape_string() + " vs ranks " +
                     rk.shape_string());
  }
  std::vector<Var> sequences;
  sequences.reserve(rk.rows());
  for (std::size_t j = 0; j < rk.rows(); ++j) {
    Var rank_row = tape.slice_rows(ranks, j, 1);
    if (ctx.rows() == 0) {
      sequences.push_back(rank_row);
    } else {
      const Var parts[] = {context, rank_row};
      sequences.push_back(tape.concat_rows(parts));
    }
  }
  return sequences;
}

std::vector<Matrix> assemble_sequences(const Matrix& context, const Matrix& ranks) {
  Tape tape;
  std::vector<Matrix> out;
  for (Var v : assemble_sequences(tape, tape.constant(context), tape.constant(ranks)))
    out.push_back(tape.value(v));
  return out;
}

const std::vector<std::string>& default_context_template() {
  static const std::vector<std::string> tokens = {"the", "person", "is", "aged"};
  return tokens;
}

PromptParameters init_parameters(const PromptConfig& cfg, const PseudoTextEncoder& encoder,
                                 std::uint64_t seed, std::span<const std::string> context_template) {
  cfg.validate();
  if (encoder.config().word_dim != cfg.word_dim) {
    throw ConfigError("init_parameters: encoder word_dim " + std::to_string(encoder.config().word_dim) +
                      " differs from prompt word_dim " + std::to_string(cfg.word_dim));
  }
  PromptParameters params;
  Engine ctx_rng(derive_seed(seed, "prompt.context"));
  params.context = gaussian_matrix(cfg.num_context, cfg.word_dim, kInitStddev, ctx_rng);
  if (cfg.init_ctx) {
    if (context_template.size() > cfg.num_context) {
      throw ConfigError("context template has " + std::to_string(context_template.size()) +
                        " tokens but num_context is " + std::to_string(cfg.num_context));
    }
    const Matrix rows = encoder.token_rows(context_template);
    const std::size_t offset = cfg.num_context - rows.rows();
    for (std::size_t r = 0; r < rows.rows(); ++r)
      std::copy(rows.row(r).begin(), rows.row(r).end(), params.context.row(offset + r).begin());
  }
  Engine rank_rng(derive_seed(seed, "prompt.ranks"));
  params.base_ranks = gaussian_matrix(cfg.num_base_ranks, cfg.word_dim, kInitStddev, rank_rng);
  return params;
}

void write_prompt_record(ByteWriter& out, std::size_t num_ranks, const PromptParameters& params) {
  const std::size_t word_dim = std::max(params.context.cols(), params.base_ranks.cols());
  out.magic(kCheckpointMagic);
  out.u64(num_ranks);
  out.u64(params.base_ranks.rows());
  out.u64(params.context.rows());
  out.u64(word_dim);
  out.matrix_values(params.context);
  out.matrix_values(params.base_ranks);
}

PromptParameters read_prompt_record(ByteReader& in, std::size_t& num_ranks) {
  in.expect_magic(kCheckpointMagic);
  num_ranks = in.u64();
  const std::uint64_t base = in.u64();
  const std::uint64_t ctx = in.u64();
  const std::uint64_t word_dim = in.u64();
  PromptParameters p;
  p.context = in.matrix_values(ctx, word_dim, "checkpoint context");
  p.base_ranks = in.matrix_values(base, word_dim, "checkpoint base ranks");
  return p;
}

}  // namespace rankprompt
