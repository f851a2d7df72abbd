#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rankprompt/data.hpp"
#include "rankprompt/encoders.hpp"
#include "rankprompt/matching.hpp"
#include "rankprompt/metrics.hpp"
#include "rankprompt/prompt.hpp"
#include "rankprompt/tape.hpp"

namespace rankprompt {

enum class Method {
  OrdinalClip,  // interpolated rank embeddings
  CoOp,         // free per-rank embeddings, same pipeline otherwise
  Baseline,     // linear head + cross-entropy on image features
  ZeroShot,     // untrained template prompts, no fitting
};

const char* to_string(Method m);
Method parse_method(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.1;
  std::vector<std::size_t> decay_epochs = {30};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double temperature = 0.07;
  /// Multiplier on the learning rate of image.w2/b2 and head.w/b.
  double last_layer_lr_mult = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Learning rate in effect during 0-based `epoch`.
  double lr_at(std::size_t epoch) const;
};

struct ModelConfig {
  Method method = Method::OrdinalClip;
  PromptConfig prompt;
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t latent_dim = 64;
};

struct Model {
  ModelConfig config;
  PseudoTextEncoder text_encoder;
  Matrix interpolation;      // C x C' for OrdinalClip, empty otherwise
  PromptParameters prompt;   // base_ranks is C x word_dim for CoOp/ZeroShot
  ImageEncoderParams image;
  BaselineHead head;         // Baseline only

  std::size_t num_ranks() const noexcept { return config.prompt.num_ranks; }
  bool uses_prompts() const noexcept { return config.method != Method::Baseline; }

  /// Unit-norm language prototypes (C x latent). For Baseline, the normalized
  /// head weight rows stand in for prototypes.
  Matrix prototypes() const;
};

/// Text encoder seed is independent of `seed` so every method sees the same
/// frozen encoder for a given `encoder_seed`.
Model make_model(const ModelConfig& cfg, std::uint64_t seed, std::uint64_t encoder_seed = 0);

struct LossAndGradients {
  double loss = 0.0;
  Gradients gradients;
};

/// Builds the step's tape and differentiates the method's loss: contrastive
/// for prompt methods, cross-entropy for Baseline.
LossAndGradients loss_and_gradients(const Model& model, const Matrix& batch_x,
                                    std::span<const std::size_t> batch_y, double temperature);

struct AdamMoments {
  Matrix first;
  Matrix second;
};

struct AdamState {
  std::map<std::string, AdamMoments> moments;
  std::size_t step = 0;
};

/// One Adam update of the trainable groups. Returns the loss before the update.
/// Throws NumericError with parameter norms if the loss is non-finite.
double train_step(Model& model, AdamState& state, const Matrix& batch_x,
                  std::span<const std::size_t> batch_y, const TrainConfig& cfg, double learning_rate);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
};

struct FitResult {
  std::vector<EpochLog> trace;
  std::size_t steps = 0;
};

FitResult fit(Model& model, const OrdinalDataset& train, const TrainConfig& cfg);

MetricReport evaluate(const Model& model, const OrdinalDataset& test, PredictRule rule, double temperature);

/// Prompt record (see write_prompt_record), then u64 tensor count and, per
/// tensor, u64 rows, u64 cols and f64 values: image w1, b1, w2, b2, and for
/// Baseline head w, b.
std::vector<unsigned char> serialize_checkpoint(const Model& model);
/// Overwrites the trained parameters of `model`; shapes must match.
void restore_checkpoint(Model& model, std::span<const unsigned char> bytes);

}  // namespace rankprompt
