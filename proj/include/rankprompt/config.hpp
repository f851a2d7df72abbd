#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rankprompt/metrics.hpp"
#include "rankprompt/training.hpp"

namespace rankprompt {

struct DataConfig {
  std::size_t per_rank = 40;
  double noise_sigma = 0.25;
  double train_fraction = 0.8;
  /// When set, samples come from this CSV instead of the synthetic generator.
  std::string csv_path;
};

/// Everything a run needs. Plain-text form: `key = value` lines, `#` comments.
struct RunConfig {
  /// Runs start from the initialized-context prompt unless told otherwise.
  RunConfig() { model.prompt.init_ctx = true; }

  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  PredictRule predict_rule = PredictRule::Argmax;
  std::uint64_t seed = 0;
  std::uint64_t encoder_seed = 0;
  /// Seeds seed, seed+1, ... averaged by the table commands.
  std::size_t num_seeds = 3;
  /// Worker threads for independent grid cells.
  std::size_t jobs = 1;
  std::string output_dir;

  Method method() const noexcept { return model.method; }
  void validate() const;
};

/// Every accepted key, in rendering order.
const std::vector<std::string>& config_keys();

/// Parses `key = value` text. Unknown keys raise ConfigError listing the valid
/// ones; keys under `file.` and `metric.` (manifest entries) are skipped.
/// `output_dir` is required unless `require_output_dir` is false.
RunConfig parse_config(const std::string& text, bool require_output_dir = true);
RunConfig load_config(const std::string& path, bool require_output_dir = true);

/// Resolved config, one `key = value` line per key. Prompt keys are omitted
/// for the baseline method.
std::string render_config(const RunConfig& cfg);

}  // namespace rankprompt
