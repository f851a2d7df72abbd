#pragma once

// Experiment harness: single runs with on-disk artifacts and the grid
// commands (interpolation sweep, ablation, few-shot, distribution shift).
// Grid cells are independent and may run on `RunConfig::jobs` threads; every
// output is a pure function of the config.

#include <cstdint>
#include <string>
#include <vector>

#include "rankprompt/config.hpp"
#include "rankprompt/data.hpp"
#include "rankprompt/training.hpp"

namespace rankprompt {

struct SplitData {
  OrdinalDataset train;
  OrdinalDataset test;
};

/// Synthetic data (or cfg.data.csv_path) for `seed`, split train/test.
SplitData prepare_data(const RunConfig& cfg, std::uint64_t seed);

struct RunOutcome {
  Model model;
  FitResult fit;
  MetricReport report;
};

/// Builds, fits and evaluates one model; `seed` drives init and shuffling.
RunOutcome run_once(const RunConfig& cfg, const SplitData& data, std::uint64_t seed);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  void write(const std::string& path) const;
};

/// One grid cell averaged over cfg.num_seeds seeds.
struct CellResult {
  std::string label;
  Method method = Method::OrdinalClip;
  std::vector<double> maes;  // per seed
  std::vector<double> ordinalities;
  double mean_mae = 0.0;
  double mean_ordinality = 0.0;
  std::string note;
};

struct GridResult {
  std::vector<CellResult> cells;
  Table mae;
  Table ordinality;
};

struct TrainSummary {
  std::string run_dir;
  MetricReport report;
  bool image_encoder_only = false;
};

/// Single run (seed = cfg.seed) writing checkpoint.bin, loss_trace.csv,
/// metrics.csv, prototypes.opro, prototype_similarity.{csv,pgm},
/// interpolation.{csv,pgm} (ordinalclip) and manifest.txt into cfg.output_dir.
TrainSummary cmd_train(const RunConfig& cfg);

/// Rows per interpolation type ("Linear", "Inv. Prop"), one column per base-rank count.
GridResult cmd_sweep_interpolation(const RunConfig& cfg, const std::vector<std::size_t>& base_rank_counts,
                                   const std::vector<Interpolation>& types);

/// coop and ordinalclip x {tune rank, tune ctx, tune both} x {init ctx off, on}.
GridResult cmd_ablation(const RunConfig& cfg);

/// baseline, coop, ordinalclip for each shot count.
GridResult cmd_fewshot(const RunConfig& cfg, const std::vector<std::size_t>& shots);

struct ShiftSetting {
  std::size_t reduce_classes = 0;
  double reduce_fraction = 0.0;
};

/// baseline, coop, ordinalclip for each (reduce_classes, reduce_fraction).
GridResult cmd_distshift(const RunConfig& cfg, const std::vector<ShiftSetting>& grid);

struct ReportResult {
  int exit_code = 0;
  std::string text;
  std::vector<std::string> problems;
};

/// Summarizes a run directory and verifies every manifest checksum.
/// exit_code 0 when all files match, 1 otherwise.
ReportResult cmd_report(const std::string& run_dir);

}  // namespace rankprompt
