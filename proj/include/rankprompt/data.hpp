#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rankprompt/matrix.hpp"

namespace rankprompt {

/// Ordered labels 0..C-1.
struct RankSpace {
  std::size_t num_ranks = 0;
  /// Original label values from an external file, one per rank; empty for
  /// synthetic data.
  std::vector<double> source_labels;

  friend bool operator==(const RankSpace&, const RankSpace&) = default;
};

struct OrdinalDataset {
  Matrix features;                 // n x input_dim
  std::vector<std::size_t> ranks;  // n entries in [0, C)
  RankSpace rank_space;

  std::size_t size() const noexcept { return ranks.size(); }
  std::size_t input_dim() const noexcept { return features.cols(); }
  std::size_t num_ranks() const noexcept { return rank_space.num_ranks; }
  std::vector<std::size_t> histogram() const;
  /// Rows `indices` in the given order.
  OrdinalDataset subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const OrdinalDataset&, const OrdinalDataset&) = default;
};

/// Rank j has latent score s_j = j/(C-1); a sample is s_j * w + N(0, sigma^2)
/// per coordinate, with w a seeded unit direction in input_dim.
OrdinalDataset generate_synthetic(std::size_t num_ranks, std::size_t per_rank, std::size_t input_dim,
                                  double noise_sigma, std::uint64_t seed);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then the first round(train_fraction * n) samples train.
std::pair<OrdinalDataset, OrdinalDataset> split(const OrdinalDataset& ds, const SplitSpec& spec);

/// min(shots, n_j) samples per rank, drawn without replacement; original order kept.
OrdinalDataset few_shot_subsample(const OrdinalDataset& ds, std::size_t shots, std::uint64_t seed);

/// Picks `reduce_classes` ranks at random and drops floor(reduce_fraction * n_j)
/// samples from each; other ranks are untouched. Original order kept.
OrdinalDataset distribution_shift_subsample(const OrdinalDataset& ds, std::size_t reduce_classes,
                                            double reduce_fraction, std::uint64_t seed);

/// CSV with header `rank,f0,...,f{d-1}`. Distinct rank values are mapped to
/// 0..C-1 in increasing order; the originals land in rank_space.source_labels.
OrdinalDataset load_csv(const std::string& path);
void write_csv(const OrdinalDataset& ds, const std::string& path);

}  // namespace rankprompt
