#pragma once

#include <span>

#include "rankprompt/matrix.hpp"
#include "rankprompt/tape.hpp"

namespace rankprompt {

/// Tape nodes for the B x C score tables.
struct SimilarityNodes {
  Var raw;       // A = I P^T
  Var row_norm;  // A' = row-softmax(A / T)
  Var col_norm;  // A'' = col-softmax(A / T)
  double temperature = 0.0;
};

/// Plain values of the same tables.
struct SimilarityMatrix {
  Matrix raw;
  Matrix row_norm;
  Matrix col_norm;
  double temperature = 0.0;
};

SimilarityNodes similarity(Tape& tape, Var images, Var prototypes, double temperature);
SimilarityMatrix similarity(const Matrix& images, const Matrix& prototypes, double temperature);

/// One-hot Y and its column-normalized companion Y''.
struct LabelMatrix {
  Matrix one_hot;      // B x C
  Matrix col_targets;  // B x C, non-zero columns of Y scaled to sum 1
  std::size_t nonzero_cols = 0;
};

LabelMatrix make_labels(std::span<const std::size_t> ranks, std::size_t num_ranks);

/// 1/2 [ mean_i KL(Y_i, A'_i) + mean over non-zero columns j of KL(Y''_j, A''_j) ].
Var contrastive_loss(Tape& tape, const SimilarityNodes& s, const LabelMatrix& labels);
double contrastive_loss(const SimilarityMatrix& s, const LabelMatrix& labels);

inline constexpr const char* kHeadWeights = "head.w";
inline constexpr const char* kHeadBias = "head.b";

/// Linear classification head: logits l_ij = w_j . f_i + b_j.
struct BaselineHead {
  Matrix weights;  // C x d
  Matrix bias;     // 1 x C
};

BaselineHead init_baseline_head(std::size_t num_ranks, std::size_t feature_dim, std::uint64_t seed);

Var baseline_logits(Tape& tape, Var weights, Var bias, Var features);
Matrix baseline_logits(const BaselineHead& head, const Matrix& features);

/// Mean over the batch of -log softmax(logits)_label.
Var cross_entropy_loss(Tape& tape, Var logits, const Matrix& one_hot);
double cross_entropy_loss(const Matrix& logits, const Matrix& one_hot);

}  // namespace rankprompt
