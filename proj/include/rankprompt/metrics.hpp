#pragma once

#include <span>
#include <string>
#include <vector>

#include "rankprompt/matching.hpp"
#include "rankprompt/matrix.hpp"

namespace rankprompt {

enum class PredictRule {
  Argmax,       // argmax_j a_ij, lowest index on ties
  Expectation,  // round(sum_j j * a'_ij)
};

const char* to_string(PredictRule rule);
PredictRule parse_predict_rule(const std::string& text);

std::vector<std::size_t> predict(const SimilarityMatrix& s, PredictRule rule = PredictRule::Argmax);
/// Argmax of each row; ties resolve to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& scores);
/// round(sum_j j * p_ij) for row-stochastic p.
std::vector<std::size_t> expected_rank(const Matrix& probabilities);

double mae(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);
double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

/// Row-softmax of P P^T / T divided by its global maximum (C x C).
Matrix prototype_similarity(const Matrix& prototypes, double temperature);

/// Fraction of pairs i <= j <= N-2 with s(i, j) > s(i, j+1), over (N-1)N/2.
double ordinality_from_similarity(const Matrix& similarity);

/// Ordinality of language prototypes. Computed on the raw cosines P P^T, which
/// gives the same count as prototype_similarity() for any T > 0.
double ordinality_score(const Matrix& prototypes, double temperature);

struct MetricReport {
  double mae = 0.0;              // under the configured rule
  double mae_argmax = 0.0;
  double mae_expectation = 0.0;
  double accuracy = 0.0;
  double ordinality = 0.0;
  std::vector<std::size_t> per_rank_counts;  // test samples per true rank
};

/// Writes `<prefix>.csv` (header "rows,cols", then rows at 12 significant
/// digits) and `<prefix>.pgm` (binary P5, min-max scaled to 0..255). A
/// constant matrix yields an all-zero image and a `<prefix>.note` sidecar.
void export_heatmap(const Matrix& m, const std::string& prefix);
Matrix read_matrix_csv(const std::string& path);

}  // namespace rankprompt
