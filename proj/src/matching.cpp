#include "rankprompt/matching.hpp"

#include <cmath>

#include "rankprompt/errors.hpp"
#include "rankprompt/rng.hpp"

namespace rankprompt {

SimilarityNodes similarity(Tape& tape, Var images, Var prototypes, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("similarity: temperature must be positive");
  const Matrix& i = tape.value(images);
  const Matrix& p = tape.value(prototypes);
  if (i.cols() != p.cols()) {
    throw ShapeError("similarity: image embeddings " + i.shape_string() + " vs prototypes " +
                     p.shape_string());
  }
  SimilarityNodes s;
  s.temperature = temperature;
  s.raw = tape.matmul(images, tape.transpose(prototypes));
  s.row_norm = tape.row_softmax(s.raw, temperature);
  s.col_norm = tape.col_softmax(s.raw, temperature);
  return s;
}

SimilarityMatrix similarity(const Matrix& images, const Matrix& prototypes, double temperature) {
  Tape tape;
  SimilarityNodes n = similarity(tape, tape.constant(images), tape.constant(prototypes), temperature);
  return {tape.value(n.raw), tape.value(n.row_norm), tape.value(n.col_norm), temperature};
}

LabelMatrix make_labels(std::span<const std::size_t> ranks, std::size_t num_ranks) {
  LabelMatrix l;
  l.one_hot = Matrix(ranks.size(), num_ranks);
  std::vector<double> hits(num_ranks, 0.0);
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] >= num_ranks) {
      throw ShapeError("make_labels: rank " + std::to_string(ranks[i]) + " outside [0, " +
                       std::to_string(num_ranks) + ")");
    }
    l.one_hot(i, ranks[i]) = 1.0;
    hits[ranks[i]] += 1.0;
  }
  l.col_targets = Matrix(ranks.size(), num_ranks);
  for (std::size_t i = 0; i < ranks.size(); ++i) l.col_targets(i, ranks[i]) = 1.0 / hits[ranks[i]];
  for (double h : hits) l.nonzero_cols += h > 0.0 ? 1 : 0;
  return l;
}

Var contrastive_loss(Tape& tape, const SimilarityNodes& s, const LabelMatrix& labels) {
  const Matrix& a = tape.value(s.raw);
  if (a.rows() != labels.one_hot.rows() || a.cols() != labels.one_hot.cols()) {
    throw ShapeError("contrastive_loss: similarity " + a.shape_string() + " vs labels " +
                     labels.one_hot.shape_string());
  }
  if (labels.nonzero_cols == 0) throw ShapeError("contrastive_loss: empty batch");
  const double batch = static_cast<double>(a.rows());
  Var image_to_text = tape.sum(tape.kl_rows(tape.constant(labels.one_hot), s.row_norm));
  // Columns become rows so that KL runs along each column.
  Var text_to_image = tape.sum(tape.kl_rows(tape.constant(transpose(labels.col_targets)),
                                            tape.transpose(s.col_norm)));
  Var i2t = tape.scale(image_to_text, 0.5 / batch);
  Var t2i = tape.scale(text_to_image, 0.5 / static_cast<double>(labels.nonzero_cols));
  return tape.add(i2t, t2i);
}

double contrastive_loss(const SimilarityMatrix& s, const LabelMatrix& labels) {
  Tape tape;
  SimilarityNodes n{tape.constant(s.raw), tape.constant(s.row_norm), tape.constant(s.col_norm),
                    s.temperature};
  return tape.value(contrastive_loss(tape, n, labels))(0, 0);
}

BaselineHead init_baseline_head(std::size_t num_ranks, std::size_t feature_dim, std::uint64_t seed) {
  Engine rng(derive_seed(seed, "baseline-head"));
  BaselineHead h;
  h.weights = gaussian_matrix(num_ranks, feature_dim, 1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  h.bias = Matrix(1, num_ranks);
  return h;
}

Var baseline_logits(Tape& tape, Var weights, Var bias, Var features) {
  const Matrix& w = tape.value(weights);
  const Matrix& b = tape.value(bias);
  const Matrix& f = tape.value(features);
  if (w.cols() != f.cols() || b.rows() != 1 || b.cols() != w.rows()) {
    throw ShapeError("baseline_logits: weights " + w.shape_string() + ", bias " + b.shape_string() +
                     ", features " + f.shape_string());
  }
  return tape.add_row(tape.matmul(features, tape.transpose(weights)), bias);
}

Matrix baseline_logits(const BaselineHead& head, const Matrix& features) {
  Tape tape;
  return tape.value(baseline_logits(tape, tape.constant(head.weights), tape.constant(head.bias),
                                    tape.constant(features)));
}

Var cross_entropy_loss(Tape& tape, Var logits, const Matrix& one_hot) {
  const Matrix& l = tape.value(logits);
  if (l.rows() != one_hot.rows() || l.cols() != one_hot.cols() || l.rows() == 0) {
    throw ShapeError("cross_entropy_loss: logits " + l.shape_string() + " vs labels " +
                     one_hot.shape_string());
  }
  // Entropy of a one-hot row is zero, so KL equals the cross-entropy.
  Var kl = tape.kl_rows(tape.constant(one_hot), tape.row_softmax(logits, 1.0));
  return tape.scale(tape.sum(kl), 1.0 / static_cast<double>(l.rows()));
}

double cross_entropy_loss(const Matrix& logits, const Matrix& one_hot) {
  Tape tape;
  return tape.value(cross_entropy_loss(tape, tape.constant(logits), one_hot))(0, 0);
}

}  // namespace rankprompt
