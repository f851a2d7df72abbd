#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records primitive operations in the order they are issued, so every
// node's inputs precede it. backward() walks the record once in reverse and
// returns the gradient of a 1x1 node with respect to every registered
// parameter. Tapes are cheap and meant to be rebuilt for every step.

#include <cstddef>
#include <deque>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rankprompt/matrix.hpp"

namespace rankprompt {

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  Mul,
  RowSoftmax,
  ColSoftmax,
  L2NormalizeRows,
  KlRows,
  Scale,
  ConcatRows,
  WeightedSum,
  // Support primitives for the encoders and reductions.
  SliceRows,
  Transpose,
  Tanh,
  AddRowBroadcast,
  Sum,
};

const char* to_string(OpKind kind);

/// Handle to a node on a particular tape.
struct Var {
  std::size_t id = 0;
};

/// Non-tensor arguments of a primitive.
struct OpAttr {
  double scalar = 1.0;          // temperature for softmaxes, factor for Scale
  std::vector<double> weights;  // WeightedSum row weights
  std::size_t begin = 0;        // SliceRows
  std::size_t count = 0;        // SliceRows
};

/// Parameter name -> gradient of the same shape as the parameter.
using Gradients = std::map<std::string, Matrix>;

class Tape {
 public:
  Var constant(Matrix value);
  /// Registers a named leaf. Non-trainable parameters act as constants and
  /// receive an all-zero gradient.
  Var parameter(const std::string& name, Matrix value, bool trainable = true);

  /// Generic entry point; the named helpers below forward here.
  Var record(OpKind kind, std::span<const Var> inputs, const OpAttr& attr = {});
  Var record(OpKind kind, std::initializer_list<Var> inputs, const OpAttr& attr = {}) {
    return record(kind, std::span<const Var>(inputs.begin(), inputs.size()), attr);
  }

  Var matmul(Var a, Var b) { return record(OpKind::MatMul, {a, b}); }
  Var add(Var a, Var b) { return record(OpKind::Add, {a, b}); }
  Var mul(Var a, Var b) { return record(OpKind::Mul, {a, b}); }
  Var row_softmax(Var x, double temperature);
  Var col_softmax(Var x, double temperature);
  Var l2_normalize_rows(Var x) { return record(OpKind::L2NormalizeRows, {x}); }
  /// rows x 1 column of KL(target_i || pred_i); all-zero target rows give 0.
  Var kl_rows(Var target, Var pred) { return record(OpKind::KlRows, {target, pred}); }
  Var scale(Var x, double factor);
  Var concat_rows(std::span<const Var> parts) { return record(OpKind::ConcatRows, parts); }
  /// 1 x cols row: sum_r weights[r] * x.row(r).
  Var weighted_sum(Var x, std::vector<double> weights);
  Var slice_rows(Var x, std::size_t begin, std::size_t count);
  Var transpose(Var x) { return record(OpKind::Transpose, {x}); }
  Var tanh(Var x) { return record(OpKind::Tanh, {x}); }
  /// x (n x d) plus a 1 x d row added to every row.
  Var add_row(Var x, Var row) { return record(OpKind::AddRowBroadcast, {x, row}); }
  Var sum(Var x) { return record(OpKind::Sum, {x}); }

  /// References returned here stay valid for the tape's lifetime.
  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }

  /// Gradient of a 1x1 node. Every registered parameter appears in the result;
  /// unreached or frozen ones get zeros.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    OpAttr attr;
    Matrix value;
    std::string name;         // parameters only
    bool requires_grad = false;
    std::vector<double> aux;  // per-op cache (row norms for L2NormalizeRows)
  };

  Matrix forward(OpKind kind, std::span<const Var> inputs, const OpAttr& attr,
                 std::vector<double>& aux) const;
  void accumulate_inputs(const Node& node, const Matrix& grad, std::vector<Matrix>& adj) const;

  std::deque<Node> nodes_;
};

}  // namespace rankprompt
