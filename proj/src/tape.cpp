#include "rankprompt/tape.hpp"

#include <algorithm>
#include <cmath>

#include "rankprompt/errors.hpp"

namespace rankprompt {
namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

void require_arity(OpKind kind, std::span<const Var> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw ShapeError(std::string(to_string(kind)) + ": expected " + std::to_string(n) +
                     " inputs, got " + std::to_string(inputs.size()));
  }
}

Matrix softmax_rows(const Matrix& x, double temperature) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto src = x.row(i);
    auto dst = out.row(i);
    const double peak = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = std::exp((src[j] - peak) / temperature);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

// dx = (1/T) * y .* (g - <g, y>) per row.
void softmax_rows_backward(const Matrix& y, const Matrix& g, double temperature, Matrix& dx) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto yr = y.row(i);
    auto gr = g.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) dot += gr[j] * yr[j];
    auto out = dx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) out[j] += yr[j] * (gr[j] - dot) / temperature;
  }
}

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "elementwise-mul";
    case OpKind::RowSoftmax: return "row-softmax";
    case OpKind::ColSoftmax: return "col-softmax";
    case OpKind::L2NormalizeRows: return "l2-normalize-rows";
    case OpKind::KlRows: return "kl-divergence-rows";
    case OpKind::Scale: return "scalar-scale";
    case OpKind::ConcatRows: return "concat-rows";
    case OpKind::WeightedSum: return "weighted-sum";
    case OpKind::SliceRows: return "slice-rows";
    case OpKind::Transpose: return "transpose";
    case OpKind::Tanh: return "tanh";
    case OpKind::AddRowBroadcast: return "add-row-broadcast";
    case OpKind::Sum: return "sum";
  }
  return "unknown";
}

Var Tape::constant(Matrix value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite entry");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(const std::string& name, Matrix value, bool trainable) {
  if (!value.all_finite()) throw NumericError("parameter " + name + ": non-finite entry");
  for (const auto& n : nodes_) {
    if (!n.name.empty() && n.name == name) throw ShapeError("parameter " + name + " registered twice");
  }
  Node n;
  n.value = std::move(value);
  n.name = name;
  n.requires_grad = trainable;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::row_softmax(Var x, double temperature) {
  OpAttr attr;
  attr.scalar = temperature;
  return record(OpKind::RowSoftmax, {x}, attr);
}

Var Tape::col_softmax(Var x, double temperature) {
  OpAttr attr;
  attr.scalar = temperature;
  return record(OpKind::ColSoftmax, {x}, attr);
}

Var Tape::scale(Var x, double factor) {
  OpAttr attr;
  attr.scalar = factor;
  return record(OpKind::Scale, {x}, attr);
}

Var Tape::weighted_sum(Var x, std::vector<double> weights) {
  OpAttr attr;
  attr.weights = std::move(weights);
  return record(OpKind::WeightedSum, {x}, attr);
}

Var Tape::slice_rows(Var x, std::size_t begin, std::size_t count) {
  OpAttr attr;
  attr.begin = begin;
  attr.count = count;
  return record(OpKind::SliceRows, {x}, attr);
}

Var Tape::record(OpKind kind, std::span<const Var> inputs, const OpAttr& attr) {
  if (kind == OpKind::Leaf) throw ShapeError("record: use constant() or parameter() for leaves");
  for (Var v : inputs) {
    if (v.id >= nodes_.size()) throw ShapeError("record: input refers to a node not on this tape");
  }
  Node n;
  n.kind = kind;
  n.attr = attr;
  n.value = forward(kind, inputs, attr, n.aux);
  if (!n.value.all_finite()) {
    throw NumericError(std::string(to_string(kind)) + ": produced a non-finite value");
  }
  for (Var v : inputs) {
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Matrix Tape::forward(OpKind kind, std::span<const Var> in, const OpAttr& attr,
                     std::vector<double>& aux) const {
  auto val = [&](std::size_t i) -> const Matrix& { return nodes_[in[i].id].value; };
  switch (kind) {
    case OpKind::Leaf:
      break;
    case OpKind::MatMul:
      require_arity(kind, in, 2);
      return rankprompt::matmul(val(0), val(1));
    case OpKind::Add: {
      require_arity(kind, in, 2);
      require_same_shape("add", val(0), val(1));
      Matrix out = val(0);
      add_into(out, val(1));
      return out;
    }
    case OpKind::Mul: {
      require_arity(kind, in, 2);
      require_same_shape("elementwise-mul", val(0), val(1));
      Matrix out = val(0);
      for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= val(1).values()[i];
      return out;
    }
    case OpKind::RowSoftmax:
    case OpKind::ColSoftmax: {
      require_arity(kind, in, 1);
      if (!(attr.scalar > 0.0)) throw ShapeError("softmax: temperature must be positive");
      if (val(0).empty()) throw ShapeError("softmax: empty input");
      if (kind == OpKind::RowSoftmax) return softmax_rows(val(0), attr.scalar);
      return rankprompt::transpose(softmax_rows(rankprompt::transpose(val(0)), attr.scalar));
    }
    case OpKind::L2NormalizeRows: {
      require_arity(kind, in, 1);
      const Matrix& x = val(0);
      Matrix out(x.rows(), x.cols());
      aux.assign(x.rows(), 0.0);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (double v : x.row(i)) s += v * v;
        const double norm = std::sqrt(s);
        if (!(norm > 0.0)) {
          throw NumericError("l2-normalize-rows: row " + std::to_string(i) + " has zero norm");
        }
        aux[i] = norm;
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) / norm;
      }
      return out;
    }
    case OpKind::KlRows: {
      require_arity(kind, in, 2);
      const Matrix& p = val(0);
      const Matrix& q = val(1);
      require_same_shape("kl-divergence-rows", p, q);
      Matrix out(p.rows(), 1);
      for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
          if (p(i, j) > 0.0) s += p(i, j) * std::log(p(i, j) / q(i, j));
        }
        out(i, 0) = s;
      }
      return out;
    }
    case OpKind::Scale: {
      require_arity(kind, in, 1);
      Matrix out = val(0);
      for (double& v : out.values()) v *= attr.scalar;
      return out;
    }
    case OpKind::ConcatRows: {
      if (in.empty()) throw ShapeError("concat-rows: no inputs");
      const std::size_t cols = val(0).cols();
      std::vector<double> data;
      std::size_t rows = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        if (val(k).cols() != cols) {
          throw ShapeError("concat-rows: column mismatch " + val(0).shape_string() + " vs " +
                           val(k).shape_string());
        }
        rows += val(k).rows();
        data.insert(data.end(), val(k).values().begin(), val(k).values().end());
      }
      return Matrix(rows, cols, std::move(data));
    }
    case OpKind::WeightedSum: {
      require_arity(kind, in, 1);
      const Matrix& x = val(0);
      if (attr.weights.size() != x.rows()) {
        throw ShapeError("weighted-sum: " + std::to_string(attr.weights.size()) +
                         " weights for " + x.shape_string());
      }
      Matrix out(1, x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += attr.weights[r] * x(r, c);
      return out;
    }
    case OpKind::SliceRows: {
      require_arity(kind, in, 1);
      const Matrix& x = val(0);
      if (attr.begin + attr.count > x.rows()) {
        throw ShapeError("slice-rows: rows [" + std::to_string(attr.begin) + ", " +
                         std::to_string(attr.begin + attr.count) + ") outside " + x.shape_string());
      }
      Matrix out(attr.count, x.cols());
      for (std::size_t r = 0; r < attr.count; ++r)
        std::copy_n(x.row(attr.begin + r).begin(), x.cols(), out.row(r).begin());
      return out;
    }
    case OpKind::Transpose:
      require_arity(kind, in, 1);
      return rankprompt::transpose(val(0));
    case OpKind::Tanh: {
      require_arity(kind, in, 1);
      Matrix out = val(0);
      for (double& v : out.values()) v = std::tanh(v);
      return out;
    }
    case OpKind::AddRowBroadcast: {
      require_arity(kind, in, 2);
      const Matrix& x = val(0);
      const Matrix& b = val(1);
      if (b.rows() != 1 || b.cols() != x.cols()) {
        throw ShapeError("add-row-broadcast: " + x.shape_string() + " + " + b.shape_string());
      }
      Matrix out = x;
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) += b(0, c);
      return out;
    }
    case OpKind::Sum: {
      require_arity(kind, in, 1);
      double s = 0.0;
      for (double v : val(0).values()) s += v;
      return Matrix(1, 1, s);
    }
  }
  throw ShapeError("record: unsupported op");
}

void Tape::accumulate_inputs(const Node& node, const Matrix& g, std::vector<Matrix>& adj) const {
  auto input = [&](std::size_t i) -> const Node& { return nodes_[node.inputs[i]]; };
  auto target = [&](std::size_t i) -> Matrix* {
    const Node& n = input(i);
    if (!n.requires_grad) return nullptr;
    Matrix& a = adj[node.inputs[i]];
    if (a.empty() && !n.value.empty()) a = Matrix(n.value.rows(), n.value.cols());
    return &a;
  };

  switch (node.kind) {
    case OpKind::Leaf:
      return;
    case OpKind::MatMul: {
      if (Matrix* da = target(0)) add_into(*da, rankprompt::matmul(g, rankprompt::transpose(input(1).value)));
      if (Matrix* db = target(1)) add_into(*db, rankprompt::matmul(rankprompt::transpose(input(0).value), g));
      return;
    }
    case OpKind::Add: {
      if (Matrix* da = target(0)) add_into(*da, g);
      if (Matrix* db = target(1)) add_into(*db, g);
      return;
    }
    case OpKind::Mul: {
      const Matrix& a = input(0).value;
      const Matrix& b = input(1).value;
      if (Matrix* da = target(0))
        for (std::size_t i = 0; i < g.size(); ++i) da->values()[i] += g.values()[i] * b.values()[i];
      if (Matrix* db = target(1))
        for (std::size_t i = 0; i < g.size(); ++i) db->values()[i] += g.values()[i] * a.values()[i];
      return;
    }
    case OpKind::RowSoftmax: {
      if (Matrix* dx = target(0)) softmax_rows_backward(node.value, g, node.attr.scalar, *dx);
      return;
    }
    case OpKind::ColSoftmax: {
      if (Matrix* dx = target(0)) {
        Matrix dxt(dx->cols(), dx->rows());
        softmax_rows_backward(rankprompt::transpose(node.value), rankprompt::transpose(g),
                              node.attr.scalar, dxt);
        add_into(*dx, rankprompt::transpose(dxt));
      }
      return;
    }
    case OpKind::L2NormalizeRows: {
      // dx = (g - y <g, y>) / |x|
      if (Matrix* dx = target(0)) {
        const Matrix& y = node.value;
        for (std::size_t i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j)
            (*dx)(i, j) += (g(i, j) - y(i, j) * dot) / node.aux[i];
        }
      }
      return;
    }
    case OpKind::KlRows: {
      const Matrix& p = input(0).value;
      const Matrix& q = input(1).value;
      if (Matrix* dp = target(0)) {
        for (std::size_t i = 0; i < p.rows(); ++i)
          for (std::size_t j = 0; j < p.cols(); ++j)
            if (p(i, j) > 0.0) (*dp)(i, j) += g(i, 0) * (std::log(p(i, j) / q(i, j)) + 1.0);
      }
      if (Matrix* dq = target(1)) {
        for (std::size_t i = 0; i < p.rows(); ++i)
          for (std::size_t j = 0; j < p.cols(); ++j)
            if (p(i, j) > 0.0) (*dq)(i, j) -= g(i, 0) * p(i, j) / q(i, j);
      }
      return;
    }
    case OpKind::Scale: {
      if (Matrix* dx = target(0))
        for (std::size_t i = 0; i < g.size(); ++i) dx->values()[i] += node.attr.scalar * g.values()[i];
      return;
    }
    case OpKind::ConcatRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t rows = input(k).value.rows();
        if (Matrix* dx = target(k)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) (*dx)(r, c) += g(offset + r, c);
        }
        offset += rows;
      }
      return;
    }
    case OpKind::WeightedSum: {
      if (Matrix* dx = target(0)) {
        for (std::size_t r = 0; r < dx->rows(); ++r)
          for (std::size_t c = 0; c < dx->cols(); ++c) (*dx)(r, c) += node.attr.weights[r] * g(0, c);
      }
      return;
    }
    case OpKind::SliceRows: {
      if (Matrix* dx = target(0)) {
        for (std::size_t r = 0; r < node.attr.count; ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) (*dx)(node.attr.begin + r, c) += g(r, c);
      }
      return;
    }
    case OpKind::Transpose: {
      if (Matrix* dx = target(0)) add_into(*dx, rankprompt::transpose(g));
      return;
    }
    case OpKind::Tanh: {
      if (Matrix* dx = target(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = node.value.values()[i];
          dx->values()[i] += g.values()[i] * (1.0 - y * y);
        }
      }
      return;
    }
    case OpKind::AddRowBroadcast: {
      if (Matrix* dx = target(0)) add_into(*dx, g);
      if (Matrix* db = target(1)) {
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) (*db)(0, c) += g(r, c);
      }
      return;
    }
    case OpKind::Sum: {
      if (Matrix* dx = target(0))
        for (double& v : dx->values()) v += g(0, 0);
      return;
    }
  }
}

Gradients Tape::backward(Var loss) const {
  const Node& root = nodes_.at(loss.id);
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ShapeError("backward: loss node must be 1x1, got " + root.value.shape_string());
  }
  std::vector<Matrix> adj(loss.id + 1);
  adj[loss.id] = Matrix(1, 1, 1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || adj[id].empty()) continue;
    accumulate_inputs(n, adj[id], adj);
  }

  Gradients grads;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.kind != OpKind::Leaf || n.name.empty()) continue;
    if (n.requires_grad && id <= loss.id && !adj[id].empty()) {
      grads.emplace(n.name, std::move(adj[id]));
    } else {
      grads.emplace(n.name, Matrix(n.value.rows(), n.value.cols()));
    }
  }
  return grads;
}

}  // namespace rankprompt
