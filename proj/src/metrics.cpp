#include "rankprompt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rankprompt/errors.hpp"

namespace rankprompt {
namespace {

void require_paired(std::span<const std::size_t> a, std::span<const std::size_t> b, const char* what) {
  if (a.empty()) throw ShapeError(std::string(what) + ": empty input");
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.size()) + " predictions for " +
                     std::to_string(b.size()) + " labels");
  }
}

}  // namespace

const char* to_string(PredictRule rule) { return rule == PredictRule::Argmax ? "argmax" : "expectation"; }

PredictRule parse_predict_rule(const std::string& text) {
  if (text == "argmax") return PredictRule::Argmax;
  if (text == "expectation") return PredictRule::Expectation;
  throw ConfigError("predict_rule must be argmax or expectation, got \"" + text + "\"");
}

std::vector<std::size_t> argmax_rows(const Matrix& scores) {
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto r = scores.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

std::vector<std::size_t> expected_rank(const Matrix& probabilities) {
  std::vector<std::size_t> out(probabilities.rows());
  for (std::size_t i = 0; i < probabilities.rows(); ++i) {
    double e = 0.0;
    for (std::size_t j = 0; j < probabilities.cols(); ++j) e += static_cast<double>(j) * probabilities(i, j);
    const double hi = static_cast<double>(probabilities.cols() - 1);
    out[i] = static_cast<std::size_t>(std::lround(std::clamp(e, 0.0, hi)));
  }
  return out;
}

std::vector<std::size_t> predict(const SimilarityMatrix& s, PredictRule rule) {
  return rule == PredictRule::Argmax ? argmax_rows(s.raw) : expected_rank(s.row_norm);
}

double mae(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  require_paired(predicted, truth, "mae");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    total += std::abs(static_cast<double>(predicted[i]) - static_cast<double>(truth[i]));
  return total / static_cast<double>(predicted.size());
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  require_paired(predicted, truth, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

Matrix prototype_similarity(const Matrix& prototypes, double temperature) {
  SimilarityMatrix s = similarity(prototypes, prototypes, temperature);
  Matrix out = std::move(s.row_norm);
  const double peak = *std::max_element(out.values().begin(), out.values().end());
  for (double& v : out.values()) v /= peak;
  return out;
}

double ordinality_from_similarity(const Matrix& sim) {
  if (sim.rows() != sim.cols() || sim.rows() < 2) {
    throw ShapeError("ordinality: need a square matrix with N >= 2, got " + sim.shape_string());
  }
  const std::size_t n = sim.rows();
  std::size_t ordered = 0;
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i; j + 1 < n; ++j) ordered += sim(i, j) > sim(i, j + 1) ? 1 : 0;
  return static_cast<double>(ordered) / (static_cast<double>(n - 1) * static_cast<double>(n) / 2.0);
}

double ordinality_score(const Matrix& prototypes, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("ordinality_score: temperature must be positive");
  return ordinality_from_similarity(matmul(prototypes, transpose(prototypes)));
}

void export_heatmap(const Matrix& m, const std::string& prefix) {
  if (!m.all_finite()) throw NumericError("export_heatmap: matrix has non-finite entries");
  {
    std::ofstream csv(prefix + ".csv", std::ios::trunc);
    if (!csv) throw FormatError(FormatError::Kind::Io, "cannot write " + prefix + ".csv");
    csv << m.rows() << ',' << m.cols() << '\n';
    char buf[32];
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.12g", m(r, c));
        csv << (c ? "," : "") << buf;
      }
      csv << '\n';
    }
  }

  const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
  const double low = m.empty() ? 0.0 : *lo;
  const double range = m.empty() ? 0.0 : *hi - *lo;
  std::ofstream pgm(prefix + ".pgm", std::ios::binary | std::ios::trunc);
  if (!pgm) throw FormatError(FormatError::Kind::Io, "cannot write " + prefix + ".pgm");
  pgm << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  for (double v : m.values()) {
    const long level = range > 0.0 ? std::lround(255.0 * (v - low) / range) : 0;
    pgm.put(static_cast<char>(static_cast<unsigned char>(level)));
  }
  if (range == 0.0) {
    std::ofstream note(prefix + ".note", std::ios::trunc);
    note << "constant matrix: image is all zeros\n";
  } else {
    std::error_code ec;
    std::filesystem::remove(prefix + ".note", ec);
  }
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
  std::string line;
  std::size_t rows = 0, cols = 0;
  char comma = 0;
  if (!std::getline(in, line) || !(std::istringstream(line) >> rows >> comma >> cols) || comma != ',') {
    throw FormatError(FormatError::Kind::Parse, path + ": bad header");
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw FormatError(FormatError::Kind::Truncated, path + ": missing rows");
    std::istringstream cells(line);
    std::string cell;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!std::getline(cells, cell, ',')) {
        throw FormatError(FormatError::Kind::Parse, path + ": short row " + std::to_string(r + 2));
      }
      m(r, c) = std::stod(cell);
    }
  }
  return m;
}

}  // namespace rankprompt
