#include "rankprompt/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "rankprompt/errors.hpp"
#include "rankprompt/rng.hpp"

namespace rankprompt {
namespace {

std::vector<std::vector<std::size_t>> indices_by_rank(const OrdinalDataset& ds) {
  std::vector<std::vector<std::size_t>> groups(ds.num_ranks());
  for (std::size_t i = 0; i < ds.size(); ++i) groups[ds.ranks[i]].push_back(i);
  return groups;
}

double parse_cell(const std::string& cell, std::size_t line, std::size_t col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
    if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw FormatError(FormatError::Kind::Parse, "line " + std::to_string(line) + ", column " +
                                                    std::to_string(col) + ": not a number: \"" + cell +
                                                    "\"");
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::vector<std::size_t> OrdinalDataset::histogram() const {
  std::vector<std::size_t> h(num_ranks(), 0);
  for (std::size_t r : ranks) ++h[r];
  return h;
}

OrdinalDataset OrdinalDataset::subset(const std::vector<std::size_t>& indices) const {
  OrdinalDataset out;
  out.rank_space = rank_space;
  out.features = Matrix(indices.size(), input_dim());
  out.ranks.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto src = features.row(indices[k]);
    std::copy(src.begin(), src.end(), out.features.row(k).begin());
    out.ranks.push_back(ranks[indices[k]]);
  }
  return out;
}

OrdinalDataset generate_synthetic(std::size_t num_ranks, std::size_t per_rank, std::size_t input_dim,
                                  double noise_sigma, std::uint64_t seed) {
  if (num_ranks < 2) throw ConfigError("generate_synthetic: num_ranks must be >= 2");
  if (per_rank < 1) throw ConfigError("generate_synthetic: per_rank must be >= 1");
  if (input_dim < 1) throw ConfigError("generate_synthetic: input_dim must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("generate_synthetic: noise_sigma must be >= 0");

  Engine dir_rng(derive_seed(seed, "data.direction"));
  Matrix direction = gaussian_matrix(1, input_dim, 1.0, dir_rng);
  const double norm = frobenius_norm(direction);
  for (double& v : direction.values()) v /= norm;

  Engine noise_rng(derive_seed(seed, "data.noise"));
  std::normal_distribution<double> noise(0.0, 1.0);
  OrdinalDataset ds;
  ds.rank_space.num_ranks = num_ranks;
  ds.features = Matrix(num_ranks * per_rank, input_dim);
  for (std::size_t j = 0; j < num_ranks; ++j) {
    const double score = static_cast<double>(j) / static_cast<double>(num_ranks - 1);
    for (std::size_t s = 0; s < per_rank; ++s) {
      auto row = ds.features.row(ds.ranks.size());
      for (std::size_t c = 0; c < input_dim; ++c) row[c] = score * direction(0, c) + noise_sigma * noise(noise_rng);
      ds.ranks.push_back(j);
    }
  }
  return ds;
}

std::pair<OrdinalDataset, OrdinalDataset> split(const OrdinalDataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("split: train_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Engine rng(derive_seed(spec.seed, "data.split"));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train), ds.subset(test)};
}

OrdinalDataset few_shot_subsample(const OrdinalDataset& ds, std::size_t shots, std::uint64_t seed) {
  if (shots < 1) throw ConfigError("few_shot_subsample: shots must be >= 1");
  std::vector<std::size_t> keep;
  auto groups = indices_by_rank(ds);
  for (std::size_t j = 0; j < groups.size(); ++j) {
    auto& g = groups[j];
    Engine rng(derive_seed(derive_seed(seed, "data.fewshot"), j));
    std::shuffle(g.begin(), g.end(), rng);
    keep.insert(keep.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(std::min(shots, g.size())));
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

OrdinalDataset distribution_shift_subsample(const OrdinalDataset& ds, std::size_t reduce_classes,
                                            double reduce_fraction, std::uint64_t seed) {
  if (reduce_classes > ds.num_ranks()) throw ConfigError("distribution_shift: reduce_classes exceeds C");
  if (!(reduce_fraction >= 0.0 && reduce_fraction < 1.0)) {
    throw ConfigError("distribution_shift: reduce_fraction must be in [0, 1)");
  }
  std::vector<std::size_t> classes(ds.num_ranks());
  std::iota(classes.begin(), classes.end(), 0);
  Engine pick(derive_seed(seed, "data.shift.classes"));
  std::shuffle(classes.begin(), classes.end(), pick);
  classes.resize(reduce_classes);

  auto groups = indices_by_rank(ds);
  std::vector<bool> drop(ds.size(), false);
  for (std::size_t j : classes) {
    auto& g = groups[j];
    // Guard against 0.29 * 100 landing just below 29.
    const auto n_drop = static_cast<std::size_t>(std::floor(reduce_fraction * static_cast<double>(g.size()) + 1e-9));
    Engine rng(derive_seed(derive_seed(seed, "data.shift.samples"), j));
    std::shuffle(g.begin(), g.end(), rng);
    for (std::size_t k = 0; k < n_drop; ++k) drop[g[k]] = true;
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!drop[i]) keep.push_back(i);
  return ds.subset(keep);
}

OrdinalDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw FormatError(FormatError::Kind::Parse, path + ": empty file");
  const auto header = split_line(line);
  if (header.size() < 2 || header[0] != "rank") {
    throw FormatError(FormatError::Kind::Parse, path + ": header must be rank,f0,...");
  }
  const std::size_t dim = header.size() - 1;

  std::vector<double> labels;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw FormatError(FormatError::Kind::Parse, path + ": line " + std::to_string(line_no) + " has " +
                                                      std::to_string(cells.size()) + " cells, expected " +
                                                      std::to_string(header.size()));
    }
    labels.push_back(parse_cell(cells[0], line_no, 0));
    for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_cell(cells[c], line_no, c));
  }
  if (labels.empty()) throw FormatError(FormatError::Kind::Parse, path + ": no samples");

  std::vector<double> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) throw FormatError(FormatError::Kind::Parse, path + ": need at least two ranks");

  OrdinalDataset ds;
  ds.rank_space.num_ranks = distinct.size();
  ds.rank_space.source_labels = distinct;
  ds.features = Matrix(labels.size(), dim, std::move(values));
  for (double l : labels) {
    ds.ranks.push_back(static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), l) -
                                                distinct.begin()));
  }
  return ds;
}

void write_csv(const OrdinalDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path);
  out << "rank";
  for (std::size_t c = 0; c < ds.input_dim(); ++c) out << ",f" << c;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t r = ds.ranks[i];
    if (ds.rank_space.source_labels.empty()) {
      out << r;
    } else {
      std::snprintf(buf, sizeof buf, "%.17g", ds.rank_space.source_labels[r]);
      out << buf;
    }
    for (double v : ds.features.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace rankprompt
