#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "helpers.hpp"
#include "rankprompt/data.hpp"
#include "rankprompt/errors.hpp"

using namespace rankprompt;

namespace {

// Closed-form ridge regression of rank on features (with intercept), solved by
// Gaussian elimination on the normal equations.
std::vector<double> ridge_fit(const OrdinalDataset& ds, double lambda) {
  const std::size_t d = ds.input_dim() + 1;
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<double> x(d, 1.0);
    for (std::size_t c = 0; c + 1 < d; ++c) x[c] = ds.features(i, c);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) a[r][c] += x[r] * x[c];
      a[r][d] += x[r] * static_cast<double>(ds.ranks[i]);
    }
  }
  for (std::size_t r = 0; r + 1 < d; ++r) a[r][r] += lambda;  // intercept unpenalized
  for (std::size_t p = 0; p < d; ++p) {
    std::size_t best = p;
    for (std::size_t r = p + 1; r < d; ++r)
      if (std::fabs(a[r][p]) > std::fabs(a[best][p])) best = r;
    std::swap(a[p], a[best]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == p) continue;
      const double f = a[r][p] / a[p][p];
      for (std::size_t c = p; c <= d; ++c) a[r][c] -= f * a[p][c];
    }
  }
  std::vector<double> w(d);
  for (std::size_t r = 0; r < d; ++r) w[r] = a[r][d] / a[r][r];
  return w;
}

double ridge_mae(const OrdinalDataset& train, const OrdinalDataset& test, double lambda) {
  const auto w = ridge_fit(train, lambda);
  double total = 0.0;
  const double hi = static_cast<double>(test.num_ranks() - 1);
  for (std::size_t i = 0; i < test.size(); ++i) {
    double y = w.back();
    for (std::size_t c = 0; c < test.input_dim(); ++c) y += w[c] * test.features(i, c);
    const double pred = std::clamp(std::round(y), 0.0, hi);
    total += std::fabs(pred - static_cast<double>(test.ranks[i]));
  }
  return total / static_cast<double>(test.size());
}

// numpy.linalg.solve on the same split, lambda 1e-6: 456 / 160.
constexpr double kRidgeOracleMae = 2.85;

}  // namespace

TEST(Synthetic, ShapeAndLabels) {
  const OrdinalDataset ds = generate_synthetic(5, 7, 3, 0.1, 1);
  EXPECT_EQ(ds.size(), 35u);
  EXPECT_EQ(ds.input_dim(), 3u);
  EXPECT_EQ(ds.num_ranks(), 5u);
  EXPECT_EQ(ds.histogram(), std::vector<std::size_t>(5, 7));
  EXPECT_TRUE(ds.features.all_finite());
}

TEST(Synthetic, SameSeedIdenticalDifferentSeedDiffers) {
  EXPECT_EQ(generate_synthetic(20, 40, 16, 0.25, 3), generate_synthetic(20, 40, 16, 0.25, 3));
  EXPECT_NE(generate_synthetic(20, 40, 16, 0.25, 3).features, generate_synthetic(20, 40, 16, 0.25, 4).features);
}

TEST(Synthetic, NoiselessRanksAreSeparable) {
  const OrdinalDataset ds = generate_synthetic(6, 5, 4, 0.0, 2);
  std::map<std::size_t, std::vector<double>> centroid;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto row = ds.features.row(i);
    auto [it, fresh] = centroid.try_emplace(ds.ranks[i], row.begin(), row.end());
    if (!fresh) EXPECT_TRUE(std::equal(row.begin(), row.end(), it->second.begin()));
  }
  // Nearest-centroid classification is exact.
  double err = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (const auto& [j, c] : centroid) {
      double d = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k) d += std::pow(ds.features(i, k) - c[k], 2);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    err += std::fabs(static_cast<double>(best) - static_cast<double>(ds.ranks[i]));
  }
  EXPECT_EQ(err, 0.0);
}

TEST(Synthetic, RejectsInvalidArguments) {
  EXPECT_THROW(generate_synthetic(1, 5, 4, 0.1, 0), ConfigError);
  EXPECT_THROW(generate_synthetic(3, 0, 4, 0.1, 0), ConfigError);
  EXPECT_THROW(generate_synthetic(3, 5, 4, -0.1, 0), ConfigError);
}

// Difficulty calibration of the reference task. The ridge oracle's MAE is
// frozen from an independent least-squares evaluation of the same data.
TEST(Synthetic, RidgeOracleCalibration) {
  const OrdinalDataset ds = generate_synthetic(20, 40, 16, 0.25, 0);
  const auto [train, test] = split(ds, {0.8, 0});
  const double m = ridge_mae(train, test, 1e-6);
  EXPECT_NEAR(m, kRidgeOracleMae, 1e-12);
}

TEST(Split, DisjointCoveringAndSized) {
  const OrdinalDataset ds = generate_synthetic(10, 10, 3, 0.2, 5);
  const auto [train, test] = split(ds, {0.8, 11});
  EXPECT_EQ(train.size(), 80u);
  EXPECT_EQ(test.size(), 20u);
  std::set<std::vector<double>> rows;
  for (const auto* part : {&train, &test})
    for (std::size_t i = 0; i < part->size(); ++i)
      rows.insert(std::vector<double>(part->features.row(i).begin(), part->features.row(i).end()));
  EXPECT_EQ(rows.size(), 100u);
  EXPECT_EQ(split(ds, {0.8, 11}).first, train);
  EXPECT_NE(split(ds, {0.8, 12}).first, train);
  EXPECT_THROW(split(ds, {1.0, 0}), ConfigError);
}

TEST(FewShot, ExactCountsPerRank) {
  const OrdinalDataset ds = generate_synthetic(20, 8, 3, 0.2, 1);
  const OrdinalDataset one = few_shot_subsample(ds, 1, 3);
  EXPECT_EQ(one.size(), 20u);
  EXPECT_EQ(one.histogram(), std::vector<std::size_t>(20, 1));
  EXPECT_EQ(few_shot_subsample(ds, 4, 3).histogram(), std::vector<std::size_t>(20, 4));
}

TEST(FewShot, AtLeastAvailableKeepsEverything) {
  const OrdinalDataset ds = generate_synthetic(4, 6, 3, 0.2, 1);
  EXPECT_EQ(few_shot_subsample(ds, 6, 9), ds);
  EXPECT_EQ(few_shot_subsample(ds, 100, 9), ds);
  EXPECT_THROW(few_shot_subsample(ds, 0, 9), ConfigError);
}

TEST(FewShot, SeedsChangeSubsetsDeterministically) {
  const OrdinalDataset ds = generate_synthetic(10, 8, 3, 0.2, 1);
  EXPECT_EQ(few_shot_subsample(ds, 2, 1), few_shot_subsample(ds, 2, 1));
  EXPECT_NE(few_shot_subsample(ds, 2, 1).features, few_shot_subsample(ds, 2, 2).features);
}

TEST(DistShift, ZeroFractionIsNoOp) {
  const OrdinalDataset ds = generate_synthetic(10, 8, 3, 0.2, 1);
  EXPECT_EQ(distribution_shift_subsample(ds, 5, 0.0, 4), ds);
  EXPECT_EQ(distribution_shift_subsample(ds, 0, 0.9, 4), ds);
}

TEST(DistShift, AllClassesKeepFourOfForty) {
  const OrdinalDataset ds = generate_synthetic(20, 40, 3, 0.2, 1);
  EXPECT_EQ(distribution_shift_subsample(ds, 20, 0.9, 4).histogram(), std::vector<std::size_t>(20, 4));
}

TEST(DistShift, UnselectedRanksUntouched) {
  const OrdinalDataset ds = generate_synthetic(20, 40, 3, 0.2, 1);
  const OrdinalDataset out = distribution_shift_subsample(ds, 2, 0.8, 6);
  const auto h = out.histogram();
  std::size_t reduced = 0;
  for (std::size_t j = 0; j < 20; ++j) {
    if (h[j] == 8) {
      ++reduced;
    } else {
      EXPECT_EQ(h[j], 40u);
    }
  }
  EXPECT_EQ(reduced, 2u);
  // Every surviving row is an original row of the same rank.
  std::multiset<std::pair<std::size_t, double>> orig;
  for (std::size_t i = 0; i < ds.size(); ++i) orig.insert({ds.ranks[i], ds.features(i, 0)});
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_TRUE(orig.count({out.ranks[i], out.features(i, 0)}));
  EXPECT_THROW(distribution_shift_subsample(ds, 21, 0.5, 0), ConfigError);
  EXPECT_THROW(distribution_shift_subsample(ds, 2, 1.0, 0), ConfigError);
}

TEST(DistShift, FractionFloorIsStable) {
  const OrdinalDataset ds = generate_synthetic(2, 100, 2, 0.2, 1);
  EXPECT_EQ(distribution_shift_subsample(ds, 2, 0.29, 0).histogram(), std::vector<std::size_t>(2, 71));
}

class Csv : public ::testing::Test {
 protected:
  rptest::TempDir dir{"csv"};
  std::string write(const std::string& name, const std::string& text) {
    std::ofstream(dir.file(name)) << text;
    return dir.file(name);
  }
};

TEST_F(Csv, RoundTrip) {
  const OrdinalDataset ds = generate_synthetic(5, 4, 3, 0.3, 2);
  write_csv(ds, dir.file("d.csv"));
  const OrdinalDataset back = load_csv(dir.file("d.csv"));
  EXPECT_EQ(back.ranks, ds.ranks);
  EXPECT_LE(max_abs_diff(back.features, ds.features), 1e-9);
}

TEST_F(Csv, LabelsRemappedInOrder) {
  const auto path = write("r.csv", "rank,f0\n7,0.5\n3,1.0\n9,2.0\n3,0.1\n");
  const OrdinalDataset ds = load_csv(path);
  EXPECT_EQ(ds.ranks, (std::vector<std::size_t>{1, 0, 2, 0}));
  EXPECT_EQ(ds.rank_space.source_labels, (std::vector<double>{3, 7, 9}));
}

TEST_F(Csv, RaggedRowNamesLine) {
  const auto path = write("g.csv", "rank,f0,f1\n0,1,2\n1,3\n");
  try {
    load_csv(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST_F(Csv, NonNumericCellNamesRowAndColumn) {
  const auto path = write("n.csv", "rank,f0,f1\n0,1,2\n1,3,abc\n");
  try {
    load_csv(path);
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_EQ(e.kind(), FormatError::Kind::Parse);
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
  }
}

TEST_F(Csv, EmptyFileRejected) {
  EXPECT_THROW(load_csv(write("e.csv", "")), FormatError);
  EXPECT_THROW(load_csv(dir.file("missing.csv")), FormatError);
}
