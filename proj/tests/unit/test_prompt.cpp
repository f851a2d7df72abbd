#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "rankprompt/binary_io.hpp"
#include "rankprompt/errors.hpp"
#include "rankprompt/prompt.hpp"
#include "rankprompt/training.hpp"

using namespace rankprompt;
using rptest::random_matrix;

namespace {

// Direct evaluation of the weight formula, written independently of the library.
std::vector<double> oracle_row(std::size_t c, std::size_t cb, std::size_t j, bool linear, double eps) {
  std::vector<double> row(cb);
  double total = 0.0;
  for (std::size_t k = 0; k < cb; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(c - 1) / static_cast<double>(cb - 1);
    const double w = std::fabs(static_cast<double>(j) - pos);
    row[k] = linear ? 1.0 - w / static_cast<double>(c - 1) : 1.0 / (w + eps);
    total += row[k];
  }
  for (double& v : row) v /= total;
  return row;
}

}  // namespace

TEST(Interpolation, ThreeRanksTwoBasesLinearIsExact) {
  const Matrix w = build_interpolation_matrix(3, 2, Interpolation::Linear);
  EXPECT_EQ(w, (Matrix{{1.0, 0.0}, {0.5, 0.5}, {0.0, 1.0}}));
}

TEST(Interpolation, FiveRanksThreeBasesFirstRow) {
  const Matrix w = build_interpolation_matrix(5, 3, Interpolation::Linear);
  EXPECT_NEAR(w(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(w(0, 2), 0.0);
}

TEST(Interpolation, InverseProportionSquareIsNearIdentity) {
  const Matrix w = build_interpolation_matrix(3, 3, Interpolation::InverseProportion, 1e-5);
  EXPECT_LE(max_abs_diff(w, Matrix::identity(3)), 1e-4);
}

TEST(Interpolation, SingleBaseRankRejected) {
  EXPECT_THROW(build_interpolation_matrix(5, 1, Interpolation::Linear), ConfigError);
  EXPECT_THROW(build_interpolation_matrix(3, 4, Interpolation::Linear), ConfigError);
  EXPECT_THROW(build_interpolation_matrix(4, 2, Interpolation::InverseProportion, 0.0), ConfigError);
}

TEST(Interpolation, MatchesDirectEvaluation) {
  for (std::size_t c : {2, 7, 17, 50}) {
    for (std::size_t cb : {2, 3, 10}) {
      if (cb > c) continue;
      for (bool linear : {true, false}) {
        const Matrix w =
            build_interpolation_matrix(c, cb, linear ? Interpolation::Linear : Interpolation::InverseProportion);
        for (std::size_t j = 0; j < c; ++j) {
          const auto row = oracle_row(c, cb, j, linear, 1e-5);
          for (std::size_t k = 0; k < cb; ++k) EXPECT_NEAR(w(j, k), row[k], 1e-14);
        }
      }
    }
  }
}

TEST(Interpolation, InvariantsOverFullRange) {
  for (std::size_t c = 2; c <= 128; ++c) {
    for (std::size_t cb = 2; cb <= c; cb += (c > 40 ? 7 : 1)) {
      for (Interpolation kind : {Interpolation::Linear, Interpolation::InverseProportion}) {
        const Matrix w = build_interpolation_matrix(c, cb, kind);
        for (std::size_t j = 0; j < c; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k < cb; ++k) {
            ASSERT_GE(w(j, k), 0.0);
            ASSERT_NEAR(w(j, k), w(c - 1 - j, cb - 1 - k), 1e-12) << c << "," << cb;
            s += w(j, k);
          }
          ASSERT_NEAR(s, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(Interpolation, InverseProportionNearestBaseDominates) {
  for (std::size_t c : {10, 20, 33}) {
    for (std::size_t cb : {3, 4, 7}) {
      const Matrix w = build_interpolation_matrix(c, cb, Interpolation::InverseProportion);
      const double spacing = static_cast<double>(c - 1) / static_cast<double>(cb - 1);
      for (std::size_t j = 0; j < c; ++j) {
        std::size_t nearest = 0;
        double best = 1e300;
        bool tie = false;
        for (std::size_t k = 0; k < cb; ++k) {
          const double d = std::fabs(static_cast<double>(j) - spacing * static_cast<double>(k));
          if (d < best - 1e-9) {
            best = d;
            nearest = k;
            tie = false;
          } else if (std::fabs(d - best) <= 1e-9) {
            tie = true;
          }
        }
        if (tie) continue;
        for (std::size_t k = 0; k < cb; ++k)
          if (k != nearest) EXPECT_GT(w(j, nearest), w(j, k));
      }
    }
  }
}

TEST(Interpolation, ParseNames) {
  EXPECT_EQ(parse_interpolation("linear"), Interpolation::Linear);
  EXPECT_EQ(parse_interpolation("inverse_proportion"), Interpolation::InverseProportion);
  EXPECT_EQ(parse_interpolation("inv_prop"), Interpolation::InverseProportion);
  EXPECT_THROW(parse_interpolation("cubic"), ConfigError);
}

TEST(RankEmbeddings, IdentityWeightsReturnBaseRanks) {
  const Matrix r = random_matrix(4, 6, 1);
  EXPECT_EQ(interpolate_rank_embeddings(Matrix::identity(4), r), r);
}

TEST(RankEmbeddings, OpposedBasesCancel) {
  Matrix r = random_matrix(2, 5, 2);
  for (std::size_t c = 0; c < 5; ++c) r(1, c) = -r(0, c);
  const Matrix out = interpolate_rank_embeddings(Matrix{{0.5, 0.5}}, r);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(RankEmbeddings, MiddleRankIsMidpoint) {
  const Matrix r = random_matrix(2, 8, 3);
  const Matrix out = interpolate_rank_embeddings(build_interpolation_matrix(3, 2, Interpolation::Linear), r);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out(1, c), 0.5 * (r(0, c) + r(1, c)), 1e-15);
}

TEST(RankEmbeddings, ShapeMismatchRejected) {
  EXPECT_THROW(interpolate_rank_embeddings(Matrix(5, 3), Matrix(2, 4)), ShapeError);
}

TEST(Sequences, EmptyContextGivesRankRowOnly) {
  const Matrix ranks = random_matrix(3, 4, 4);
  const auto seqs = assemble_sequences(Matrix(0, 4), ranks);
  ASSERT_EQ(seqs.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    ASSERT_EQ(seqs[j].rows(), 1u);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(seqs[j](0, c), ranks(j, c));
  }
}

TEST(Sequences, SharedContextThenRank) {
  const Matrix ctx = random_matrix(2, 4, 5);
  const Matrix ranks = random_matrix(2, 4, 6);
  const auto seqs = assemble_sequences(ctx, ranks);
  ASSERT_EQ(seqs.size(), 2u);
  for (std::size_t j = 0; j < 2; ++j) {
    ASSERT_EQ(seqs[j].rows(), 3u);
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(seqs[j](0, c), ctx(0, c));
      EXPECT_EQ(seqs[j](1, c), ctx(1, c));
      EXPECT_EQ(seqs[j](2, c), ranks(j, c));
    }
  }
}

TEST(Sequences, PerturbingFirstContextRowTouchesOnlyRowZero) {
  Matrix ctx = random_matrix(3, 4, 7);
  const Matrix ranks = random_matrix(5, 4, 8);
  const auto before = assemble_sequences(ctx, ranks);
  ctx(0, 2) += 0.25;
  const auto after = assemble_sequences(ctx, ranks);
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        if (r == 0 && c == 2) {
          EXPECT_NE(before[j](r, c), after[j](r, c));
        } else {
          EXPECT_EQ(before[j](r, c), after[j](r, c));
        }
      }
    }
  }
}

TEST(Sequences, RankRowEqualsInterpolatedEmbedding) {
  const Matrix w = build_interpolation_matrix(6, 3, Interpolation::Linear);
  const Matrix base = random_matrix(3, 5, 9);
  const auto seqs = assemble_sequences(random_matrix(2, 5, 10), interpolate_rank_embeddings(w, base));
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t c = 0; c < 5; ++c) {
      double v = 0.0;
      for (std::size_t k = 0; k < 3; ++k) v += w(j, k) * base(k, c);
      EXPECT_NEAR(seqs[j](2, c), v, 1e-15);
    }
  }
}

TEST(Sequences, WordDimMismatchRejected) {
  EXPECT_THROW(assemble_sequences(Matrix(2, 3), Matrix(4, 4)), ShapeError);
}

class InitTest : public ::testing::Test {
 protected:
  PseudoTextEncoder encoder{TextEncoderConfig{}, 0};
};

TEST_F(InitTest, SameSeedIsBitwiseIdentical) {
  PromptConfig cfg;
  EXPECT_EQ(init_parameters(cfg, encoder, 42), init_parameters(cfg, encoder, 42));
  cfg.init_ctx = true;
  EXPECT_EQ(init_parameters(cfg, encoder, 42), init_parameters(cfg, encoder, 42));
}

TEST_F(InitTest, DifferentSeedsDiffer) {
  PromptConfig cfg;
  const auto a = init_parameters(cfg, encoder, 1);
  const auto b = init_parameters(cfg, encoder, 2);
  EXPECT_NE(a.context, b.context);
  EXPECT_NE(a.base_ranks, b.base_ranks);
}

TEST_F(InitTest, ShapesFollowConfig) {
  PromptConfig cfg;
  cfg.num_context = 6;
  cfg.num_base_ranks = 5;
  const auto p = init_parameters(cfg, encoder, 3);
  EXPECT_EQ(p.context.rows(), 6u);
  EXPECT_EQ(p.context.cols(), 32u);
  EXPECT_EQ(p.base_ranks.rows(), 5u);
}

TEST_F(InitTest, InitContextEqualsTokenRows) {
  PromptConfig cfg;
  cfg.init_ctx = true;
  cfg.num_context = default_context_template().size();
  const auto p = init_parameters(cfg, encoder, 3);
  EXPECT_EQ(p.context, encoder.token_rows(default_context_template()));
}

TEST_F(InitTest, ShortTemplateFillsTrailingRows) {
  PromptConfig cfg;
  cfg.init_ctx = true;
  cfg.num_context = 6;
  const auto p = init_parameters(cfg, encoder, 3);
  const Matrix rows = encoder.token_rows(default_context_template());
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t c = 0; c < rows.cols(); ++c) EXPECT_EQ(p.context(2 + r, c), rows(r, c));
}

TEST_F(InitTest, TemplateLongerThanContextRejected) {
  PromptConfig cfg;
  cfg.init_ctx = true;
  cfg.num_context = 2;
  EXPECT_THROW(init_parameters(cfg, encoder, 0), ConfigError);
}

TEST_F(InitTest, CheckpointRecordRoundTrip) {
  PromptConfig cfg;
  const auto p = init_parameters(cfg, encoder, 5);
  ByteWriter w;
  write_prompt_record(w, 20, p);
  EXPECT_EQ(w.size(), 5u + 4 * 8 + (4 + 3) * 32 * 8);
  ByteReader r(w.bytes());
  std::size_t c = 0;
  EXPECT_EQ(read_prompt_record(r, c), p);
  EXPECT_EQ(c, 20u);
  EXPECT_EQ(r.remaining(), 0u);
}

TEST_F(InitTest, CheckpointRecordBadMagic) {
  ByteWriter w;
  w.magic("OPRX1");
  ByteReader r(w.bytes());
  std::size_t c = 0;
  try {
    read_prompt_record(r, c);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::BadMagic);
  }
}

TEST(Gating, FrozenGroupGetsExactZerosAndSiblingUnchanged) {
  ModelConfig mc;
  mc.prompt.num_ranks = 5;
  mc.prompt.num_base_ranks = 3;
  mc.input_dim = 6;
  mc.hidden_dim = 8;
  mc.latent_dim = 8;
  mc.prompt.word_dim = 8;
  const Matrix x = random_matrix(4, 6, 1);
  const std::vector<std::size_t> y = {0, 2, 4, 1};

  Model both = make_model(mc, 3);
  const auto g_both = loss_and_gradients(both, x, y, 0.07).gradients;

  Model no_rank = both;
  no_rank.config.prompt.tune_rank = false;
  const auto g_nr = loss_and_gradients(no_rank, x, y, 0.07).gradients;
  EXPECT_EQ(g_nr.at(kRankParam), Matrix(3, 8, 0.0));
  EXPECT_EQ(g_nr.at(kContextParam), g_both.at(kContextParam));

  Model no_ctx = both;
  no_ctx.config.prompt.tune_ctx = false;
  const auto g_nc = loss_and_gradients(no_ctx, x, y, 0.07).gradients;
  EXPECT_EQ(g_nc.at(kContextParam), Matrix(4, 8, 0.0));
  EXPECT_EQ(g_nc.at(kRankParam), g_both.at(kRankParam));
}
