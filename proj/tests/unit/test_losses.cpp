#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "wsp/autodiff.hpp"
#include "wsp/error.hpp"
#include "wsp/gradcheck.hpp"
#include "wsp/losses.hpp"

namespace {

using wsp::BatchMeta;
using wsp::LossConfig;
using wsp::LossKind;
using wsp::Tape;
using wsp::Tensor;
using wsp::ViewMeta;

double loss_value(const Tensor& z, const BatchMeta& meta, LossConfig cfg, LossKind kind) {
  cfg.kind = kind;
  Tape tape;
  return wsp::contrastive_loss(tape.constant(z), meta, cfg).value()[0];
}

BatchMeta two_views_per_slice(const std::vector<int>& labels, const std::vector<double>& depths) {
  BatchMeta meta;
  const std::size_t n = labels.size();
  meta.views.resize(2 * n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto id = static_cast<std::int64_t>(s);
    meta.views[s] = ViewMeta{labels[s], depths[s], id, id};
    meta.views[n + s] = meta.views[s];
  }
  return meta;
}

Tensor identity_rows(std::size_t m) {
  Tensor z({m, m});
  for (std::size_t i = 0; i < m; ++i) z.at(i, i) = 1.0;
  return z;
}

TEST(SimilarityMatrixTest, OrthogonalRows) {
  Tape tape;
  Tensor s = wsp::similarity_matrix(tape.constant(identity_rows(3)), 1.0).value();
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(s.at(a, b), a == b ? 1.0 : 0.0);
  }
}

TEST(SimilarityMatrixTest, IdenticalRows) {
  Tape tape;
  Tensor s = wsp::similarity_matrix(tape.constant(Tensor::matrix({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}})), 0.5).value();
  for (double v : s.values()) EXPECT_NEAR(v, 2.0, 1e-15);
}

TEST(SimilarityMatrixTest, AntipodalRows) {
  Tape tape;
  Tensor s = wsp::similarity_matrix(tape.constant(Tensor::matrix({{1, 0}, {-1, 0}})), 1.0).value();
  EXPECT_EQ(s.at(0, 1), -1.0);
  EXPECT_EQ(s.at(1, 0), -1.0);
}

TEST(SimilarityMatrixTest, SymmetricWithDiagonalInverseTau) {
  wsp::Rng rng = wsp::make_rng(31);
  Tensor z = wsp::testing::random_unit_rows(rng, 7, 5);
  Tape tape;
  Tensor s = wsp::similarity_matrix(tape.constant(z), 0.1).value();
  for (std::size_t a = 0; a < 7; ++a) {
    EXPECT_NEAR(s.at(a, a), 10.0, 1e-9);
    for (std::size_t b = 0; b < 7; ++b) EXPECT_EQ(s.at(a, b), s.at(b, a));
  }
}

TEST(SimilarityMatrixTest, NonUnitRowsThrow) {
  Tape tape;
  EXPECT_THROW(wsp::similarity_matrix(tape.constant(Tensor::matrix({{1, 0}, {0, 2}})), 1.0), wsp::ContractError);
}

TEST(PositiveSetTest, Examples) {
  BatchMeta meta;
  meta.views = {{0, 0.1, 0, 0}, {0, 0.2, 1, 1}, {1, 0.3, 2, 2}};
  EXPECT_EQ(wsp::positive_set(meta, 0), (std::vector<std::size_t>{1}));
  meta.views[1].y = 1;
  meta.views[2].y = 2;
  EXPECT_TRUE(wsp::positive_set(meta, 0).empty());
  BatchMeta same;
  for (int i = 0; i < 6; ++i) same.views.push_back({4, 0.5, i, i});
  EXPECT_EQ(wsp::positive_set(same, 2), (std::vector<std::size_t>{0, 1, 3, 4, 5}));
  EXPECT_THROW(wsp::positive_set(same, 6), wsp::ContractError);
}

TEST(WspLossTest, OrthogonalEmbeddingsMatchOracleAndClosedForm) {
  BatchMeta meta = two_views_per_slice({0, 1}, {0.5, 0.5});
  Tensor z = identity_rows(4);
  LossConfig cfg;
  cfg.tau = 1.0;
  const double excl = loss_value(z, meta, cfg, LossKind::wsp);
  EXPECT_NEAR(excl, wsp::testing::brute_force_loss(z, meta, cfg), 1e-12);
  // Den(t,i) holds the two other-class views, each exp(0).
  EXPECT_NEAR(excl, std::log(2.0), 1e-12);

  cfg.denominator = wsp::DenominatorConvention::literal_paper;
  const double literal = loss_value(z, meta, cfg, LossKind::wsp);
  EXPECT_NEAR(literal, wsp::testing::brute_force_loss(z, meta, cfg), 1e-12);
  EXPECT_NEAR(literal, std::log(std::exp(1.0) + 2.0), 1e-12);
}

TEST(WspLossTest, MatchesBruteForceOnRandomBatches) {
  wsp::Rng rng = wsp::make_rng(32);
  std::uniform_int_distribution<std::size_t> slices(2, 6);
  std::uniform_real_distribution<double> sigma(0.02, 1.0);
  std::uniform_real_distribution<double> tau(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = slices(rng);
    BatchMeta meta = wsp::random_view_meta(rng, n, 3);
    Tensor z = wsp::testing::random_unit_rows(rng, 2 * n, 8);
    LossConfig cfg;
    cfg.sigma = sigma(rng);
    cfg.tau = tau(rng);
    cfg.denominator =
        trial % 2 ? wsp::DenominatorConvention::literal_paper : wsp::DenominatorConvention::exclude_anchor;
    for (LossKind kind : {LossKind::wsp, LossKind::supcon, LossKind::depth_aware, LossKind::infonce}) {
      cfg.kind = kind;
      EXPECT_NEAR(loss_value(z, meta, cfg, kind), wsp::testing::brute_force_loss(z, meta, cfg), 1e-12)
          << wsp::to_string(kind) << " trial " << trial;
    }
  }
}

TEST(WspLossTest, TooFewViewsThrows) {
  BatchMeta meta;
  meta.views = {{0, 0.5, 0, 0}};
  Tape tape;
  EXPECT_THROW(wsp::wsp_loss(tape.constant(Tensor::matrix({{1, 0}})), meta, LossConfig{}), wsp::ContractError);
}

TEST(WspLossTest, AnchorsWithoutPositivesAreSkipped) {
  // Slice 2 is the only class-2 slice; with one view it has no positive.
  BatchMeta meta;
  meta.views = {{0, 0.2, 0, 0}, {0, 0.2, 0, 0}, {1, 0.4, 1, 1}, {1, 0.4, 1, 1}, {2, 0.9, 2, 2}};
  wsp::Rng rng = wsp::make_rng(33);
  Tensor z = wsp::testing::random_unit_rows(rng, 5, 4);
  LossConfig cfg;
  const double full = loss_value(z, meta, cfg, LossKind::wsp);
  EXPECT_NEAR(full, wsp::testing::brute_force_loss(z, meta, cfg), 1e-12);
  EXPECT_TRUE(std::isfinite(full));
}

TEST(ReductionIdentityTest, EqualDepthsGiveSupCon) {
  wsp::Rng rng = wsp::make_rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    BatchMeta meta = wsp::random_view_meta(rng, 4, 3);
    for (auto& v : meta.views) v.d = 0.37;
    Tensor z = wsp::testing::random_unit_rows(rng, 8, 6);
    LossConfig cfg;
    EXPECT_NEAR(loss_value(z, meta, cfg, LossKind::wsp), loss_value(z, meta, cfg, LossKind::supcon), 1e-9);
  }
}

TEST(ReductionIdentityTest, EqualLabelsGiveDepthAware) {
  wsp::Rng rng = wsp::make_rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    BatchMeta meta = wsp::random_view_meta(rng, 4, 1);
    Tensor z = wsp::testing::random_unit_rows(rng, 8, 6);
    LossConfig cfg;
    cfg.sigma = 0.05 + 0.01 * trial;
    EXPECT_NEAR(loss_value(z, meta, cfg, LossKind::wsp), loss_value(z, meta, cfg, LossKind::depth_aware), 1e-9);
  }
}

TEST(ReductionIdentityTest, UniqueLabelPerSliceGivesInfoNce) {
  wsp::Rng rng = wsp::make_rng(36);
  std::uniform_real_distribution<double> depth(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels = {0, 1, 2, 3, 4};
    std::vector<double> depths;
    for (int i = 0; i < 5; ++i) depths.push_back(depth(rng));
    BatchMeta meta = two_views_per_slice(labels, depths);
    Tensor z = wsp::testing::random_unit_rows(rng, 10, 6);
    LossConfig cfg;
    EXPECT_NEAR(loss_value(z, meta, cfg, LossKind::wsp), loss_value(z, meta, cfg, LossKind::infonce), 1e-9);
  }
}

TEST(ReductionIdentityTest, HugeSigmaApproachesSupCon) {
  wsp::Rng rng = wsp::make_rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    BatchMeta meta = wsp::random_view_meta(rng, 4, 2);
    Tensor z = wsp::testing::random_unit_rows(rng, 8, 6);
    LossConfig cfg;
    cfg.sigma = 1e6;
    EXPECT_LT(std::abs(loss_value(z, meta, cfg, LossKind::wsp) - loss_value(z, meta, cfg, LossKind::supcon)), 1e-6);
  }
}

TEST(SupConLossTest, TwoIdenticalViews) {
  BatchMeta meta = two_views_per_slice({1}, {0.5});
  Tensor z = Tensor::matrix({{0.6, 0.8}, {0.6, 0.8}});
  LossConfig cfg;
  cfg.tau = 1.0;
  cfg.denominator = wsp::DenominatorConvention::literal_paper;
  // Den = {t}: -log(e^1 / e^1) = 0.
  EXPECT_NEAR(loss_value(z, meta, cfg, LossKind::supcon), 0.0, 1e-15);
  EXPECT_NEAR(loss_value(z, meta, cfg, LossKind::supcon), wsp::testing::brute_force_loss(z, meta, cfg), 1e-12);
  // Excluding the anchor leaves an empty denominator.
  cfg.denominator = wsp::DenominatorConvention::exclude_anchor;
  Tape tape;
  EXPECT_THROW(wsp::supcon_loss(tape.constant(z), meta, cfg), wsp::ContractError);
}

TEST(DepthAwareLossTest, HugeSigmaIsSingleClassSupCon) {
  wsp::Rng rng = wsp::make_rng(38);
  BatchMeta meta = wsp::random_view_meta(rng, 4, 3);
  BatchMeta single = meta;
  for (auto& v : single.views) v.y = 0;
  Tensor z = wsp::testing::random_unit_rows(rng, 8, 6);
  LossConfig cfg;
  cfg.sigma = 1e6;
  EXPECT_NEAR(loss_value(z, meta, cfg, LossKind::depth_aware), loss_value(z, single, cfg, LossKind::supcon), 1e-6);
}

TEST(DepthAwareLossTest, SiblingWeightIsOneForTwoViews) {
  BatchMeta meta = two_views_per_slice({0}, {0.4});
  LossConfig cfg;
  cfg.kind = LossKind::depth_aware;
  Tensor w = wsp::positive_weights(meta, cfg);
  EXPECT_EQ(w.at(0, 1), 1.0);
  EXPECT_EQ(w.at(1, 0), 1.0);
  EXPECT_EQ(w.at(0, 0), 0.0);
}

TEST(InfoNceLossTest, IdenticalSiblingsOrthogonalOthers) {
  BatchMeta meta;
  meta.views = {{0, 0.1, 0, 0}, {0, 0.1, 0, 0}, {1, 0.7, 1, 1}, {1, 0.7, 1, 1}};
  Tensor z({4, 3});
  z.at(0, 0) = 1.0;
  z.at(1, 0) = 1.0;
  z.at(2, 1) = 1.0;
  z.at(3, 2) = 1.0;
  LossConfig cfg;
  cfg.tau = 1.0;
  const double value = loss_value(z, meta, cfg, LossKind::infonce);
  EXPECT_NEAR(value, wsp::testing::brute_force_loss(z, meta, cfg), 1e-12);
  // Anchors 0,1: -log(e / 2). Anchors 2,3: -log(1 / 2).
  EXPECT_NEAR(value, std::log(2.0) - 0.5, 1e-12);
}

TEST(InfoNceLossTest, DecreasesAsSiblingSimilarityGrows) {
  BatchMeta meta;
  meta.views = {{0, 0.1, 0, 0}, {1, 0.5, 1, 1}, {0, 0.1, 0, 0}, {1, 0.5, 1, 1}};
  auto batch = [](double angle) {
    Tensor z({4, 3});
    z.at(0, 0) = 1.0;
    z.at(1, 1) = 1.0;
    z.at(2, 0) = std::cos(angle);
    z.at(2, 2) = std::sin(angle);
    z.at(3, 1) = 1.0;
    return z;
  };
  LossConfig cfg;
  EXPECT_LT(loss_value(batch(0.2), meta, cfg, LossKind::infonce), loss_value(batch(1.2), meta, cfg, LossKind::infonce));
}

TEST(InfoNceLossTest, MissingSiblingThrows) {
  BatchMeta meta;
  meta.views = {{0, 0.1, 0, 0}, {0, 0.1, 0, 0}, {1, 0.5, 1, 1}};
  Tape tape;
  EXPECT_THROW(wsp::infonce_loss(tape.constant(identity_rows(3)), meta, LossConfig{}), wsp::ContractError);
}

TEST(LossPropertiesTest, PermutationInvariance) {
  wsp::Rng rng = wsp::make_rng(39);
  for (int trial = 0; trial < 20; ++trial) {
    BatchMeta meta = wsp::random_view_meta(rng, 5, 3);
    Tensor z = wsp::testing::random_unit_rows(rng, 10, 7);
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    BatchMeta pmeta;
    Tensor pz({10, 7});
    for (std::size_t r = 0; r < 10; ++r) {
      pmeta.views.push_back(meta.views[perm[r]]);
      for (std::size_t c = 0; c < 7; ++c) pz.at(r, c) = z.at(perm[r], c);
    }
    LossConfig cfg;
    for (LossKind kind : {LossKind::wsp, LossKind::supcon, LossKind::depth_aware, LossKind::infonce}) {
      EXPECT_NEAR(loss_value(z, meta, cfg, kind), loss_value(pz, pmeta, cfg, kind), 1e-9);
    }
  }
}

TEST(LossPropertiesTest, GradientsMatchFiniteDifferences) {
  for (const auto& r : wsp::gradcheck_all_losses(40, 20, 1e-5)) {
    EXPECT_LT(r.max_rel_error, 1e-5) << wsp::to_string(r.kind);
  }
}

TEST(LossPropertiesTest, SignOfInfluenceOnSimilarities) {
  wsp::Rng rng = wsp::make_rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    BatchMeta meta = wsp::random_view_meta(rng, 4, 3);
    Tensor z = wsp::testing::random_unit_rows(rng, 8, 5);
    LossConfig cfg;
    Tensor weights = wsp::positive_weights(meta, cfg);
    {
      Tape tape;
      wsp::Var s = tape.parameter(wsp::similarity_matrix(tape.constant(z), cfg.tau).value());
      tape.backward(wsp::weighted_contrastive_loss(s, weights, cfg.denominator));
      Tensor g = tape.grad(s);
      for (std::size_t t = 0; t < 8; ++t) {
        for (std::size_t j = 0; j < 8; ++j) {
          if (j != t && meta.views[t].y != meta.views[j].y) EXPECT_GE(g.at(t, j), 0.0);
        }
      }
    }
    // A single weighted term: -w log(exp(s_ti) / Den(t,i)) falls as s_ti grows.
    for (std::size_t t = 0; t < 8; ++t) {
      for (std::size_t i = 0; i < 8; ++i) {
        if (weights.at(t, i) <= 0.0) continue;
        Tensor single({8, 8});
        single.at(t, i) = weights.at(t, i);
        Tape tape;
        wsp::Var s = tape.parameter(wsp::similarity_matrix(tape.constant(z), cfg.tau).value());
        tape.backward(wsp::weighted_contrastive_loss(s, single, cfg.denominator));
        EXPECT_LT(tape.grad(s).at(t, i), 0.0);
      }
    }
  }
}

TEST(LossPropertiesTest, TemperatureFoldsIntoSimilarities) {
  wsp::Rng rng = wsp::make_rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    BatchMeta meta = wsp::random_view_meta(rng, 4, 2);
    Tensor z = wsp::testing::random_unit_rows(rng, 8, 6);
    LossConfig cfg;
    cfg.tau = 0.07 + 0.02 * trial;
    Tape tape;
    wsp::Var zv = tape.constant(z);
    const double direct = wsp::wsp_loss(zv, meta, cfg).value()[0];
    wsp::Var prescaled = wsp::mul_const(wsp::similarity_matrix(zv, 1.0), 1.0 / cfg.tau);
    const double folded = wsp::weighted_contrastive_loss(prescaled, wsp::positive_weights(meta, cfg), cfg.denominator)
                              .value()[0];
    EXPECT_NEAR(direct, folded, 1e-12);
  }
}

TEST(LossConfigTest, ValidationAndNames) {
  LossConfig cfg;
  cfg.tau = 0.0;
  EXPECT_THROW(cfg.validate(), wsp::ConfigError);
  cfg.tau = 0.1;
  cfg.sigma = -1.0;
  EXPECT_THROW(cfg.validate(), wsp::ConfigError);
  for (LossKind kind : {LossKind::wsp, LossKind::supcon, LossKind::depth_aware, LossKind::infonce}) {
    EXPECT_EQ(wsp::loss_kind_from_string(wsp::to_string(kind)), kind);
  }
  EXPECT_EQ(wsp::loss_kind_from_string("depth"), LossKind::depth_aware);
  EXPECT_THROW(wsp::loss_kind_from_string("byol"), wsp::ConfigError);
  EXPECT_THROW(wsp::denominator_from_string("both"), wsp::ConfigError);
}

TEST(BatchMetaTest, ViewsOfOneSliceMustAgree) {
  BatchMeta meta;
  meta.views = {{0, 0.5, 3, 1}, {1, 0.5, 3, 1}};
  EXPECT_THROW(meta.validate(), wsp::ContractError);
  meta.views[1].y = 0;
  EXPECT_NO_THROW(meta.validate());
  meta.views[1].d = 1.5;
  EXPECT_THROW(meta.validate(), wsp::Error);
}

}  // namespace
