#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradient_checks.hpp"
#include "metaassist/weighting.hpp"

using namespace metaassist;

namespace {

constexpr SchemeKind kLearned[] = {SchemeKind::S1, SchemeKind::S2, SchemeKind::S3, SchemeKind::S3Decoupled};

WeightingScheme make(SchemeKind kind, std::size_t slots = 3, std::uint64_t seed = 1, double scale = 0.5) {
  if (kind == SchemeKind::S1) {
    auto w = WeightingScheme::slotwise(slots);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& p : w.parameters()) p = normal(rng);
    return w;
  }
  return WeightingScheme::instance_wise(kind, slots, 6, seed, scale);
}

}  // namespace

TEST(LossFeatures, Layout) {
  const auto h = loss_features(0.5, 2.0);
  EXPECT_EQ(h, (LossFeatures{0.5, 2.0, -1.5, 1.5, 2.5}));
  EXPECT_EQ(loss_features(0, 0), (LossFeatures{0, 0, 0, 0, 0}));
  EXPECT_THROW(loss_features(std::nan(""), 1.0), ConfigError);
  EXPECT_THROW(loss_features(1.0, INFINITY), ConfigError);
}

TEST(ComputeWeights, Examples) {
  const auto h = loss_features(1.3, 0.2);
  const auto s1 = compute_weights(WeightingScheme::slotwise(2), h, 1);
  EXPECT_DOUBLE_EQ(s1.pseudo, 0.5);
  EXPECT_DOUBLE_EQ(s1.vanilla, 0.5);
  const auto fixed = compute_weights(WeightingScheme::fixed_alpha(0.4), h, 0);
  EXPECT_DOUBLE_EQ(fixed.pseudo, 0.4);
  EXPECT_DOUBLE_EQ(fixed.vanilla, 0.6);
  auto s2 = WeightingScheme::instance_wise(SchemeKind::S2, 2, 4, 0);
  for (auto& p : s2.parameters()) p = 0.0;
  const auto w = compute_weights(s2, h, 0);
  EXPECT_DOUBLE_EQ(w.pseudo, 0.5);
  EXPECT_DOUBLE_EQ(w.vanilla, 0.5);
}

TEST(ComputeWeights, InitAlphaSetsEverySlot) {
  const auto w = WeightingScheme::slotwise(4, 0.2);
  for (std::size_t s = 0; s < 4; ++s) EXPECT_NEAR(compute_weights(w, loss_features(1, 1), s).pseudo, 0.2, 1e-15);
  EXPECT_THROW(WeightingScheme::slotwise(2, 0.0), ConfigError);
  EXPECT_THROW(WeightingScheme::slotwise(2, 1.0), ConfigError);
  EXPECT_THROW(WeightingScheme::fixed_alpha(1.5), ConfigError);
}

TEST(ComputeWeights, RangesAndComplementarity) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> loss(0.0, 80.0);
  for (auto kind : kLearned)
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto scheme = make(kind, 3, seed, 2.0);
      for (int t = 0; t < 50; ++t) {
        const auto w = compute_weights(scheme, loss_features(loss(rng), loss(rng)), seed % 3);
        EXPECT_GE(w.pseudo, 0.0);
        EXPECT_LE(w.pseudo, 1.0);
        EXPECT_GE(w.vanilla, 0.0);
        EXPECT_LE(w.vanilla, 1.0);
        if (scheme.sums_to_one()) { EXPECT_NEAR(w.pseudo + w.vanilla, 1.0, 1e-15); }
      }
    }
}

TEST(ComputeWeights, FeaturesAreClamped) {
  const auto s2 = make(SchemeKind::S2);
  const auto a = compute_weights(s2, loss_features(1e6, 1e6 + 10), 0);
  const auto b = compute_weights(s2, loss_features(1e7, 1e7 + 10), 0);
  EXPECT_EQ(a, b);
  EXPECT_NE(compute_weights(s2, loss_features(40, 50), 0), a);
}

TEST(ComputeWeights, SlotwiseIgnoresFeatures) {
  const auto w = make(SchemeKind::S1);
  EXPECT_EQ(compute_weights(w, loss_features(0.1, 9.0), 2), compute_weights(w, loss_features(7.0, 0.0), 2));
  EXPECT_NE(compute_weights(w, loss_features(1, 1), 0), compute_weights(w, loss_features(1, 1), 1));
}

TEST(ComputeWeights, InstanceWiseSharedAcrossSlots) {
  for (auto kind : {SchemeKind::S2, SchemeKind::S3, SchemeKind::S3Decoupled}) {
    const auto w = make(kind);
    EXPECT_EQ(compute_weights(w, loss_features(0.3, 2.0), 0), compute_weights(w, loss_features(0.3, 2.0), 2));
  }
}

TEST(ComputeWeights, DecoupledUsesOwnLossOnly) {
  const auto w = make(SchemeKind::S3Decoupled, 2, 3, 1.0);
  const auto base = compute_weights(w, loss_features(0.4, 1.7), 0);
  const auto other_vanilla = compute_weights(w, loss_features(3.1, 1.7), 0);
  const auto other_pseudo = compute_weights(w, loss_features(0.4, 0.2), 0);
  EXPECT_EQ(base.pseudo, other_vanilla.pseudo);
  EXPECT_NE(base.vanilla, other_vanilla.vanilla);
  EXPECT_EQ(base.vanilla, other_pseudo.vanilla);
  EXPECT_NE(base.pseudo, other_pseudo.pseudo);
}

TEST(ComputeWeights, MatchesReference) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> loss(0.0, 6.0);
  for (auto kind : kLearned) {
    const auto w = make(kind, 3, 5, 1.0);
    const auto H = static_cast<std::size_t>(std::max(w.hidden_width(), 0));
    for (int t = 0; t < 30; ++t) {
      const double lv = loss(rng), lp = loss(rng);
      const std::size_t s = static_cast<std::size_t>(t % 3);
      const auto got = compute_weights(w, loss_features(lv, lp), s);
      const auto want = ref::weights(kind, 0, ref::widen(w.parameters()), H, s, lv, lp);
      EXPECT_NEAR(got.pseudo, static_cast<double>(want.first), 1e-14);
      EXPECT_NEAR(got.vanilla, static_cast<double>(want.second), 1e-14);
    }
  }
}

TEST(CombineLabels, Examples) {
  EXPECT_EQ(combine_labels(2, 0, 3, {0.3, 0.7}), (std::vector<double>{0.7, 0.0, 0.3}));
  const auto same = combine_labels(1, 1, 3, {0.3, 0.7});
  EXPECT_DOUBLE_EQ(same[1], 1.0);
  EXPECT_EQ(same[0], 0.0);
  EXPECT_EQ(combine_labels(1, 1, 2, {0.0, 0.7}), (std::vector<double>{0.0, 0.7}));
  const std::vector<double> e0{1, 0, 0}, e2{0, 0, 1};
  EXPECT_EQ(combine_labels(e2, e0, {0.25, 0.5}), (std::vector<double>{0.5, 0.0, 0.25}));
  EXPECT_THROW(combine_labels(3, 0, 3, {0.5, 0.5}), ConfigError);
  EXPECT_THROW(combine_labels(std::vector<double>{1, 0}, e0, {0.5, 0.5}), ConfigError);
}

TEST(CombineLabels, MassEqualsWeightSum) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const WeightPair w{unit(rng), unit(rng)};
    const auto y = combine_labels(t % 4, (t / 4) % 4, 4, w);
    double sum = 0.0;
    for (double v : y) sum += v;
    EXPECT_NEAR(sum, w.pseudo + w.vanilla, 1e-15);
  }
}

TEST(BetaDecompose, Examples) {
  const auto a = beta_decompose({0.3, 0.3});
  EXPECT_DOUBLE_EQ(a.scale, 0.6);
  EXPECT_DOUBLE_EQ(a.beta, 0.5);
  const auto b = beta_decompose({0.75, 0.25});
  EXPECT_DOUBLE_EQ(b.scale, 1.0);
  EXPECT_DOUBLE_EQ(b.beta, 0.75);
  EXPECT_THROW(beta_decompose({0.0, 0.0}), ConfigError);
}

TEST(BetaDecompose, Reconstructs) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  for (int t = 0; t < 200; ++t) {
    const WeightPair w{unit(rng), unit(rng)};
    const auto d = beta_decompose(w);
    EXPECT_NEAR(d.scale * d.beta, w.pseudo, 1e-15);
    EXPECT_NEAR(d.scale * (1 - d.beta), w.vanilla, 1e-15);
    EXPECT_GE(d.beta, 0.0);
    EXPECT_LE(d.beta, 1.0);
  }
}

TEST(WeightJacobian, SlotwiseAtOrigin) {
  const auto w = WeightingScheme::slotwise(3);
  const auto j = weight_jacobian(w, loss_features(1, 2), 1);
  EXPECT_EQ(j.d_pseudo, (std::vector<double>{0.0, 0.25, 0.0}));
  EXPECT_EQ(j.d_vanilla, (std::vector<double>{0.0, -0.25, 0.0}));
  EXPECT_TRUE(weight_jacobian(WeightingScheme::fixed_alpha(0.2), loss_features(1, 2), 0).d_pseudo.empty());
}

TEST(WeightJacobian, MatchesFiniteDifferences) {
  double worst = 0.0;
  for (auto kind : kLearned)
    for (std::uint64_t seed = 0; seed < 15; ++seed)
      worst = std::max(worst, ref::weight_jacobian_error(ref::random_problem(seed, kind, Architecture::Linear), seed));
  EXPECT_LT(worst, 1e-6);
}

TEST(WeightJacobian, TwoHeadedBlocksAreSeparate) {
  for (auto kind : {SchemeKind::S3, SchemeKind::S3Decoupled}) {
    const auto w = make(kind, 2, 4, 1.0);
    const auto j = weight_jacobian(w, loss_features(0.7, 1.1), 0);
    const std::size_t split = w.second_block_offset();
    ASSERT_GT(split, 0u);
    ASSERT_LT(split, w.num_parameters());
    double own_p = 0.0, own_v = 0.0;
    for (std::size_t i = 0; i < w.num_parameters(); ++i) {
      if (i < split) {
        EXPECT_EQ(j.d_vanilla[i], 0.0);
        own_p += std::abs(j.d_pseudo[i]);
      } else {
        EXPECT_EQ(j.d_pseudo[i], 0.0);
        own_v += std::abs(j.d_vanilla[i]);
      }
    }
    EXPECT_GT(own_p, 0.0);
    EXPECT_GT(own_v, 0.0);
  }
}

TEST(WeightJacobian, ComplementarySchemesHaveOpposedRows) {
  for (auto kind : {SchemeKind::S1, SchemeKind::S2}) {
    const auto w = make(kind);
    const auto j = weight_jacobian(w, loss_features(0.9, 0.1), 2);
    for (std::size_t i = 0; i < j.d_pseudo.size(); ++i) EXPECT_EQ(j.d_pseudo[i], -j.d_vanilla[i]);
  }
}

TEST(InstanceWise, InitialisationShape) {
  const auto w = WeightingScheme::instance_wise(SchemeKind::S3, 4, 32, 9);
  EXPECT_EQ(w.num_parameters(), 2u * (32 * 5 + 2 * 32 + 1));
  const auto p = w.parameters();
  for (std::size_t b = 0; b < 2; ++b) {
    const std::size_t base = b * (32 * 5 + 2 * 32 + 1);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(p[base + 160 + i], 0.0);
    EXPECT_EQ(p[base + 160 + 64], 0.0);
  }
  EXPECT_EQ(WeightingScheme::instance_wise(SchemeKind::S3Decoupled, 4, 8, 9).num_parameters(), 2u * (8 + 16 + 1));
  EXPECT_EQ(w, WeightingScheme::instance_wise(SchemeKind::S3, 4, 32, 9));
  EXPECT_NE(w, WeightingScheme::instance_wise(SchemeKind::S3, 4, 32, 10));
  EXPECT_THROW(WeightingScheme::instance_wise(SchemeKind::S1, 4, 8, 0), ConfigError);
  EXPECT_THROW(WeightingScheme::instance_wise(SchemeKind::S2, 4, 0, 0), ConfigError);
}

TEST(SchemeCheckpoint, RoundTrip) {
  for (auto kind : kLearned) {
    const auto w = make(kind);
    EXPECT_EQ(scheme_from_json(Json::parse(scheme_to_json(w).dump())), w);
  }
  const auto f = WeightingScheme::fixed_alpha(0.35);
  EXPECT_EQ(scheme_from_json(scheme_to_json(f)), f);
}

TEST(SchemeCheckpoint, RejectsBadInput) {
  auto j = scheme_to_json(make(SchemeKind::S2));
  j["params"].erase(0);
  EXPECT_THROW(scheme_from_json(j), SchemaError);
  j["variant"] = "s9";
  EXPECT_THROW(scheme_from_json(j), ConfigError);
  j.erase("variant");
  EXPECT_THROW(scheme_from_json(j), ParseError);
}
