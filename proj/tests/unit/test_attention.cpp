#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tconst/attention.hpp"
#include "tconst/errors.hpp"
#include "tconst/rng.hpp"

using namespace tconst;

namespace {

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = Tensor::matrix(rows, cols);
  for (float& v : t.values()) v = rng.uniform(-1.0f, 1.0f);
  return t;
}

ProjectionSet random_projections(Rng& rng, std::size_t d) {
  return {random_tensor(rng, d, d), random_tensor(rng, d, d), random_tensor(rng, d, d), random_tensor(rng, d, d)};
}

const CostTag kTag{AttnKind::GenCausal, 0, 0};

}  // namespace

TEST(Attention, SingleKeyReturnsItsValue) {
  const AttentionSpec spec{4, 2};
  const Tensor q = Tensor::from_rows({{1, 2, 3, 4}});
  const Tensor k = Tensor::from_rows({{-1, 0, 5, 2}});
  const Tensor v = Tensor::from_rows({{0.5f, -2, 7, 1}});
  CostLedger meter;
  const Tensor out = scaled_dot_attention(q.view(), k.view(), v.view(), AttentionMask::none(), spec, meter, kTag);
  EXPECT_TRUE(out.bitwise_equal(v));
  EXPECT_EQ(meter.total(), 4u);
}

TEST(Attention, EqualScoresAverageValues) {
  const AttentionSpec spec{2, 1};
  const Tensor q = Tensor::from_rows({{0, 0}});
  const Tensor k = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor v = Tensor::from_rows({{2, 0}, {0, 4}});
  CostLedger meter;
  const Tensor out = scaled_dot_attention(q.view(), k.view(), v.view(), AttentionMask::none(), spec, meter, kTag);
  EXPECT_FLOAT_EQ(out.at(0, 0), 1.0f);
  EXPECT_FLOAT_EQ(out.at(0, 1), 2.0f);
}

TEST(Attention, MeterRecordsDTimesLqTimesLk) {
  Rng rng(1);
  const AttentionSpec spec{8, 2};
  const Tensor q = random_tensor(rng, 3, 8);
  const Tensor kv = random_tensor(rng, 5, 8);
  CostLedger meter;
  scaled_dot_attention(q.view(), kv.view(), kv.view(), AttentionMask::none(), spec, meter, kTag);
  EXPECT_EQ(meter.total(), 120u);
  ASSERT_EQ(meter.records().size(), 1u);
  EXPECT_EQ(meter.records()[0].lq, 3u);
  EXPECT_EQ(meter.records()[0].lk, 5u);
}

TEST(Attention, CausalStillCountsTheFullSquare) {
  Rng rng(2);
  const AttentionSpec spec{8, 2};
  const Tensor x = random_tensor(rng, 6, 8);
  CostLedger meter;
  scaled_dot_attention(x.view(), x.view(), x.view(), AttentionMask::causal(), spec, meter, kTag);
  EXPECT_EQ(meter.total(), 8u * 6u * 6u);
}

TEST(Attention, ErrorsOnEmptyKeysAndMaskedRows) {
  const AttentionSpec spec{2, 1};
  const Tensor q = Tensor::matrix(2, 2);
  const Tensor empty = Tensor::matrix(0, 2);
  CostLedger meter;
  EXPECT_THROW(scaled_dot_attention(q.view(), empty.view(), empty.view(), AttentionMask::none(), spec, meter, kTag),
               ContractError);
  const Tensor k = Tensor::matrix(3, 2);
  BoolMask mask(2, 3, true);
  for (std::size_t j = 0; j < 3; ++j) mask.set(1, j, false);
  EXPECT_THROW(scaled_dot_attention(q.view(), k.view(), k.view(), AttentionMask::explicit_mask(mask), spec, meter,
                                    kTag),
               ContractError);
  EXPECT_THROW(scaled_dot_attention(q.view(), k.view(), Tensor::matrix(2, 2).view(), AttentionMask::none(), spec,
                                    meter, kTag),
               ContractError);
}

TEST(CausalMask, Shapes) {
  const BoolMask one = causal_mask(1);
  EXPECT_TRUE(one.allowed(0, 0));
  const BoolMask three = causal_mask(3);
  EXPECT_EQ(three.count_allowed(), 6u);
  EXPECT_FALSE(three.allowed(0, 1));
  EXPECT_TRUE(three.allowed(2, 0));
  const BoolMask big = causal_mask(32);
  for (std::size_t i = 0; i < 32; ++i) {
    for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(big.allowed(i, j), j <= i);
  }
}

TEST(CausalMask, PrefixMatchesExplicitBitwise) {
  Rng rng(3);
  const AttentionSpec spec{8, 4};
  for (std::size_t len : {1u, 2u, 7u, 16u}) {
    const Tensor x = random_tensor(rng, len, 8);
    const Tensor k = random_tensor(rng, len, 8);
    const Tensor v = random_tensor(rng, len, 8);
    CostLedger meter;
    const BoolMask mask = causal_mask(len);
    const Tensor a = scaled_dot_attention(x.view(), k.view(), v.view(), AttentionMask::causal(), spec, meter, kTag);
    const Tensor b =
        scaled_dot_attention(x.view(), k.view(), v.view(), AttentionMask::explicit_mask(mask), spec, meter, kTag);
    EXPECT_TRUE(a.bitwise_equal(b)) << "len " << len;
  }
}

TEST(CausalMask, LaterTokensDoNotLeakBackward) {
  Rng rng(4);
  const AttentionSpec spec{8, 2};
  const ProjectionSet w = random_projections(rng, 8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t len = 2 + rng.below(12);
    Tensor x = random_tensor(rng, len, 8);
    const std::size_t j = rng.below(len);
    CostLedger meter;
    const Tensor before = self_attention(x.view(), w, AttentionMask::causal(), spec, meter, kTag);
    for (std::size_t c = 0; c < 8; ++c) x.at(j, c) += 1.5f;
    const Tensor after = self_attention(x.view(), w, AttentionMask::causal(), spec, meter, kTag);
    EXPECT_TRUE(before.slice_rows(0, j).bitwise_equal(after.slice_rows(0, j)));
    EXPECT_FALSE(before.slice_rows(j, len).bitwise_equal(after.slice_rows(j, len)));
  }
}

TEST(FocusedAttention, OutputRowsEqualLatentCount) {
  Rng rng(5);
  const std::size_t d = 8;
  const std::size_t woh = 4;
  const AttentionSpec spec{d, 2};
  const Tensor latents = random_tensor(rng, woh, d);
  const ProjectionSet w = random_projections(rng, d);
  for (std::size_t lk : {1u, 10u, 10000u}) {
    const Tensor x = random_tensor(rng, lk, d);
    CostLedger meter;
    const Tensor out = focused_attention(latents, x.view(), w, spec, meter, {AttnKind::Focused, 0, 0});
    EXPECT_EQ(out.rows(), woh);
    EXPECT_EQ(out.cols(), d);
    EXPECT_EQ(meter.total(), d * lk * woh);
    EXPECT_TRUE(out.all_finite());
  }
}

TEST(FocusedAttention, EmptyHistoryThrows) {
  Rng rng(6);
  const AttentionSpec spec{8, 2};
  const Tensor latents = random_tensor(rng, 4, 8);
  CostLedger meter;
  EXPECT_THROW(focused_attention(latents, Tensor::matrix(0, 8).view(), random_projections(rng, 8), spec, meter, kTag),
               ContractError);
}

TEST(CrossAttention, CachedProjectionsMatchRecompute) {
  Rng rng(7);
  const AttentionSpec spec{8, 2};
  const ProjectionSet w = random_projections(rng, 8);
  const Tensor q = random_tensor(rng, 3, 8);
  const Tensor ctx = random_tensor(rng, 4, 8);
  CostLedger meter;
  const KVPair cached = project_kv(ctx.view(), w, meter);
  const Tensor a = cross_attention(q.view(), ctx.view(), w, spec, meter, kTag);
  const Tensor b = cross_attention(q.view(), ctx.view(), w, spec, meter, kTag, &cached);
  EXPECT_TRUE(a.bitwise_equal(b));
}

TEST(CrossAttention, WidthMismatchThrows) {
  Rng rng(8);
  const AttentionSpec spec{8, 2};
  CostLedger meter;
  EXPECT_THROW(cross_attention(Tensor::matrix(1, 6).view(), Tensor::matrix(2, 8).view(), random_projections(rng, 8),
                               spec, meter, kTag),
               ContractError);
}

TEST(AttentionSpec, HeadsMustDivideWidth) {
  EXPECT_THROW((AttentionSpec{6, 4}.validate()), ConfigError);
  EXPECT_THROW((AttentionSpec{8, 0}.validate()), ConfigError);
  EXPECT_NO_THROW((AttentionSpec{8, 4}.validate()));
}

// Unmasked attention without positions is a function of the key/value set:
// permuting rows permutes outputs. The oracle evaluates rows in canonical
// (sorted) key order and compares against every permutation.
TEST(SelfAttention, PermutationEquivariantWithoutPositions) {
  Rng rng(9);
  const AttentionSpec spec{4, 1};
  const ProjectionSet w = random_projections(rng, 4);
  for (std::size_t len = 1; len <= 4; ++len) {
    const Tensor x = random_tensor(rng, len, 4);
    CostLedger meter;
    const Tensor base = self_attention(x.view(), w, AttentionMask::none(), spec, meter, kTag);
    std::vector<std::size_t> perm(len);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      Tensor px = Tensor::matrix(len, 4);
      for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t c = 0; c < 4; ++c) px.at(i, c) = x.at(perm[i], c);
      }
      const Tensor out = self_attention(px.view(), w, AttentionMask::none(), spec, meter, kTag);
      for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out.at(i, c), base.at(perm[i], c), 1e-5f);
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(CostLedger, ShadowCounterMatches) {
  Rng rng(10);
  const AttentionSpec spec{8, 2};
  const ProjectionSet w = random_projections(rng, 8);
  CostLedger meter;
  std::uint64_t shadow = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t lq = 1 + rng.below(9);
    const std::size_t lk = 1 + rng.below(9);
    const Tensor q = random_tensor(rng, lq, 8);
    const Tensor ctx = random_tensor(rng, lk, 8);
    cross_attention(q.view(), ctx.view(), w, spec, meter, kTag);
    shadow += 8 * lq * lk;
  }
  EXPECT_EQ(meter.total(), shadow);
  EXPECT_EQ(meter.records().size(), 30u);
}
