#include <gtest/gtest.h>

#include <vector>

#include "tconst/const_state.hpp"
#include "tconst/engine.hpp"
#include "tconst/errors.hpp"
#include "tconst/model.hpp"
#include "tconst/rng.hpp"

using namespace tconst;

namespace {

std::vector<TokenId> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
  return ids;
}

std::vector<std::vector<KVPair>> one_row_per_layer(const ModelConfig& c, float value) {
  std::vector<std::vector<KVPair>> rows(c.n_blocks);
  for (auto& block : rows) {
    for (std::size_t l = 0; l < c.gen_layers(); ++l) {
      block.push_back({Tensor::matrix(1, c.d_model, value), Tensor::matrix(1, c.d_model, -value)});
    }
  }
  return rows;
}

}  // namespace

TEST(ConstState, AppendAdvancesPhase) {
  ConstState s(toy_config());
  EXPECT_EQ(s.fill(), 0u);
  append_gen_token(s, one_row_per_layer(s.config, 1.0f));
  EXPECT_EQ(s.fill(), 1u);
  for (std::size_t i = 1; i < s.config.gen_window; ++i) append_gen_token(s, one_row_per_layer(s.config, 2.0f));
  EXPECT_EQ(s.fill(), s.config.gen_window);
  EXPECT_THROW(append_gen_token(s, one_row_per_layer(s.config, 3.0f)), WindowOverflowError);
}

TEST(ConstState, AppendDoesNotChangeHeldElements) {
  ConstState s(toy_config());
  const auto before = memory_report(s).cached_elements;
  append_gen_token(s, one_row_per_layer(s.config, 1.0f));
  append_gen_token(s, one_row_per_layer(s.config, 1.0f));
  EXPECT_EQ(memory_report(s).cached_elements, before);
}

TEST(ConstState, ToyMemory) {
  const ConstState s(toy_config());
  const MemoryReport r = memory_report(s);
  EXPECT_EQ(r.cached_elements, 448u);
  EXPECT_EQ(r.bytes, 1792u);
  EXPECT_EQ(tconst_cache_bytes_formula(toy_config()), 1792u);
}

TEST(ConstState, PrimeBoundaries) {
  ModelConfig c = toy_config();
  ConstState s(c);
  prime(s, std::vector<TokenId>(3, 0));
  EXPECT_EQ(s.sync_boundary, 0u);
  prime(s, std::vector<TokenId>(8, 0));
  EXPECT_EQ(s.sync_boundary, 4u);
  prime(s, std::vector<TokenId>(9, 0));
  EXPECT_EQ(s.sync_boundary, 8u);
  EXPECT_THROW(prime(s, std::vector<TokenId>{}), ContractError);

  c.history_window = 256;
  c.gen_window = 256;
  ConstState big(c);
  prime(big, std::vector<TokenId>(1000, 0));
  EXPECT_EQ(big.sync_boundary, 768u);
  EXPECT_EQ(big.history.size() - big.sync_boundary, 232u);
}

TEST(ConstState, SyncStepDetection) {
  Rng rng(1);
  const TConstModel m = build_tconst(toy_config(), rng);
  TConstSession s(m);
  s.prime(random_ids(rng, 8, 11));
  // Prime stores history; the first step is the full pass.
  EXPECT_FALSE(is_sync_step(s.state()));
  CostLedger meter;
  s.step(meter);  // window holds 4 rows, pending token is position 8
  EXPECT_EQ(s.state().fill(), 4u);
  EXPECT_TRUE(is_sync_step(s.state()));
  s.step(meter);
  EXPECT_EQ(s.state().fill(), 1u);
  EXPECT_FALSE(is_sync_step(s.state()));
  s.step(meter);
  s.step(meter);
  EXPECT_EQ(s.state().fill(), 3u);
  EXPECT_TRUE(is_sync_step(s.state()));
}

TEST(ConstState, OneSyncPerWindow) {
  Rng rng(2);
  const TConstModel m = build_tconst(toy_config(), rng);
  TConstSession s(m);
  s.prime(random_ids(rng, 1, 11));
  CostLedger meter;
  s.generate(3 * 4, meter);
  EXPECT_EQ(s.state().sync_count, 3u);
  EXPECT_EQ(s.state().sync_boundary, 12u);
}

TEST(ConstState, SyncMidWindowIsLifecycleError) {
  Rng rng(3);
  const TConstModel m = build_tconst(toy_config(), rng);
  ConstState s(m.config);
  prime(s, random_ids(rng, 10, 11));
  append_gen_token(s, one_row_per_layer(s.config, 1.0f));
  CostLedger meter;
  EXPECT_THROW(sync(s, m, meter), LifecycleError);
}

TEST(ConstState, ContextAfterSyncEqualsRecompute) {
  Rng rng(4);
  const TConstModel m = build_tconst(toy_config(), rng);
  TConstSession s(m);
  s.prime(random_ids(rng, 10, 11));
  CostLedger meter;
  s.generate(6, meter);
  ASSERT_GT(s.state().sync_count, 0u);
  const std::size_t b = s.state().sync_boundary;
  CostLedger scratch;
  const auto fresh =
      context_kv_for_history(m, std::span<const TokenId>(s.state().history).first(b), scratch);
  ASSERT_EQ(fresh[0].size(), s.state().ctx_kv[0].size());
  for (std::size_t l = 0; l < fresh[0].size(); ++l) {
    EXPECT_TRUE(fresh[0][l].k.bitwise_equal(s.state().ctx_kv[0][l].k));
    EXPECT_TRUE(fresh[0][l].v.bitwise_equal(s.state().ctx_kv[0][l].v));
  }
}

TEST(ConstState, BytesIndependentOfPromptLength) {
  Rng rng(5);
  const TConstModel m = build_tconst(toy_config(), rng);
  std::vector<std::uint64_t> bytes;
  for (std::size_t n : {10000u, 100000u}) {
    TConstSession s(m);
    s.prime(random_ids(rng, n, 11));
    CostLedger meter;
    meter.set_keep_records(false);
    s.generate(1, meter);
    bytes.push_back(s.memory().bytes);
  }
  EXPECT_EQ(bytes[0], 1792u);
  EXPECT_EQ(bytes[1], 1792u);
}

TEST(BaselineCache, GrowsByOneRowPerLayer) {
  ModelConfig c = toy_config();
  c.n_layers_baseline = 2;
  BaselineCache cache(c);
  for (std::size_t t = 1; t <= 16; ++t) {
    for (std::size_t l = 0; l < 2; ++l) {
      cache.append(l, Tensor::matrix(1, 8, static_cast<float>(t)), Tensor::matrix(1, 8, -static_cast<float>(t)));
    }
    EXPECT_EQ(cache.length(), t);
    EXPECT_EQ(memory_report(cache, c).bytes, baseline_cache_bytes_formula(t, c));
  }
  EXPECT_EQ(memory_report(cache, c).bytes, 2048u);
  EXPECT_EQ(cache.keys(1).row(15)[0], 16.0f);
  EXPECT_EQ(cache.values(0).row(0)[3], -1.0f);
  cache.clear();
  EXPECT_EQ(cache.stored_elements(), 0u);
}
