#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "tconst/config.hpp"
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

Tensor random_rows(Rng& rng, std::size_t rows, std::size_t d) {
  Tensor t = Tensor::matrix(rows, d);
  for (float& v : t.values()) v = rng.uniform(-1.0f, 1.0f);
  return t;
}

// Test-local shape sum, written out layer by layer.
std::uint64_t oracle_tconst_params(const ModelConfig& c) {
  const std::uint64_t d = c.d_model;
  const std::uint64_t ln = 2 * d;
  const std::uint64_t proj = 4 * d * d;
  const std::uint64_t ffn = 2 * c.ffn_mult * d * d;
  std::uint64_t n = c.vocab * d + ln;
  if (!c.tie_embeddings) n += c.vocab * d;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    n += c.history_window * d;  // latents
    n += ln + proj;             // focused
    for (std::size_t i = 0; i < c.ctx_layers; ++i) n += ln + proj;
    if (b + 1 < c.n_blocks || c.final_restore) n += 2 * ln + proj;
    for (std::size_t l = 0; l < c.ctx_layers + 2; ++l) {
      n += ln + proj + ln + ffn;
      if (l > 0) n += ln + proj;
    }
  }
  return n;
}

std::uint64_t oracle_baseline_params(const ModelConfig& c) {
  const std::uint64_t d = c.d_model;
  std::uint64_t n = c.vocab * d * (c.tie_embeddings ? 1 : 2) + 2 * d;
  for (std::size_t l = 0; l < c.n_layers_baseline; ++l) n += 4 * d + 4 * d * d + 2 * c.ffn_mult * d * d;
  return n;
}

}  // namespace

TEST(Build, LastBlockRestoreFollowsFlag) {
  ModelConfig c = toy_config();
  c.n_blocks = 2;
  c.final_restore = false;
  Rng rng(1);
  const TConstModel m = build_tconst(c, rng);
  ASSERT_EQ(m.blocks.size(), 2u);
  EXPECT_TRUE(m.blocks[0].ctx.restore.has_value());
  EXPECT_FALSE(m.blocks[1].ctx.restore.has_value());
  EXPECT_EQ(m.blocks[0].gen.size(), 4u);
  EXPECT_FALSE(m.blocks[0].gen[0].cross.has_value());
  EXPECT_TRUE(m.blocks[0].gen[3].cross.has_value());
  EXPECT_EQ(m.blocks[0].ctx.latents.rows(), 4u);
}

TEST(Build, SameSeedSameWeights) {
  const ModelConfig c = toy_config();
  Rng a(5), b(5), other(6);
  const TConstModel x = build_tconst(c, a);
  const TConstModel y = build_tconst(c, b);
  const TConstModel z = build_tconst(c, other);
  EXPECT_TRUE(x.embedding.bitwise_equal(y.embedding));
  EXPECT_TRUE(x.blocks[0].gen[2].ffn.w_out.bitwise_equal(y.blocks[0].gen[2].ffn.w_out));
  EXPECT_FALSE(x.embedding.bitwise_equal(z.embedding));
}

TEST(Params, ToySingleLayerBaseline) {
  ModelConfig c = toy_config();
  c.n_layers_baseline = 1;
  Rng rng(0);
  EXPECT_EQ(count_parameters(build_baseline(c, rng)), 904u);
}

TEST(Params, ToyDefaults) {
  Rng rng(0);
  EXPECT_EQ(count_parameters(build_tconst(toy_config(), rng)), 5256u);
  EXPECT_EQ(count_parameters(build_baseline(toy_config(), rng)), 3304u);
}

TEST(Params, FortyOneMBaselineInRange) {
  const ModelConfig c = preset("paper-41m-tconst-2k-512-0.5");
  const std::uint64_t base = oracle_baseline_params(c);
  EXPECT_EQ(base, 39641616u);
  EXPECT_GE(base, 39000000u);
  EXPECT_LE(base, 43000000u);
  EXPECT_EQ(oracle_tconst_params(c), 50327568u);
}

TEST(Params, RandomConfigsMatchShapeSum) {
  Rng cfg_rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    ModelConfig c;
    c.d_model = 2 * (1 + cfg_rng.below(6));
    c.n_heads = 1;
    c.vocab = 1 + cfg_rng.below(30);
    c.ctx_layers = cfg_rng.below(4);
    c.history_window = 1 + cfg_rng.below(6);
    c.gen_window = 1 + cfg_rng.below(6);
    c.n_blocks = 1 + cfg_rng.below(3);
    c.n_layers_baseline = 1 + cfg_rng.below(4);
    c.ffn_mult = 1 + cfg_rng.below(4);
    c.tie_embeddings = cfg_rng.below(2) == 0;
    c.final_restore = cfg_rng.below(2) == 0;
    Rng rng(trial);
    EXPECT_EQ(count_parameters(build_tconst(c, rng)), oracle_tconst_params(c)) << "trial " << trial;
    EXPECT_EQ(count_parameters(build_baseline(c, rng)), oracle_baseline_params(c)) << "trial " << trial;
  }
}

TEST(Params, VisitorNamesAreUnique) {
  ModelConfig c = toy_config();
  c.n_blocks = 2;
  Rng rng(0);
  std::set<std::string> names;
  std::size_t visits = 0;
  for_each_parameter(build_tconst(c, rng), [&](const std::string& name, const Tensor&) {
    names.insert(name);
    ++visits;
  });
  EXPECT_EQ(names.size(), visits);
  EXPECT_TRUE(names.count("blocks.1.gen.1.cross.attn.wq"));
}

TEST(ContextPath, SingleRowHistory) {
  Rng rng(3);
  const TConstModel m = build_tconst(toy_config(), rng);
  const Tensor h = random_rows(rng, 1, 8);
  CostLedger meter;
  const ContextOutput out = context_path_forward(m, 0, h.view(), meter);
  ASSERT_EQ(out.levels.size(), 3u);
  for (const auto& level : out.levels) EXPECT_EQ(level.rows(), 4u);
  ASSERT_TRUE(out.restored.has_value());
  EXPECT_EQ(out.restored->rows(), 1u);
}

TEST(ContextPath, CostForTwelveRows) {
  Rng rng(4);
  const TConstModel m = build_tconst(toy_config(), rng);
  CostLedger meter;
  context_path_forward(m, 0, random_rows(rng, 12, 8).view(), meter);
  EXPECT_EQ(meter.total(), 1024u);
  EXPECT_EQ(context_path_cost(toy_config(), 12, true), meter.total());
}

TEST(ContextPath, EmptyHistoryThrows) {
  Rng rng(4);
  const TConstModel m = build_tconst(toy_config(), rng);
  CostLedger meter;
  EXPECT_THROW(context_path_forward(m, 0, Tensor::matrix(0, 8).view(), meter), ContractError);
}

TEST(GenerationPath, NoHistoryMeansNoCrossTerm) {
  Rng rng(6);
  const TConstModel m = build_tconst(toy_config(), rng);
  const auto ids = random_ids(rng, 3, m.config.vocab);
  CostLedger meter;
  forward_window(m, ids, 0, meter);
  for (const auto& r : meter.records()) EXPECT_NE(r.tag.kind, AttnKind::GenCross);
  EXPECT_EQ(meter.total(), 4u * 8u * 3u * 3u);
}

TEST(GenerationPath, IncrementalMatchesFullBitwise) {
  Rng rng(7);
  const TConstModel m = build_tconst(toy_config(), rng);
  const auto hist = random_ids(rng, 9, m.config.vocab);
  CostLedger meter;
  const auto ctx = context_kv_for_history(m, hist, meter);
  const Tensor x = random_rows(rng, 4, 8);

  auto full_windows = make_gen_windows(m.config);
  const Tensor full = generation_path_forward(m, 0, x, ctx[0], full_windows, 0, meter);

  auto windows = make_gen_windows(m.config);
  for (std::size_t r = 0; r < 4; ++r) {
    const Tensor row = generation_path_forward(m, 0, x.slice_rows(r, r + 1), ctx[0], windows, r, meter);
    EXPECT_TRUE(row.bitwise_equal(full.slice_rows(r, r + 1))) << "row " << r;
  }
}

TEST(GenerationPath, CrossUnitsPerWindow) {
  Rng rng(8);
  const TConstModel m = build_tconst(toy_config(), rng);
  CostLedger ctx_meter;
  const auto ctx = context_kv_for_history(m, random_ids(rng, 5, m.config.vocab), ctx_meter);
  auto windows = make_gen_windows(m.config);
  CostLedger meter;
  generation_path_forward(m, 0, random_rows(rng, 4, 8), ctx[0], windows, 0, meter);
  std::uint64_t cross = 0;
  for (const auto& r : meter.records()) {
    if (r.tag.kind == AttnKind::GenCross) cross += r.units;
  }
  EXPECT_EQ(cross, 3u * 8u * 4u * 4u);
}

TEST(GenerationPath, WindowLifecycleErrors) {
  Rng rng(9);
  const TConstModel m = build_tconst(toy_config(), rng);
  CostLedger meter;
  auto windows = make_gen_windows(m.config);
  EXPECT_THROW(generation_path_forward(m, 0, random_rows(rng, 1, 8), {}, windows, 1, meter), LifecycleError);
  EXPECT_THROW(generation_path_forward(m, 0, random_rows(rng, 5, 8), {}, windows, 0, meter), WindowOverflowError);
  KVWindow w(2, 8);
  w.write(0, Tensor::matrix(2, 8), Tensor::matrix(2, 8));
  EXPECT_THROW(w.write(2, Tensor::matrix(1, 8), Tensor::matrix(1, 8)), WindowOverflowError);
}

TEST(ChunkedForward, SingleChunkEqualsWindow) {
  Rng rng(10);
  const TConstModel m = build_tconst(toy_config(), rng);
  const auto ids = random_ids(rng, 4, m.config.vocab);
  CostLedger meter;
  EXPECT_TRUE(chunked_training_forward(m, ids, meter).bitwise_equal(forward_window(m, ids, 0, meter)));
}

TEST(ChunkedForward, ThirdChunkSeesTwoWindowsOfHistory) {
  Rng rng(11);
  const TConstModel m = build_tconst(toy_config(), rng);
  const auto ids = random_ids(rng, 11, m.config.vocab);
  CostLedger meter;
  const Tensor all = chunked_training_forward(m, ids, meter);
  EXPECT_EQ(all.rows(), 11u);
  const Tensor third = forward_window(m, std::span<const TokenId>(ids), 8, meter);
  EXPECT_TRUE(all.slice_rows(8, 11).bitwise_equal(third));
}

TEST(ChunkedForward, Causal) {
  Rng rng(12);
  const TConstModel m = build_tconst(toy_config(), rng);
  for (int trial = 0; trial < 10; ++trial) {
    auto ids = random_ids(rng, 13, m.config.vocab);
    const std::size_t j = rng.below(13);
    CostLedger meter;
    const Tensor before = chunked_training_forward(m, ids, meter);
    ids[j] = static_cast<TokenId>((ids[j] + 1) % static_cast<TokenId>(m.config.vocab));
    const Tensor after = chunked_training_forward(m, ids, meter);
    EXPECT_TRUE(before.slice_rows(0, j).bitwise_equal(after.slice_rows(0, j))) << "j=" << j;
  }
}

TEST(Baseline, FullPassMatchesCachedSession) {
  Rng rng(13);
  ModelConfig c = toy_config();
  c.n_layers_baseline = 2;
  const BaselineModel m = build_baseline(c, rng);
  const auto prompt = random_ids(rng, 7, c.vocab);
  BaselineSession s(m);
  s.prime(prompt);
  CostLedger meter;
  const GenerateResult run = s.generate(5, meter, true);
  std::vector<TokenId> seq = prompt;
  seq.insert(seq.end(), run.ids.begin(), run.ids.end() - 1);
  const Tensor full = baseline_forward(m, seq, meter);
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t pos = prompt.size() - 1 + i;
    EXPECT_TRUE(run.logits[i].bitwise_equal(full.slice_rows(pos, pos + 1))) << "step " << i;
  }
}

TEST(Depth, EquivalentDepthOf41MConfig) {
  EXPECT_EQ(preset("paper-41m-tconst-2k-512-0.5").equivalent_depth(), 8u);
}
