#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tconst/attention.hpp"
#include "tconst/config.hpp"
#include "tconst/cost_meter.hpp"
#include "tconst/rng.hpp"
#include "tconst/tensor.hpp"

namespace tconst {

struct LayerNormWeights {
  Tensor gain;
  Tensor bias;
};

struct FeedForwardWeights {
  Tensor w_in;   // D x ffn_mult*D
  Tensor w_out;  // ffn_mult*D x D
};

struct ContextLayerWeights {
  LayerNormWeights ln;
  ProjectionSet attn;
};

struct RestoreWeights {
  LayerNormWeights ln_query;
  LayerNormWeights ln_context;
  ProjectionSet attn;
};

struct ContextPathWeights {
  Tensor latents;  // Woh x D query bank, no positional term
  LayerNormWeights ln_history;
  ProjectionSet focused;
  std::vector<ContextLayerWeights> mid;  // H
  std::optional<RestoreWeights> restore;
};

struct CrossWeights {
  LayerNormWeights ln_context;
  ProjectionSet attn;
};

struct GenLayerWeights {
  LayerNormWeights ln_attn;
  ProjectionSet self;
  std::optional<CrossWeights> cross;  // absent in layer 0
  LayerNormWeights ln_ffn;
  FeedForwardWeights ffn;
};

struct TConstBlockWeights {
  ContextPathWeights ctx;
  std::vector<GenLayerWeights> gen;  // H + 2
};

struct TConstModel {
  ModelConfig config;
  Tensor embedding;               // vocab x D
  std::optional<Tensor> lm_head;  // vocab x D, only when untied
  LayerNormWeights ln_final;
  std::vector<TConstBlockWeights> blocks;

  AttentionSpec spec() const { return {config.d_model, config.n_heads}; }
  const Tensor& head() const { return lm_head ? *lm_head : embedding; }
};

struct BaselineLayerWeights {
  LayerNormWeights ln_attn;
  ProjectionSet attn;
  LayerNormWeights ln_ffn;
  FeedForwardWeights ffn;
};

struct BaselineModel {
  ModelConfig config;
  Tensor embedding;
  std::optional<Tensor> lm_head;
  LayerNormWeights ln_final;
  std::vector<BaselineLayerWeights> layers;

  AttentionSpec spec() const { return {config.d_model, config.n_heads}; }
  const Tensor& head() const { return lm_head ? *lm_head : embedding; }
};

TConstModel build_tconst(const ModelConfig& config, Rng& rng);
BaselineModel build_baseline(const ModelConfig& config, Rng& rng);

using ParameterVisitor = std::function<void(const std::string& name, const Tensor& weight)>;
void for_each_parameter(const TConstModel& model, const ParameterVisitor& visit);
void for_each_parameter(const BaselineModel& model, const ParameterVisitor& visit);

std::uint64_t count_parameters(const TConstModel& model);
std::uint64_t count_parameters(const BaselineModel& model);

// Preallocated K/V rows for one causal layer of the generation window.
class KVWindow {
 public:
  KVWindow() = default;
  KVWindow(std::size_t capacity, std::size_t d_model);

  std::size_t capacity() const { return capacity_; }
  std::size_t fill() const { return fill_; }
  MatrixView keys() const { return {k_.data(), fill_, d_, d_}; }
  MatrixView values() const { return {v_.data(), fill_, d_, d_}; }

  // Writes rows at [offset, offset + rows) and sets fill to offset + rows.
  // offset may not exceed the current fill; throws WindowOverflowError past capacity.
  void write(std::size_t offset, const Tensor& k, const Tensor& v);
  void reset() { fill_ = 0; }
  std::size_t stored_elements() const { return k_.size() + v_.size(); }

 private:
  std::size_t capacity_ = 0;
  std::size_t d_ = 0;
  std::size_t fill_ = 0;
  std::vector<float> k_;
  std::vector<float> v_;
};

struct ContextOutput {
  std::vector<Tensor> levels;       // C_0 .. C_H, each Woh x D
  std::optional<Tensor> restored;   // history length x D, when the block restores
};

// history: the block's input over the synchronized prefix.
ContextOutput context_path_forward(const TConstModel& model, std::size_t block, MatrixView history,
                                   CostLedger& meter);

// Cross-attention keys/values for generation layers 1..H+1 of a block,
// from LN_ctx(C_{l-1}). Returned in layer order.
std::vector<KVPair> project_context_kv(const TConstModel& model, std::size_t block,
                                       const ContextOutput& context, CostLedger& meter);

// Runs the block's generation layers over x, whose rows sit at window slots
// [offset, offset + x.rows()). Each window must hold exactly `offset` rows.
// context_kv may be empty (no history): the cross term is then skipped.
// The same code serves full-window (offset 0) and one-row incremental calls.
Tensor generation_path_forward(const TConstModel& model, std::size_t block, const Tensor& x,
                               std::span<const KVPair> context_kv, std::span<KVWindow> windows,
                               std::size_t offset, CostLedger& meter);

std::vector<KVWindow> make_gen_windows(const ModelConfig& config);

// Context paths of every block in order over the embedded history (block
// j > 0 reads block j-1's restored output), projected for cross-attention.
// One entry per block; empty when the history is empty.
std::vector<std::vector<KVPair>> context_kv_for_history(const TConstModel& model,
                                                        std::span<const TokenId> history,
                                                        CostLedger& meter);

// Final layer norm and LM head over hidden rows.
Tensor output_logits(const TConstModel& model, MatrixView hidden, CostLedger& meter);
Tensor output_logits(const BaselineModel& model, MatrixView hidden, CostLedger& meter);

// Cache-disabled pass over one window: the context path over tokens
// [0, history_len) and the generation path over [history_len, tokens.size()),
// which must hold 1..Wog tokens. Returns logits for the window rows.
Tensor forward_window(const TConstModel& model, std::span<const TokenId> tokens,
                      std::size_t history_len, CostLedger& meter);

// Chunks [0, Wog), [Wog, 2Wog), ...; chunk c sees tokens [0, c*Wog) as
// history. Logits for every position, concatenated.
Tensor chunked_training_forward(const TConstModel& model, std::span<const TokenId> tokens,
                                CostLedger& meter);

// Plain causal pass of the baseline over all tokens.
Tensor baseline_forward(const BaselineModel& model, std::span<const TokenId> tokens, CostLedger& meter);

// Shared by the baseline's full pass and its cached decoder.
Tensor feed_forward(const FeedForwardWeights& ffn, MatrixView x, CostLedger& meter);

}  // namespace tconst
