#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tconst/const_state.hpp"
#include "tconst/cost_meter.hpp"
#include "tconst/model.hpp"

namespace tconst {

enum class StepMode { Miss, Hit, Sync };
const char* step_mode_name(StepMode mode);

struct StepTrace {
  std::size_t step_index = 0;
  StepMode mode = StepMode::Hit;
  std::uint64_t macs = 0;       // attention cost units
  std::uint64_t full_macs = 0;  // projections, attention, FFN and head
  std::uint64_t latency_ns = 0;
  std::uint64_t cache_bytes = 0;
  std::uint64_t history_id_bytes = 0;
  TokenId emitted_token = 0;
  std::size_t position = 0;  // sequence index of the last token this step processed
  std::size_t phase = 0;     // its window slot (constant-state model)
};

struct StepResult {
  Tensor logits;  // 1 x vocab
  StepTrace trace;
};

struct GenerateResult {
  std::vector<TokenId> ids;
  std::vector<StepTrace> traces;
  std::vector<Tensor> logits;  // filled only when requested
};

// One autoregressive stream over a shared, read-only model.
class Session {
 public:
  virtual ~Session() = default;

  virtual ModelKind kind() const = 0;
  // Replaces any previous state. The first step after priming processes the prompt.
  virtual void prime(std::span<const TokenId> prompt) = 0;
  // Greedy step; the emitted id becomes the next pending token.
  virtual StepResult step(CostLedger& meter) = 0;
  virtual MemoryReport memory() const = 0;
  virtual std::uint64_t history_id_bytes() const = 0;

  GenerateResult generate(std::size_t n_tokens, CostLedger& meter, bool keep_logits = false);

 protected:
  std::size_t steps_taken_ = 0;
};

class TConstSession final : public Session {
 public:
  explicit TConstSession(const TConstModel& model);

  ModelKind kind() const override { return ModelKind::TConst; }
  void prime(std::span<const TokenId> prompt) override;
  StepResult step(CostLedger& meter) override;
  MemoryReport memory() const override { return memory_report(state_); }
  std::uint64_t history_id_bytes() const override;

  const ConstState& state() const { return state_; }

 private:
  Tensor run_window(std::size_t first, std::size_t rows, CostLedger& meter);

  const TConstModel& model_;
  ConstState state_;
};

class BaselineSession final : public Session {
 public:
  explicit BaselineSession(const BaselineModel& model);

  ModelKind kind() const override { return ModelKind::Baseline; }
  void prime(std::span<const TokenId> prompt) override;
  StepResult step(CostLedger& meter) override;
  MemoryReport memory() const override { return memory_report(cache_, model_.config); }
  std::uint64_t history_id_bytes() const override;

  const BaselineCache& cache() const { return cache_; }

 private:
  Tensor prefill(CostLedger& meter);
  Tensor decode_pending(CostLedger& meter);

  const BaselineModel& model_;
  BaselineCache cache_;
  std::vector<TokenId> history_;
  bool primed_ = false;
  bool needs_prefill_ = false;
};

// Cache-disabled logits at `position`, recomputed with the window partition
// the engine uses: history is every token before the position's Wog chunk.
Tensor oracle_forward(const TConstModel& model, std::span<const TokenId> ids, std::size_t position);

struct EquivalenceReport {
  bool ids_identical = true;
  double max_rel_error = 0.0;  // per row: max |engine - oracle| / max |oracle|
  std::size_t sync_events = 0;
  std::vector<TokenId> engine_ids;
  std::vector<TokenId> oracle_ids;
};

// Generates n_tokens greedily, then replays the whole sequence through the
// cache-disabled chunked forward and compares every emitted step.
EquivalenceReport equivalence_check(const TConstModel& model, std::span<const TokenId> prompt,
                                    std::size_t n_tokens);

}  // namespace tconst
