#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tconst/attention.hpp"
#include "tconst/config.hpp"
#include "tconst/cost_meter.hpp"
#include "tconst/model.hpp"

namespace tconst {

// Fixed-size inference state of the constant-state model, batch size 1.
//
// The generation window covers history[sync_boundary, sync_boundary + fill).
// Between steps the newest history entry is the pending token: emitted by the
// previous step, not yet run through the model.
struct ConstState {
  explicit ConstState(const ModelConfig& config);

  ModelConfig config;
  std::vector<std::vector<KVPair>> ctx_kv;    // [block][H+1], Woh x D each
  std::vector<std::vector<KVWindow>> gen_kv;  // [block][H+2], capacity Wog
  std::vector<TokenId> history;
  std::size_t sync_boundary = 0;
  std::size_t sync_count = 0;
  bool primed = false;
  bool context_valid = false;    // ctx_kv reflects history[0, sync_boundary)
  bool needs_full_pass = false;  // set by prime; the first step runs the window

  // Shared window phase r; throws if the per-layer windows disagree.
  std::size_t fill() const;
};

// Writes one K/V row per generation layer of every block (rows[block][layer],
// each 1 x D) into the next free slot. Throws WindowOverflowError when r == Wog.
void append_gen_token(ConstState& state, const std::vector<std::vector<KVPair>>& rows);

// True when the next step refreshes the compressed context: the pending token
// completes the window (r + 1 == Wog) or a primed window is already full.
bool is_sync_step(const ConstState& state);

// Stores the prompt and fixes the first boundary: N0 - (N0 mod Wog), or
// N0 - Wog when Wog divides N0. No model work happens until the first step.
void prime(ConstState& state, std::span<const TokenId> prompt);

// Context paths over history[0, sync_boundary) into ctx_kv, in place.
void refresh_context(ConstState& state, const TConstModel& model, CostLedger& meter);

// Needs a full window (r == Wog). Advances the boundary by Wog, refreshes the
// context over the new history prefix and empties every generation window.
void sync(ConstState& state, const TConstModel& model, CostLedger& meter);

// Decoder-only KV cache that grows by reallocate-and-copy on every append.
class BaselineCache {
 public:
  explicit BaselineCache(const ModelConfig& config);

  std::size_t length() const { return length_; }
  std::size_t n_layers() const { return keys_.size(); }
  MatrixView keys(std::size_t layer) const;
  MatrixView values(std::size_t layer) const;

  // Layers are appended in order; layer 0 opens a new length.
  void append(std::size_t layer, const Tensor& k, const Tensor& v);
  std::uint64_t stored_elements() const;
  void clear();

 private:
  std::size_t d_;
  std::size_t length_ = 0;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
};

enum class ModelKind { TConst, Baseline };
const char* model_kind_name(ModelKind kind);

inline constexpr std::size_t kDefaultPrecisionBytes = 4;

struct MemoryReport {
  ModelKind kind = ModelKind::TConst;
  std::uint64_t cached_elements = 0;
  std::uint64_t bytes = 0;
  std::size_t precision_bytes = kDefaultPrecisionBytes;
  std::size_t batch = 1;
  std::size_t d_model = 0;
  // Baseline.
  std::size_t n_layers = 0;
  std::size_t seq_len = 0;
  // Constant-state model.
  std::size_t ctx_layers = 0;
  std::size_t history_window = 0;
  std::size_t gen_window = 0;
  std::size_t n_blocks = 0;
};

// Counts the elements actually held; never evaluates the closed form.
MemoryReport memory_report(const ConstState& state, std::size_t precision_bytes = kDefaultPrecisionBytes);
MemoryReport memory_report(const BaselineCache& cache, const ModelConfig& config,
                           std::size_t precision_bytes = kDefaultPrecisionBytes);

// 2 * B * L * d_model * P * N_layers.
std::uint64_t baseline_cache_bytes_formula(std::size_t seq_len, const ModelConfig& config,
                                           std::size_t precision_bytes = kDefaultPrecisionBytes);
// n_blocks * [2B(H+1)Woh*d + 2B(H+2)Wog*d] * P.
std::uint64_t tconst_cache_bytes_formula(const ModelConfig& config,
                                         std::size_t precision_bytes = kDefaultPrecisionBytes);

}  // namespace tconst
