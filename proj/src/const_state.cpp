#include "tconst/const_state.hpp"

#include <algorithm>

#include "tconst/errors.hpp"

namespace tconst {

ConstState::ConstState(const ModelConfig& cfg) : config(cfg) {
  config.validate();
  const std::size_t d = config.d_model;
  const std::size_t woh = config.history_window;
  for (std::size_t b = 0; b < config.n_blocks; ++b) {
    std::vector<KVPair> levels;
    for (std::size_t l = 0; l < config.cross_layers(); ++l) {
      levels.push_back({Tensor::matrix(woh, d), Tensor::matrix(woh, d)});
    }
    ctx_kv.push_back(std::move(levels));
    gen_kv.push_back(make_gen_windows(config));
  }
}

std::size_t ConstState::fill() const {
  const std::size_t r = gen_kv.front().front().fill();
  for (const auto& block : gen_kv) {
    for (const auto& w : block) {
      if (w.fill() != r) {
        throw LifecycleError("generation windows out of step");
      }
    }
  }
  return r;
}

void append_gen_token(ConstState& state, const std::vector<std::vector<KVPair>>& rows) {
  const std::size_t r = state.fill();
  if (r == state.config.gen_window) {
    throw WindowOverflowError("generation window is full; sync before appending");
  }
  if (rows.size() != state.gen_kv.size()) {
    throw ContractError("append_gen_token: need rows for every block");
  }
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (rows[b].size() != state.gen_kv[b].size()) {
      throw ContractError("append_gen_token: need one row per generation layer");
    }
    for (const auto& kv : rows[b]) {
      if (kv.k.rows() != 1 || kv.v.rows() != 1) {
        throw ContractError("append_gen_token: expected exactly one row");
      }
    }
  }
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (std::size_t l = 0; l < rows[b].size(); ++l) {
      state.gen_kv[b][l].write(r, rows[b][l].k, rows[b][l].v);
    }
  }
}

bool is_sync_step(const ConstState& state) {
  if (!state.primed || state.needs_full_pass) return false;
  const std::size_t r = state.fill();
  return r == state.config.gen_window || r + 1 == state.config.gen_window;
}

void prime(ConstState& state, std::span<const TokenId> prompt) {
  if (prompt.empty()) {
    throw ContractError("prime: empty prompt");
  }
  const std::size_t wog = state.config.gen_window;
  const std::size_t n0 = prompt.size();
  state.history.assign(prompt.begin(), prompt.end());
  state.sync_boundary = n0 % wog > 0 ? n0 - n0 % wog : n0 - wog;
  state.sync_count = 0;
  state.context_valid = false;
  state.needs_full_pass = true;
  state.primed = true;
  for (auto& block : state.gen_kv) {
    for (auto& w : block) w.reset();
  }
}

void refresh_context(ConstState& state, const TConstModel& model, CostLedger& meter) {
  if (state.sync_boundary == 0) {
    state.context_valid = false;
    return;
  }
  const auto fresh = context_kv_for_history(
      model, std::span<const TokenId>(state.history).first(state.sync_boundary), meter);
  // Copy into the existing banks so the state never reallocates them.
  for (std::size_t b = 0; b < fresh.size(); ++b) {
    for (std::size_t l = 0; l < fresh[b].size(); ++l) {
      auto& dst = state.ctx_kv[b][l];
      std::copy(fresh[b][l].k.values().begin(), fresh[b][l].k.values().end(), dst.k.values().begin());
      std::copy(fresh[b][l].v.values().begin(), fresh[b][l].v.values().end(), dst.v.values().begin());
    }
  }
  state.context_valid = true;
}

void sync(ConstState& state, const TConstModel& model, CostLedger& meter) {
  const std::size_t wog = state.config.gen_window;
  if (!state.primed) {
    throw LifecycleError("sync: state not primed");
  }
  if (state.fill() != wog) {
    throw LifecycleError("sync: generation window holds " + std::to_string(state.fill()) +
                         " of " + std::to_string(wog) + " rows");
  }
  if (state.history.size() < state.sync_boundary + wog) {
    throw LifecycleError("sync: history shorter than the window it closes");
  }
  state.sync_boundary += wog;
  refresh_context(state, model, meter);
  for (auto& block : state.gen_kv) {
    for (auto& w : block) w.reset();
  }
  ++state.sync_count;
}

BaselineCache::BaselineCache(const ModelConfig& config)
    : d_(config.d_model), keys_(config.n_layers_baseline), values_(config.n_layers_baseline) {}

MatrixView BaselineCache::keys(std::size_t layer) const {
  const auto& k = keys_.at(layer);
  return {k.data(), k.size() / d_, d_, d_};
}

MatrixView BaselineCache::values(std::size_t layer) const {
  const auto& v = values_.at(layer);
  return {v.data(), v.size() / d_, d_, d_};
}

void BaselineCache::append(std::size_t layer, const Tensor& k, const Tensor& v) {
  if (k.cols() != d_ || v.cols() != d_ || k.rows() != v.rows()) {
    throw ContractError("BaselineCache::append: row shape mismatch");
  }
  const std::size_t old_rows = keys_.at(layer).size() / d_;
  const std::size_t expected_old = layer == 0 ? length_ : length_ - k.rows();
  if (old_rows != expected_old) {
    throw LifecycleError("BaselineCache::append: layers appended out of order");
  }
  auto grow = [](std::vector<float>& buf, const Tensor& rows) {
    std::vector<float> bigger(buf.size() + rows.size());
    std::copy(buf.begin(), buf.end(), bigger.begin());
    std::copy(rows.values().begin(), rows.values().end(),
              bigger.begin() + static_cast<std::ptrdiff_t>(buf.size()));
    buf.swap(bigger);
  };
  grow(keys_[layer], k);
  grow(values_[layer], v);
  if (layer == 0) length_ += k.rows();
}

std::uint64_t BaselineCache::stored_elements() const {
  std::uint64_t n = 0;
  for (std::size_t l = 0; l < keys_.size(); ++l) n += keys_[l].size() + values_[l].size();
  return n;
}

void BaselineCache::clear() {
  for (auto& k : keys_) std::vector<float>().swap(k);
  for (auto& v : values_) std::vector<float>().swap(v);
  length_ = 0;
}

const char* model_kind_name(ModelKind kind) {
  return kind == ModelKind::TConst ? "tconst" : "baseline";
}

MemoryReport memory_report(const ConstState& state, std::size_t precision_bytes) {
  MemoryReport r;
  r.kind = ModelKind::TConst;
  for (const auto& block : state.ctx_kv) {
    for (const auto& kv : block) r.cached_elements += kv.k.size() + kv.v.size();
  }
  for (const auto& block : state.gen_kv) {
    for (const auto& w : block) r.cached_elements += w.stored_elements();
  }
  r.precision_bytes = precision_bytes;
  r.bytes = r.cached_elements * precision_bytes;
  r.d_model = state.config.d_model;
  r.ctx_layers = state.config.ctx_layers;
  r.history_window = state.config.history_window;
  r.gen_window = state.config.gen_window;
  r.n_blocks = state.config.n_blocks;
  return r;
}

MemoryReport memory_report(const BaselineCache& cache, const ModelConfig& config,
                           std::size_t precision_bytes) {
  MemoryReport r;
  r.kind = ModelKind::Baseline;
  r.cached_elements = cache.stored_elements();
  r.precision_bytes = precision_bytes;
  r.bytes = r.cached_elements * precision_bytes;
  r.d_model = config.d_model;
  r.n_layers = cache.n_layers();
  r.seq_len = cache.length();
  return r;
}

std::uint64_t baseline_cache_bytes_formula(std::size_t seq_len, const ModelConfig& config,
                                           std::size_t precision_bytes) {
  return 2ULL * seq_len * config.d_model * precision_bytes * config.n_layers_baseline;
}

std::uint64_t tconst_cache_bytes_formula(const ModelConfig& config, std::size_t precision_bytes) {
  const std::uint64_t d = config.d_model;
  return config.n_blocks *
         (2 * config.cross_layers() * config.history_window * d + 2 * config.gen_layers() * config.gen_window * d) *
         precision_bytes;
}

}  // namespace tconst
