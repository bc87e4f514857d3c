#include "tconst/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "tconst/errors.hpp"

namespace tconst {

const char* step_mode_name(StepMode mode) {
  switch (mode) {
    case StepMode::Miss: return "miss";
    case StepMode::Hit: return "hit";
    case StepMode::Sync: return "sync";
  }
  return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point start) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count());
}

TokenId greedy(const Tensor& logits) {
  return static_cast<TokenId>(argmax_row(logits.row(logits.rows() - 1)));
}

}  // namespace

GenerateResult Session::generate(std::size_t n_tokens, CostLedger& meter, bool keep_logits) {
  GenerateResult out;
  out.ids.reserve(n_tokens);
  out.traces.reserve(n_tokens);
  for (std::size_t i = 0; i < n_tokens; ++i) {
    StepResult r = step(meter);
    out.ids.push_back(r.trace.emitted_token);
    out.traces.push_back(r.trace);
    if (keep_logits) out.logits.push_back(std::move(r.logits));
  }
  return out;
}

TConstSession::TConstSession(const TConstModel& model) : model_(model), state_(model.config) {}

void TConstSession::prime(std::span<const TokenId> prompt) {
  tconst::prime(state_, prompt);
  steps_taken_ = 0;
}

std::uint64_t TConstSession::history_id_bytes() const {
  return state_.history.size() * sizeof(TokenId);
}

// Generation path for history[first, first + rows) at window slots starting
// at the current fill; returns logits of those rows.
Tensor TConstSession::run_window(std::size_t first, std::size_t rows, CostLedger& meter) {
  const std::size_t offset = state_.fill();
  Tensor x = embed_tokens(model_.embedding, std::span<const TokenId>(state_.history).subspan(first, rows),
                          first);
  for (std::size_t b = 0; b < model_.blocks.size(); ++b) {
    std::span<const KVPair> ctx;
    if (state_.context_valid) ctx = state_.ctx_kv[b];
    x = generation_path_forward(model_, b, x, ctx, state_.gen_kv[b], offset, meter);
  }
  return output_logits(model_, x.view().slice_rows(x.rows() - 1, x.rows()), meter);
}

StepResult TConstSession::step(CostLedger& meter) {
  if (!state_.primed) {
    throw LifecycleError("step: session not primed");
  }
  const auto start = Clock::now();
  const std::uint64_t units_before = meter.total();
  const std::uint64_t full_before = meter.full_macs();
  const std::size_t wog = state_.config.gen_window;
  const std::size_t pending = state_.history.size() - 1;

  StepResult out;
  if (state_.needs_full_pass) {
    // Cache miss: context over the boundary prefix, then the whole window.
    refresh_context(state_, model_, meter);
    const std::size_t rows = state_.history.size() - state_.sync_boundary;
    out.logits = run_window(state_.sync_boundary, rows, meter);
    state_.needs_full_pass = false;
    out.trace.mode = StepMode::Miss;
    out.trace.phase = rows;
  } else if (state_.fill() == wog) {
    // Window filled at priming: refresh now, then the pending token opens the next window.
    sync(state_, model_, meter);
    out.logits = run_window(pending, 1, meter);
    out.trace.mode = StepMode::Sync;
    out.trace.phase = 1;
  } else if (state_.fill() + 1 == wog) {
    // The pending token completes the window: recompute the full window
    // against the current context, then synchronize past it.
    for (auto& block : state_.gen_kv) {
      for (auto& w : block) w.reset();
    }
    out.logits = run_window(state_.sync_boundary, wog, meter);
    sync(state_, model_, meter);
    out.trace.mode = StepMode::Sync;
    out.trace.phase = wog;
  } else {
    out.trace.phase = state_.fill() + 1;
    out.logits = run_window(pending, 1, meter);
    out.trace.mode = StepMode::Hit;
  }

  const TokenId next = greedy(out.logits);
  out.trace.position = state_.history.size() - 1;
  state_.history.push_back(next);
  out.trace.step_index = steps_taken_++;
  out.trace.emitted_token = next;
  out.trace.macs = meter.total() - units_before;
  out.trace.full_macs = meter.full_macs() - full_before;
  out.trace.cache_bytes = memory().bytes;
  out.trace.history_id_bytes = history_id_bytes();
  out.trace.latency_ns = elapsed_ns(start);
  return out;
}

BaselineSession::BaselineSession(const BaselineModel& model) : model_(model), cache_(model.config) {}

void BaselineSession::prime(std::span<const TokenId> prompt) {
  if (prompt.empty()) {
    throw ContractError("prime: empty prompt");
  }
  cache_.clear();
  history_.assign(prompt.begin(), prompt.end());
  primed_ = true;
  needs_prefill_ = true;
  steps_taken_ = 0;
}

std::uint64_t BaselineSession::history_id_bytes() const { return history_.size() * sizeof(TokenId); }

// Fills the cache for every prompt row; the last layer computes only the
// final query row, which is all the next-token logits need.
Tensor BaselineSession::prefill(CostLedger& meter) {
  const AttentionSpec spec = model_.spec();
  const std::size_t n = history_.size();
  Tensor h = embed_tokens(model_.embedding, history_, 0);
  for (std::size_t l = 0; l < model_.layers.size(); ++l) {
    const auto& w = model_.layers[l];
    const bool last = l + 1 == model_.layers.size();
    const Tensor a = layer_norm(h.view(), w.ln_attn.gain, w.ln_attn.bias);
    const KVPair kv = project_kv(a.view(), w.attn, meter);
    cache_.append(l, kv.k, kv.v);
    const std::size_t q_first = last ? n - 1 : 0;
    const Tensor q = project(a.view().slice_rows(q_first, n), w.attn.wq, meter);
    const Tensor mixed = scaled_dot_attention(q.view(), cache_.keys(l), cache_.values(l),
                                              AttentionMask::causal(q_first), spec, meter,
                                              {AttnKind::BaselineCausal, 0, l});
    if (last) h = h.slice_rows(n - 1, n);
    add_inplace(h, project(mixed.view(), w.attn.wo, meter));
    const Tensor f_in = layer_norm(h.view(), w.ln_ffn.gain, w.ln_ffn.bias);
    add_inplace(h, feed_forward(w.ffn, f_in.view(), meter));
  }
  return output_logits(model_, h.view(), meter);
}

Tensor BaselineSession::decode_pending(CostLedger& meter) {
  const AttentionSpec spec = model_.spec();
  const std::size_t pos = history_.size() - 1;
  Tensor h = embed_tokens(model_.embedding, std::span<const TokenId>(history_).subspan(pos, 1), pos);
  for (std::size_t l = 0; l < model_.layers.size(); ++l) {
    const auto& w = model_.layers[l];
    const Tensor a = layer_norm(h.view(), w.ln_attn.gain, w.ln_attn.bias);
    const Tensor q = project(a.view(), w.attn.wq, meter);
    const KVPair kv = project_kv(a.view(), w.attn, meter);
    cache_.append(l, kv.k, kv.v);
    const Tensor mixed = scaled_dot_attention(q.view(), cache_.keys(l), cache_.values(l),
                                              AttentionMask::causal(pos), spec, meter,
                                              {AttnKind::BaselineCausal, 0, l});
    add_inplace(h, project(mixed.view(), w.attn.wo, meter));
    const Tensor f_in = layer_norm(h.view(), w.ln_ffn.gain, w.ln_ffn.bias);
    add_inplace(h, feed_forward(w.ffn, f_in.view(), meter));
  }
  return output_logits(model_, h.view(), meter);
}

StepResult BaselineSession::step(CostLedger& meter) {
  if (!primed_) {
    throw LifecycleError("step: session not primed");
  }
  const auto start = Clock::now();
  const std::uint64_t units_before = meter.total();
  const std::uint64_t full_before = meter.full_macs();
  StepResult out;
  if (needs_prefill_) {
    out.logits = prefill(meter);
    needs_prefill_ = false;
    out.trace.mode = StepMode::Miss;
  } else {
    out.logits = decode_pending(meter);
    out.trace.mode = StepMode::Hit;
  }
  const TokenId next = greedy(out.logits);
  out.trace.position = history_.size() - 1;
  history_.push_back(next);
  out.trace.step_index = steps_taken_++;
  out.trace.emitted_token = next;
  out.trace.macs = meter.total() - units_before;
  out.trace.full_macs = meter.full_macs() - full_before;
  out.trace.cache_bytes = memory().bytes;
  out.trace.history_id_bytes = history_id_bytes();
  out.trace.latency_ns = elapsed_ns(start);
  return out;
}

Tensor oracle_forward(const TConstModel& model, std::span<const TokenId> ids, std::size_t position) {
  if (position >= ids.size()) {
    throw ContractError("oracle_forward: position past the sequence");
  }
  const std::size_t wog = model.config.gen_window;
  CostLedger scratch;
  scratch.set_keep_records(false);
  const Tensor window = forward_window(model, ids.first(position + 1), position / wog * wog, scratch);
  return window.slice_rows(window.rows() - 1, window.rows());
}

namespace {

double row_rel_error(std::span<const float> got, std::span<const float> want) {
  float scale = 0.0f;
  float diff = 0.0f;
  for (std::size_t j = 0; j < want.size(); ++j) {
    scale = std::max(scale, std::fabs(want[j]));
    diff = std::max(diff, std::fabs(got[j] - want[j]));
  }
  if (diff == 0.0f) return 0.0;
  return static_cast<double>(diff) / std::max(static_cast<double>(scale), 1e-30);
}

}  // namespace

EquivalenceReport equivalence_check(const TConstModel& model, std::span<const TokenId> prompt,
                                    std::size_t n_tokens) {
  EquivalenceReport report;
  if (n_tokens == 0) return report;

  TConstSession session(model);
  session.prime(prompt);
  CostLedger meter;
  meter.set_keep_records(false);
  const GenerateResult run = session.generate(n_tokens, meter, true);
  report.engine_ids = run.ids;
  report.sync_events = session.state().sync_count;

  // Step i consumed sequence position prompt.size() - 1 + i.
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), run.ids.begin(), run.ids.end() - 1);
  CostLedger scratch;
  scratch.set_keep_records(false);
  const Tensor oracle = chunked_training_forward(model, seq, scratch);
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const auto want = oracle.row(prompt.size() - 1 + i);
    report.oracle_ids.push_back(static_cast<TokenId>(argmax_row(want)));
    report.max_rel_error = std::max(report.max_rel_error, row_rel_error(run.logits[i].row(0), want));
  }
  report.ids_identical = report.engine_ids == report.oracle_ids;
  return report;
}

}  // namespace tconst
