#include "tconst/model.hpp"

#include <algorithm>
#include <cmath>

#include "tconst/errors.hpp"

namespace tconst {

namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, float scale) {
  Tensor t = Tensor::matrix(rows, cols);
  for (float& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

// Gains near 1 and small biases so an untrained model still spreads its logits.
LayerNormWeights random_ln(Rng& rng, std::size_t d) {
  LayerNormWeights ln{Tensor({d}), Tensor({d})};
  for (float& v : ln.gain.values()) v = 1.0f + rng.uniform(-0.1f, 0.1f);
  for (float& v : ln.bias.values()) v = rng.uniform(-0.05f, 0.05f);
  return ln;
}

ProjectionSet random_projections(Rng& rng, std::size_t d) {
  const float s = std::sqrt(3.0f / static_cast<float>(d));
  ProjectionSet p;
  p.wq = random_matrix(rng, d, d, s);
  p.wk = random_matrix(rng, d, d, s);
  p.wv = random_matrix(rng, d, d, s);
  p.wo = random_matrix(rng, d, d, s);
  return p;
}

FeedForwardWeights random_ffn(Rng& rng, std::size_t d, std::size_t mult) {
  FeedForwardWeights f;
  f.w_in = random_matrix(rng, d, mult * d, std::sqrt(3.0f / static_cast<float>(d)));
  f.w_out = random_matrix(rng, mult * d, d, std::sqrt(3.0f / static_cast<float>(mult * d)));
  return f;
}

Tensor ln(MatrixView x, const LayerNormWeights& w) { return layer_norm(x, w.gain, w.bias); }

void visit_ln(const std::string& prefix, const LayerNormWeights& w, const ParameterVisitor& visit) {
  visit(prefix + ".gain", w.gain);
  visit(prefix + ".bias", w.bias);
}

void visit_proj(const std::string& prefix, const ProjectionSet& p, const ParameterVisitor& visit) {
  visit(prefix + ".wq", p.wq);
  visit(prefix + ".wk", p.wk);
  visit(prefix + ".wv", p.wv);
  visit(prefix + ".wo", p.wo);
}

void visit_ffn(const std::string& prefix, const FeedForwardWeights& f, const ParameterVisitor& visit) {
  visit(prefix + ".w_in", f.w_in);
  visit(prefix + ".w_out", f.w_out);
}

template <typename Model>
Tensor logits_of(const Model& model, MatrixView hidden, CostLedger& meter) {
  const Tensor normed = ln(hidden, model.ln_final);
  const Tensor& head = model.head();
  meter.add_full_macs(static_cast<std::uint64_t>(hidden.rows) * head.rows() * head.cols());
  return matmul_bt(normed.view(), head);
}

}  // namespace

TConstModel build_tconst(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  TConstModel m;
  m.config = config;
  m.embedding = random_matrix(rng, config.vocab, d, 0.3f);
  if (!config.tie_embeddings) m.lm_head = random_matrix(rng, config.vocab, d, 1.0f);
  m.ln_final = random_ln(rng, d);
  for (std::size_t b = 0; b < config.n_blocks; ++b) {
    TConstBlockWeights blk;
    blk.ctx.latents = random_matrix(rng, config.history_window, d, 1.0f);
    blk.ctx.ln_history = random_ln(rng, d);
    blk.ctx.focused = random_projections(rng, d);
    for (std::size_t i = 0; i < config.ctx_layers; ++i) {
      blk.ctx.mid.push_back({random_ln(rng, d), random_projections(rng, d)});
    }
    if (config.block_has_restore(b)) {
      RestoreWeights r;
      r.ln_query = random_ln(rng, d);
      r.ln_context = random_ln(rng, d);
      r.attn = random_projections(rng, d);
      blk.ctx.restore = std::move(r);
    }
    for (std::size_t l = 0; l < config.gen_layers(); ++l) {
      GenLayerWeights g;
      g.ln_attn = random_ln(rng, d);
      g.self = random_projections(rng, d);
      if (l >= 1) g.cross = CrossWeights{random_ln(rng, d), random_projections(rng, d)};
      g.ln_ffn = random_ln(rng, d);
      g.ffn = random_ffn(rng, d, config.ffn_mult);
      blk.gen.push_back(std::move(g));
    }
    m.blocks.push_back(std::move(blk));
  }
  return m;
}

BaselineModel build_baseline(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  BaselineModel m;
  m.config = config;
  m.embedding = random_matrix(rng, config.vocab, d, 0.3f);
  if (!config.tie_embeddings) m.lm_head = random_matrix(rng, config.vocab, d, 1.0f);
  m.ln_final = random_ln(rng, d);
  for (std::size_t l = 0; l < config.n_layers_baseline; ++l) {
    BaselineLayerWeights w;
    w.ln_attn = random_ln(rng, d);
    w.attn = random_projections(rng, d);
    w.ln_ffn = random_ln(rng, d);
    w.ffn = random_ffn(rng, d, config.ffn_mult);
    m.layers.push_back(std::move(w));
  }
  return m;
}

void for_each_parameter(const TConstModel& model, const ParameterVisitor& visit) {
  visit("embedding", model.embedding);
  if (model.lm_head) visit("lm_head", *model.lm_head);
  visit_ln("ln_final", model.ln_final, visit);
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const auto& blk = model.blocks[b];
    const std::string p = "blocks." + std::to_string(b);
    visit(p + ".ctx.latents", blk.ctx.latents);
    visit_ln(p + ".ctx.ln_history", blk.ctx.ln_history, visit);
    visit_proj(p + ".ctx.focused", blk.ctx.focused, visit);
    for (std::size_t i = 0; i < blk.ctx.mid.size(); ++i) {
      const std::string q = p + ".ctx.mid." + std::to_string(i);
      visit_ln(q + ".ln", blk.ctx.mid[i].ln, visit);
      visit_proj(q + ".attn", blk.ctx.mid[i].attn, visit);
    }
    if (blk.ctx.restore) {
      visit_ln(p + ".ctx.restore.ln_query", blk.ctx.restore->ln_query, visit);
      visit_ln(p + ".ctx.restore.ln_context", blk.ctx.restore->ln_context, visit);
      visit_proj(p + ".ctx.restore.attn", blk.ctx.restore->attn, visit);
    }
    for (std::size_t l = 0; l < blk.gen.size(); ++l) {
      const auto& g = blk.gen[l];
      const std::string q = p + ".gen." + std::to_string(l);
      visit_ln(q + ".ln_attn", g.ln_attn, visit);
      visit_proj(q + ".self", g.self, visit);
      if (g.cross) {
        visit_ln(q + ".cross.ln_context", g.cross->ln_context, visit);
        visit_proj(q + ".cross.attn", g.cross->attn, visit);
      }
      visit_ln(q + ".ln_ffn", g.ln_ffn, visit);
      visit_ffn(q + ".ffn", g.ffn, visit);
    }
  }
}

void for_each_parameter(const BaselineModel& model, const ParameterVisitor& visit) {
  visit("embedding", model.embedding);
  if (model.lm_head) visit("lm_head", *model.lm_head);
  visit_ln("ln_final", model.ln_final, visit);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& w = model.layers[l];
    const std::string p = "layers." + std::to_string(l);
    visit_ln(p + ".ln_attn", w.ln_attn, visit);
    visit_proj(p + ".attn", w.attn, visit);
    visit_ln(p + ".ln_ffn", w.ln_ffn, visit);
    visit_ffn(p + ".ffn", w.ffn, visit);
  }
}

std::uint64_t count_parameters(const TConstModel& model) {
  std::uint64_t n = 0;
  for_each_parameter(model, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::uint64_t count_parameters(const BaselineModel& model) {
  std::uint64_t n = 0;
  for_each_parameter(model, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

KVWindow::KVWindow(std::size_t capacity, std::size_t d_model)
    : capacity_(capacity), d_(d_model), k_(capacity * d_model), v_(capacity * d_model) {}

void KVWindow::write(std::size_t offset, const Tensor& k, const Tensor& v) {
  if (k.rows() != v.rows() || k.cols() != d_ || v.cols() != d_) {
    throw ContractError("KVWindow::write: row shape mismatch");
  }
  if (offset > fill_) {
    throw LifecycleError("KVWindow::write: gap before offset " + std::to_string(offset));
  }
  if (offset + k.rows() > capacity_) {
    throw WindowOverflowError("generation window full: " + std::to_string(offset + k.rows()) +
                              " rows exceed capacity " + std::to_string(capacity_));
  }
  std::copy(k.values().begin(), k.values().end(), k_.begin() + static_cast<std::ptrdiff_t>(offset * d_));
  std::copy(v.values().begin(), v.values().end(), v_.begin() + static_cast<std::ptrdiff_t>(offset * d_));
  fill_ = offset + k.rows();
}

std::vector<KVWindow> make_gen_windows(const ModelConfig& config) {
  return std::vector<KVWindow>(config.gen_layers(), KVWindow(config.gen_window, config.d_model));
}

ContextOutput context_path_forward(const TConstModel& model, std::size_t block, MatrixView history,
                                   CostLedger& meter) {
  if (history.rows == 0) {
    throw ContractError("context_path_forward: empty history");
  }
  const auto& w = model.blocks.at(block).ctx;
  const AttentionSpec spec = model.spec();
  ContextOutput out;

  const Tensor h_norm = ln(history, w.ln_history);
  out.levels.push_back(
      focused_attention(w.latents, h_norm.view(), w.focused, spec, meter, {AttnKind::Focused, block, 0}));
  for (std::size_t i = 0; i < w.mid.size(); ++i) {
    Tensor c = out.levels.back();
    const Tensor a = ln(c.view(), w.mid[i].ln);
    add_inplace(c, self_attention(a.view(), w.mid[i].attn, AttentionMask::none(), spec, meter,
                                  {AttnKind::ContextSelf, block, i + 1}));
    out.levels.push_back(std::move(c));
  }
  if (w.restore) {
    const Tensor q = ln(history, w.restore->ln_query);
    const Tensor kv_src = ln(out.levels.back().view(), w.restore->ln_context);
    Tensor restored = Tensor::from_view(history);
    add_inplace(restored, cross_attention(q.view(), kv_src.view(), w.restore->attn, spec, meter,
                                          {AttnKind::Restore, block, 0}));
    out.restored = std::move(restored);
  }
  return out;
}

std::vector<KVPair> project_context_kv(const TConstModel& model, std::size_t block,
                                       const ContextOutput& context, CostLedger& meter) {
  const auto& gen = model.blocks.at(block).gen;
  if (context.levels.size() + 1 != gen.size()) {
    throw ContractError("project_context_kv: level count differs from cross layer count");
  }
  std::vector<KVPair> out;
  out.reserve(context.levels.size());
  for (std::size_t l = 1; l < gen.size(); ++l) {
    const Tensor src = ln(context.levels[l - 1].view(), gen[l].cross->ln_context);
    out.push_back(project_kv(src.view(), gen[l].cross->attn, meter));
  }
  return out;
}

std::vector<std::vector<KVPair>> context_kv_for_history(const TConstModel& model,
                                                        std::span<const TokenId> history,
                                                        CostLedger& meter) {
  std::vector<std::vector<KVPair>> out(model.blocks.size());
  if (history.empty()) return out;
  Tensor h = embed_tokens(model.embedding, history, 0);
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    ContextOutput ctx = context_path_forward(model, b, h.view(), meter);
    out[b] = project_context_kv(model, b, ctx, meter);
    if (ctx.restored) {
      h = std::move(*ctx.restored);
    } else if (b + 1 < model.blocks.size()) {
      throw ContractError("block " + std::to_string(b) + " has no restore but feeds another block");
    }
  }
  return out;
}

Tensor feed_forward(const FeedForwardWeights& ffn, MatrixView x, CostLedger& meter) {
  const Tensor hidden = gelu(project(x, ffn.w_in, meter));
  return project(hidden.view(), ffn.w_out, meter);
}

Tensor generation_path_forward(const TConstModel& model, std::size_t block, const Tensor& x,
                               std::span<const KVPair> context_kv, std::span<KVWindow> windows,
                               std::size_t offset, CostLedger& meter) {
  const ModelConfig& cfg = model.config;
  const auto& gen = model.blocks.at(block).gen;
  if (x.rows() == 0) {
    throw ContractError("generation_path_forward: no rows");
  }
  if (offset + x.rows() > cfg.gen_window) {
    throw WindowOverflowError("generation_path_forward: rows " + std::to_string(offset + x.rows()) +
                              " exceed Wog = " + std::to_string(cfg.gen_window));
  }
  if (windows.size() != gen.size()) {
    throw ContractError("generation_path_forward: need one window per generation layer");
  }
  if (!context_kv.empty() && context_kv.size() + 1 != gen.size()) {
    throw ContractError("generation_path_forward: context level count differs from cross layers");
  }
  const AttentionSpec spec = model.spec();
  Tensor h = x;
  for (std::size_t l = 0; l < gen.size(); ++l) {
    const GenLayerWeights& g = gen[l];
    if (windows[l].fill() != offset) {
      throw LifecycleError("generation_path_forward: window holds " + std::to_string(windows[l].fill()) +
                           " rows, expected " + std::to_string(offset));
    }
    const Tensor a = ln(h.view(), g.ln_attn);
    const Tensor q = project(a.view(), g.self.wq, meter);
    const KVPair kv = project_kv(a.view(), g.self, meter);
    windows[l].write(offset, kv.k, kv.v);
    const Tensor mixed = scaled_dot_attention(q.view(), windows[l].keys(), windows[l].values(),
                                              AttentionMask::causal(offset), spec, meter,
                                              {AttnKind::GenCausal, block, l});
    add_inplace(h, project(mixed.view(), g.self.wo, meter));
    if (l >= 1 && !context_kv.empty()) {
      add_inplace(h, cross_attention(a.view(), MatrixView{}, g.cross->attn, spec, meter,
                                     {AttnKind::GenCross, block, l}, &context_kv[l - 1]));
    }
    const Tensor f_in = ln(h.view(), g.ln_ffn);
    add_inplace(h, feed_forward(g.ffn, f_in.view(), meter));
  }
  return h;
}

Tensor output_logits(const TConstModel& model, MatrixView hidden, CostLedger& meter) {
  return logits_of(model, hidden, meter);
}

Tensor output_logits(const BaselineModel& model, MatrixView hidden, CostLedger& meter) {
  return logits_of(model, hidden, meter);
}

Tensor forward_window(const TConstModel& model, std::span<const TokenId> tokens,
                      std::size_t history_len, CostLedger& meter) {
  const ModelConfig& cfg = model.config;
  if (history_len >= tokens.size()) {
    throw ContractError("forward_window: empty generation window");
  }
  if (tokens.size() - history_len > cfg.gen_window) {
    throw WindowOverflowError("forward_window: window of " + std::to_string(tokens.size() - history_len) +
                              " tokens exceeds Wog = " + std::to_string(cfg.gen_window));
  }
  const auto ctx_kv = context_kv_for_history(model, tokens.first(history_len), meter);
  Tensor x = embed_tokens(model.embedding, tokens.subspan(history_len), history_len);
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    std::vector<KVWindow> windows = make_gen_windows(cfg);
    x = generation_path_forward(model, b, x, ctx_kv[b], windows, 0, meter);
  }
  return output_logits(model, x.view(), meter);
}

Tensor chunked_training_forward(const TConstModel& model, std::span<const TokenId> tokens,
                                CostLedger& meter) {
  if (tokens.empty()) {
    throw ContractError("chunked_training_forward: empty sequence");
  }
  const std::size_t wog = model.config.gen_window;
  Tensor out = Tensor::matrix(tokens.size(), model.config.vocab);
  for (std::size_t start = 0; start < tokens.size(); start += wog) {
    const std::size_t end = std::min(tokens.size(), start + wog);
    const Tensor chunk = forward_window(model, tokens.first(end), start, meter);
    std::copy(chunk.values().begin(), chunk.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(start * model.config.vocab));
  }
  return out;
}

Tensor baseline_forward(const BaselineModel& model, std::span<const TokenId> tokens, CostLedger& meter) {
  if (tokens.empty()) {
    throw ContractError("baseline_forward: empty sequence");
  }
  const AttentionSpec spec = model.spec();
  Tensor h = embed_tokens(model.embedding, tokens, 0);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& w = model.layers[l];
    const Tensor a = ln(h.view(), w.ln_attn);
    const Tensor q = project(a.view(), w.attn.wq, meter);
    const KVPair kv = project_kv(a.view(), w.attn, meter);
    const Tensor mixed = scaled_dot_attention(q.view(), kv.k.view(), kv.v.view(), AttentionMask::causal(0),
                                              spec, meter, {AttnKind::BaselineCausal, 0, l});
    add_inplace(h, project(mixed.view(), w.attn.wo, meter));
    const Tensor f_in = ln(h.view(), w.ln_ffn);
    add_inplace(h, feed_forward(w.ffn, f_in.view(), meter));
  }
  return output_logits(model, h.view(), meter);
}

}  // namespace tconst
