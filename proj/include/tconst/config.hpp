#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tconst {

/// Architecture hyperparameters shared by the constant-state model and the
/// decoder-only baseline.
///
/// Symbols: `d_model` is D, `ctx_layers` is H (intermediate
/// context self-attention layers per block), `history_window` is Woh and
/// `gen_window` is Wog.
struct ModelConfig {
  std::string name = "custom";
  std::size_t d_model = 8;
  std::size_t vocab = 11;
  std::size_t n_heads = 2;
  std::size_t ctx_layers = 2;
  std::size_t history_window = 4;
  std::size_t gen_window = 4;
  std::size_t n_blocks = 1;
  std::size_t n_layers_baseline = 4;
  std::size_t ffn_mult = 4;
  bool tie_embeddings = true;
  // When false the last block skips its context-restore attention. The cost
  // closed forms count a restore in every block, so the default keeps it.
  bool final_restore = true;

  std::size_t d_head() const { return d_model / n_heads; }
  // Causal generation layers per block (H + 2); also its share of equivalent depth.
  std::size_t gen_layers() const { return ctx_layers + 2; }
  // Cross-attention generation layers and cached context levels per block (H + 1).
  std::size_t cross_layers() const { return ctx_layers + 1; }
  std::size_t equivalent_depth() const { return n_blocks * gen_layers(); }
  bool block_has_restore(std::size_t block) const {
    return block + 1 < n_blocks || final_restore;
  }

  // Throws ConfigError on violated invariants.
  void validate() const;
};

ModelConfig toy_config();
ModelConfig paper_base_config();
ModelConfig paper_tconst_config();

// Names: "toy", "paper-41m-base", "paper-41m-tconst-2k-512-0.5".
ModelConfig preset(std::string_view name);
std::vector<std::string> preset_names();

// `key = value` lines, '#' starts a comment. Keys mirror ModelConfig fields
// (d_model, vocab, n_heads, ctx_layers, history_window, gen_window, n_blocks,
// n_layers_baseline, ffn_mult, tie_embeddings, final_restore) plus `preset`
// (applied first) and `variant` (sets the two windows from a variant name).
ModelConfig parse_config_text(std::string_view text);
ModelConfig load_config_file(const std::string& path);

enum class ModelFamily { Base, TConstFormer };

/// "Base 1K" or "TConstFormer 2K-512-0.5": training length, total window,
/// history share of the window.
struct VariantName {
  ModelFamily family = ModelFamily::Base;
  std::size_t train_len = 0;
  std::optional<std::size_t> w_total;
  std::optional<double> ratio;
  std::optional<std::size_t> history_window;
  std::optional<std::size_t> gen_window;
};

// History window is ratio * w_total rounded to nearest, ties up.
VariantName parse_variant_name(std::string_view text);

}  // namespace tconst
