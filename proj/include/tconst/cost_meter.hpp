#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tconst/config.hpp"

namespace tconst {

// Cost unit: one query-key pair per model dimension, D * Lq * Lk per attention
// invocation. Projections, softmax, the weighted value sum and FFNs are not
// counted in units; they only feed the optional full-MAC total.

enum class AttnKind {
  Focused,       // latent queries over the whole history
  ContextSelf,   // self-attention inside the compressed context
  Restore,       // history queries over the last compressed level
  GenCausal,     // causal self-attention in the generation window
  GenCross,      // generation window over a compressed level
  BaselineCausal,
};

const char* attn_kind_name(AttnKind kind);

struct CostTag {
  AttnKind kind = AttnKind::GenCausal;
  std::size_t block = 0;
  std::size_t layer = 0;

  friend bool operator==(const CostTag&, const CostTag&) = default;
};

struct CostRecord {
  CostTag tag;
  std::size_t lq = 0;
  std::size_t lk = 0;
  std::size_t d = 0;
  std::uint64_t units = 0;

  friend bool operator==(const CostRecord&, const CostRecord&) = default;
  std::string describe() const;
};

CostRecord make_record(CostTag tag, std::size_t lq, std::size_t lk, std::size_t d);

class CostLedger {
 public:
  void record(CostTag tag, std::size_t lq, std::size_t lk, std::size_t d);
  void add_full_macs(std::uint64_t macs) { full_macs_ += macs; }

  std::uint64_t total() const { return total_; }
  std::uint64_t full_macs() const { return full_macs_; }
  const std::vector<CostRecord>& records() const { return records_; }

  // Totals keep accumulating either way; long benchmark runs turn records off.
  void set_keep_records(bool keep) { keep_records_ = keep; }

  void merge(const CostLedger& other);
  void clear();

  // For building reference or corrupted ledgers in checks.
  static CostLedger from_records(std::vector<CostRecord> records);

 private:
  std::vector<CostRecord> records_;
  std::uint64_t total_ = 0;
  std::uint64_t full_macs_ = 0;
  bool keep_records_ = true;
};

// Per-block closed forms.
std::uint64_t closed_form_c1(const ModelConfig& cfg);  // D * 2Woh
std::uint64_t closed_form_c0(const ModelConfig& cfg);  // D[H(Woh²+Wog²+WogWoh) + 2Wog² - WogWoh]

// Cache-miss cost C1*N + C0, times n_blocks. Needs N >= Woh + Wog.
std::uint64_t closed_form_miss(const ModelConfig& cfg, std::size_t n);

// Cache-hit bound (H+1)D*Woh + (H+2)D*Wog², times n_blocks.
std::uint64_t closed_form_hit(const ModelConfig& cfg);

// Exact hit cost when the new token is the `phase`-th row of the window
// (1 <= phase <= Wog): (H+2)D*phase + (H+1)D*Woh per block.
std::uint64_t exact_hit_cost(const ModelConfig& cfg, std::size_t phase);

// Left-window term 2D(N-Wog)Woh + H*D*Woh² for one block, given the history
// length N - Wog; drops one D*hist*Woh when the block has no restore.
std::uint64_t context_path_cost(const ModelConfig& cfg, std::size_t history_len, bool with_restore);

// Invocation-by-invocation itemization of the two cost events, following the
// layer layout of the architecture. Honors cfg.final_restore.
std::vector<CostRecord> expected_miss_records(const ModelConfig& cfg, std::size_t n);
std::vector<CostRecord> expected_hit_records(const ModelConfig& cfg, std::size_t phase);

struct CountContext {
  enum class Kind { Miss, Hit };
  Kind kind = Kind::Miss;
  std::size_t n = 0;      // miss: total sequence length
  std::size_t phase = 0;  // hit: window row of the new token

  static CountContext miss(std::size_t n) { return {Kind::Miss, n, 0}; }
  static CountContext hit(std::size_t phase) { return {Kind::Hit, 0, phase}; }
};

struct VerifyReport {
  bool pass = false;
  std::uint64_t measured = 0;
  std::uint64_t expected = 0;
  std::vector<std::string> diffs;  // one line per differing invocation

  std::string summary() const;
};

// Miss: measured total == expected and the records match the itemization.
// Hit: measured <= expected bound and equals the exact phase cost.
VerifyReport verify_counts(const CostLedger& measured, std::uint64_t expected,
                           const ModelConfig& cfg, CountContext context);

}  // namespace tconst
