#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tconst/engine.hpp"
#include "tconst/model.hpp"

namespace tconst {

struct BenchRecord {
  std::string model_kind;
  std::size_t n = 0;            // prompt length
  std::size_t token_index = 0;  // 1-based; 0 on an out-of-memory row
  std::string mode;             // miss | hit | sync | oom
  std::uint64_t latency_ns = 0;
  std::uint64_t macs = 0;
  std::uint64_t cache_bytes = 0;
  std::uint64_t history_id_bytes = 0;

  friend bool operator==(const BenchRecord&, const BenchRecord&) = default;
};

inline constexpr const char* kBenchCsvHeader =
    "model_kind,n,token_index,mode,latency_ns,macs,cache_bytes,history_id_bytes";

struct BenchPlan {
  std::size_t n_start = 1;
  std::size_t n_step = 10000;
  std::optional<std::size_t> n_max;  // absent: keep growing until allocation fails
  std::size_t gen_tokens = 6;
  std::uint64_t seed = 0;
  // Timed runs per (model, N); latency is the per-token median. Units and
  // bytes are deterministic and taken from the first run.
  std::size_t repeats = 1;
  bool warmup = true;
  // Cache size treated as the device limit, the analogue of running out of memory.
  std::optional<std::uint64_t> cache_budget_bytes;

  void validate() const;
};

// Prompt lengths of a bounded plan: n_start, n_start + n_step, ... <= n_max.
std::vector<std::size_t> plan_lengths(const BenchPlan& plan);

// Uniform token ids, seeded per (seed, model kind, N).
std::vector<TokenId> bench_prompt(std::uint64_t seed, ModelKind kind, std::size_t n, std::size_t vocab);

struct BenchTargets {
  const TConstModel* tconst = nullptr;
  const BaselineModel* baseline = nullptr;
};

using RecordSink = std::function<void(const BenchRecord&)>;

// Models run one after the other; each N starts from a fresh session.
void run_bench(const BenchPlan& plan, const BenchTargets& targets, const RecordSink& sink);
std::vector<BenchRecord> run_bench(const BenchPlan& plan, const BenchTargets& targets);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const BenchRecord& record);
// Expects the exact header first; throws ParseError otherwise.
std::vector<BenchRecord> parse_csv(std::istream& in);

struct ModelSeries {
  std::string model_kind;
  std::vector<std::size_t> n;
  std::vector<double> miss_latency_ns;  // token 1
  std::vector<double> hit_latency_ns;   // token 3
  std::vector<double> speedup;          // miss / hit
  std::vector<std::uint64_t> hit_macs;
  std::vector<std::uint64_t> cache_bytes;  // at the hit token
  std::optional<std::size_t> oom_n;

  double speedup_rank_corr = 0.0;
  double miss_latency_rank_corr = 0.0;
  double hit_latency_rank_corr = 0.0;
  double hit_latency_max_min = 0.0;
  bool cache_bytes_constant = false;
  bool cache_bytes_strictly_increasing = false;
};

struct BenchSummary {
  std::vector<ModelSeries> models;
  // TConst latency over baseline latency at each N both completed.
  std::vector<std::size_t> ratio_n;
  std::vector<double> miss_latency_ratio;
  std::vector<double> hit_latency_ratio;

  const ModelSeries* find(const std::string& kind) const;
};

// Needs at least two distinct N per model with both token indices present.
BenchSummary summarize(const std::vector<BenchRecord>& records, std::size_t miss_index = 1,
                       std::size_t hit_index = 3);

// Spearman rank correlation, average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

void write_summary(std::ostream& out, const BenchSummary& summary);

}  // namespace tconst
