#include "tconst/cost_meter.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <tuple>

#include "tconst/errors.hpp"

namespace tconst {

const char* attn_kind_name(AttnKind kind) {
  switch (kind) {
    case AttnKind::Focused: return "focused";
    case AttnKind::ContextSelf: return "context_self";
    case AttnKind::Restore: return "restore";
    case AttnKind::GenCausal: return "gen_causal";
    case AttnKind::GenCross: return "gen_cross";
    case AttnKind::BaselineCausal: return "baseline_causal";
  }
  return "unknown";
}

std::string CostRecord::describe() const {
  std::ostringstream os;
  os << attn_kind_name(tag.kind) << "[block " << tag.block << ", layer " << tag.layer << "] Lq=" << lq
     << " Lk=" << lk << " D=" << d << " units=" << units;
  return os.str();
}

CostRecord make_record(CostTag tag, std::size_t lq, std::size_t lk, std::size_t d) {
  return {tag, lq, lk, d, static_cast<std::uint64_t>(d) * lq * lk};
}

void CostLedger::record(CostTag tag, std::size_t lq, std::size_t lk, std::size_t d) {
  const CostRecord r = make_record(tag, lq, lk, d);
  total_ += r.units;
  if (keep_records_) records_.push_back(r);
}

void CostLedger::merge(const CostLedger& other) {
  total_ += other.total_;
  full_macs_ += other.full_macs_;
  if (keep_records_) records_.insert(records_.end(), other.records_.begin(), other.records_.end());
}

void CostLedger::clear() {
  records_.clear();
  total_ = 0;
  full_macs_ = 0;
}

CostLedger CostLedger::from_records(std::vector<CostRecord> records) {
  CostLedger out;
  for (const auto& r : records) out.total_ += r.units;
  out.records_ = std::move(records);
  return out;
}

std::uint64_t closed_form_c1(const ModelConfig& cfg) {
  return static_cast<std::uint64_t>(cfg.d_model) * 2 * cfg.history_window;
}

std::uint64_t closed_form_c0(const ModelConfig& cfg) {
  const std::uint64_t d = cfg.d_model;
  const std::uint64_t h = cfg.ctx_layers;
  const std::uint64_t woh = cfg.history_window;
  const std::uint64_t wog = cfg.gen_window;
  // 2Wog² >= WogWoh does not hold in general, so add before subtracting.
  return d * (h * (woh * woh + wog * wog + wog * woh) + 2 * wog * wog - wog * woh);
}

std::uint64_t closed_form_miss(const ModelConfig& cfg, std::size_t n) {
  if (n < cfg.history_window + cfg.gen_window) {
    throw DomainError("closed_form_miss: N=" + std::to_string(n) + " is below Woh + Wog = " +
                      std::to_string(cfg.history_window + cfg.gen_window));
  }
  return cfg.n_blocks * (closed_form_c1(cfg) * n + closed_form_c0(cfg));
}

std::uint64_t closed_form_hit(const ModelConfig& cfg) {
  const std::uint64_t d = cfg.d_model;
  const std::uint64_t wog = cfg.gen_window;
  return cfg.n_blocks * (cfg.cross_layers() * d * cfg.history_window + cfg.gen_layers() * d * wog * wog);
}

std::uint64_t exact_hit_cost(const ModelConfig& cfg, std::size_t phase) {
  if (phase == 0 || phase > cfg.gen_window) {
    throw DomainError("exact_hit_cost: phase must lie in 1..Wog");
  }
  const std::uint64_t d = cfg.d_model;
  return cfg.n_blocks * (cfg.gen_layers() * d * phase + cfg.cross_layers() * d * cfg.history_window);
}

std::uint64_t context_path_cost(const ModelConfig& cfg, std::size_t history_len, bool with_restore) {
  const std::uint64_t d = cfg.d_model;
  const std::uint64_t woh = cfg.history_window;
  const std::uint64_t hist = history_len;
  return (with_restore ? 2 : 1) * d * hist * woh + cfg.ctx_layers * d * woh * woh;
}

std::vector<CostRecord> expected_miss_records(const ModelConfig& cfg, std::size_t n) {
  if (n <= cfg.gen_window) {
    throw DomainError("expected_miss_records: history would be empty");
  }
  const std::size_t d = cfg.d_model;
  const std::size_t woh = cfg.history_window;
  const std::size_t wog = cfg.gen_window;
  const std::size_t hist = n - wog;
  std::vector<CostRecord> out;
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    out.push_back(make_record({AttnKind::Focused, b, 0}, woh, hist, d));
    for (std::size_t i = 1; i <= cfg.ctx_layers; ++i) {
      out.push_back(make_record({AttnKind::ContextSelf, b, i}, woh, woh, d));
    }
    if (cfg.block_has_restore(b)) {
      out.push_back(make_record({AttnKind::Restore, b, 0}, hist, woh, d));
    }
    for (std::size_t l = 0; l < cfg.gen_layers(); ++l) {
      out.push_back(make_record({AttnKind::GenCausal, b, l}, wog, wog, d));
      if (l >= 1) out.push_back(make_record({AttnKind::GenCross, b, l}, wog, woh, d));
    }
  }
  return out;
}

std::vector<CostRecord> expected_hit_records(const ModelConfig& cfg, std::size_t phase) {
  const std::size_t d = cfg.d_model;
  std::vector<CostRecord> out;
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    for (std::size_t l = 0; l < cfg.gen_layers(); ++l) {
      out.push_back(make_record({AttnKind::GenCausal, b, l}, 1, phase, d));
      if (l >= 1) out.push_back(make_record({AttnKind::GenCross, b, l}, 1, cfg.history_window, d));
    }
  }
  return out;
}

namespace {

using TagKey = std::tuple<int, std::size_t, std::size_t>;

TagKey key_of(const CostTag& t) { return {static_cast<int>(t.kind), t.block, t.layer}; }

// Pairs records by tag; each tag that does not match yields one line.
std::vector<std::string> diff_records(const std::vector<CostRecord>& measured,
                                      const std::vector<CostRecord>& expected) {
  std::map<TagKey, std::vector<CostRecord>> m;
  std::map<TagKey, std::vector<CostRecord>> e;
  for (const auto& r : measured) m[key_of(r.tag)].push_back(r);
  for (const auto& r : expected) e[key_of(r.tag)].push_back(r);
  std::vector<std::string> diffs;
  auto keys = m;
  for (const auto& [k, v] : e) keys[k];
  for (const auto& [k, unused] : keys) {
    const auto& mv = m[k];
    const auto& ev = e[k];
    const std::size_t n = std::max(mv.size(), ev.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (i < mv.size() && i < ev.size()) {
        if (!(mv[i] == ev[i])) {
          diffs.push_back("measured " + mv[i].describe() + " | expected " + ev[i].describe());
        }
      } else if (i < mv.size()) {
        diffs.push_back("unexpected " + mv[i].describe());
      } else {
        diffs.push_back("missing " + ev[i].describe());
      }
    }
  }
  return diffs;
}

}  // namespace

VerifyReport verify_counts(const CostLedger& measured, std::uint64_t expected, const ModelConfig& cfg,
                           CountContext context) {
  VerifyReport report;
  report.measured = measured.total();
  report.expected = expected;

  std::uint64_t record_sum = 0;
  for (const auto& r : measured.records()) record_sum += r.units;
  if (!measured.records().empty() && record_sum != measured.total()) {
    report.diffs.push_back("ledger total " + std::to_string(measured.total()) +
                           " != sum of records " + std::to_string(record_sum));
  }

  if (context.kind == CountContext::Kind::Miss) {
    const auto itemized = expected_miss_records(cfg, context.n);
    auto lines = diff_records(measured.records(), itemized);
    report.diffs.insert(report.diffs.end(), lines.begin(), lines.end());
    report.pass = report.measured == expected && report.diffs.empty();
  } else {
    const std::uint64_t exact = exact_hit_cost(cfg, context.phase);
    auto lines = diff_records(measured.records(), expected_hit_records(cfg, context.phase));
    report.diffs.insert(report.diffs.end(), lines.begin(), lines.end());
    if (report.measured != exact) {
      report.diffs.push_back("hit at phase " + std::to_string(context.phase) + ": measured " +
                             std::to_string(report.measured) + " != exact phase cost " +
                             std::to_string(exact));
    }
    report.pass = report.measured <= expected && report.diffs.empty();
  }
  return report;
}

std::string VerifyReport::summary() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << " measured=" << measured << " expected=" << expected;
  for (const auto& d : diffs) os << "\n  " << d;
  return os.str();
}

}  // namespace tconst
