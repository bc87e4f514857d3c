#include "tconst/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <new>
#include <ostream>
#include <sstream>

#include "tconst/errors.hpp"
#include "tconst/rng.hpp"

namespace tconst {

void BenchPlan::validate() const {
  if (n_start == 0) throw ConfigError("bench plan: n_start must be >= 1");
  if (n_step == 0) throw ConfigError("bench plan: n_step must be >= 1");
  if (gen_tokens == 0) throw ConfigError("bench plan: gen_tokens must be >= 1");
  if (repeats == 0) throw ConfigError("bench plan: repeats must be >= 1");
  if (n_max && *n_max < n_start) throw ConfigError("bench plan: n_max below n_start");
}

std::vector<std::size_t> plan_lengths(const BenchPlan& plan) {
  plan.validate();
  if (!plan.n_max) {
    throw ConfigError("plan_lengths: unbounded plan");
  }
  std::vector<std::size_t> out;
  for (std::size_t n = plan.n_start; n <= *plan.n_max; n += plan.n_step) out.push_back(n);
  return out;
}

std::vector<TokenId> bench_prompt(std::uint64_t seed, ModelKind kind, std::size_t n, std::size_t vocab) {
  Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(kind)), n));
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
  return ids;
}

namespace {

std::unique_ptr<Session> open_session(const BenchTargets& targets, ModelKind kind) {
  if (kind == ModelKind::TConst) return std::make_unique<TConstSession>(*targets.tconst);
  return std::make_unique<BaselineSession>(*targets.baseline);
}

std::size_t vocab_of(const BenchTargets& targets, ModelKind kind) {
  return kind == ModelKind::TConst ? targets.tconst->config.vocab : targets.baseline->config.vocab;
}

std::vector<StepTrace> timed_run(const BenchPlan& plan, const BenchTargets& targets, ModelKind kind,
                                 std::span<const TokenId> prompt) {
  auto session = open_session(targets, kind);
  session->prime(prompt);
  CostLedger meter;
  meter.set_keep_records(false);
  std::vector<StepTrace> traces;
  for (std::size_t i = 0; i < plan.gen_tokens; ++i) {
    traces.push_back(session->step(meter).trace);
    if (plan.cache_budget_bytes && traces.back().cache_bytes > *plan.cache_budget_bytes) {
      throw std::bad_alloc();
    }
  }
  return traces;
}

std::uint64_t median(std::vector<std::uint64_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : v[m - 1] + (v[m] - v[m - 1]) / 2;
}

// Returns false after recording an out-of-memory row.
bool bench_one(const BenchPlan& plan, const BenchTargets& targets, ModelKind kind, std::size_t n,
               const RecordSink& sink) {
  try {
    const auto prompt = bench_prompt(plan.seed, kind, n, vocab_of(targets, kind));
    if (plan.warmup) timed_run(plan, targets, kind, prompt);
    std::vector<std::vector<StepTrace>> runs;
    for (std::size_t r = 0; r < plan.repeats; ++r) runs.push_back(timed_run(plan, targets, kind, prompt));
    for (std::size_t i = 0; i < plan.gen_tokens; ++i) {
      std::vector<std::uint64_t> lat;
      for (const auto& run : runs) lat.push_back(run[i].latency_ns);
      const StepTrace& t = runs.front()[i];
      sink({model_kind_name(kind), n, i + 1, step_mode_name(t.mode), median(lat), t.macs, t.cache_bytes,
            t.history_id_bytes});
    }
    return true;
  } catch (const std::bad_alloc&) {
    sink({model_kind_name(kind), n, 0, "oom", 0, 0, 0, 0});
    return false;
  }
}

}  // namespace

void run_bench(const BenchPlan& plan, const BenchTargets& targets, const RecordSink& sink) {
  plan.validate();
  std::vector<ModelKind> kinds;
  if (targets.tconst != nullptr) kinds.push_back(ModelKind::TConst);
  if (targets.baseline != nullptr) kinds.push_back(ModelKind::Baseline);
  if (kinds.empty()) {
    throw ConfigError("run_bench: no model to run");
  }
  for (const ModelKind kind : kinds) {
    for (std::size_t n = plan.n_start; !plan.n_max || n <= *plan.n_max; n += plan.n_step) {
      if (!bench_one(plan, targets, kind, n, sink)) break;
    }
  }
}

std::vector<BenchRecord> run_bench(const BenchPlan& plan, const BenchTargets& targets) {
  std::vector<BenchRecord> out;
  run_bench(plan, targets, [&](const BenchRecord& r) { out.push_back(r); });
  return out;
}

void write_csv_header(std::ostream& out) { out << kBenchCsvHeader << '\n'; }

void write_csv_row(std::ostream& out, const BenchRecord& r) {
  out << r.model_kind << ',' << r.n << ',' << r.token_index << ',' << r.mode << ',' << r.latency_ns << ','
      << r.macs << ',' << r.cache_bytes << ',' << r.history_id_bytes << '\n';
}

namespace {

template <typename T>
T parse_field(const std::string& s, std::size_t line_no) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<BenchRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kBenchCsvHeader) {
    throw ParseError("csv: missing or unexpected header");
  }
  std::vector<BenchRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) {
      throw ParseError("csv line " + std::to_string(line_no) + ": expected 8 fields");
    }
    BenchRecord r;
    r.model_kind = f[0];
    r.n = parse_field<std::size_t>(f[1], line_no);
    r.token_index = parse_field<std::size_t>(f[2], line_no);
    r.mode = f[3];
    r.latency_ns = parse_field<std::uint64_t>(f[4], line_no);
    r.macs = parse_field<std::uint64_t>(f[5], line_no);
    r.cache_bytes = parse_field<std::uint64_t>(f[6], line_no);
    r.history_id_bytes = parse_field<std::uint64_t>(f[7], line_no);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DomainError("spearman: need two equal-length series of at least 2 points");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

const ModelSeries* BenchSummary::find(const std::string& kind) const {
  for (const auto& m : models) {
    if (m.model_kind == kind) return &m;
  }
  return nullptr;
}

BenchSummary summarize(const std::vector<BenchRecord>& records, std::size_t miss_index,
                       std::size_t hit_index) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::size_t, std::map<std::size_t, const BenchRecord*>>> by_model;
  std::map<std::string, std::size_t> oom;
  for (const auto& r : records) {
    if (std::find(order.begin(), order.end(), r.model_kind) == order.end()) order.push_back(r.model_kind);
    if (r.mode == "oom") {
      oom[r.model_kind] = r.n;
      continue;
    }
    by_model[r.model_kind][r.n][r.token_index] = &r;
  }

  BenchSummary summary;
  for (const auto& kind : order) {
    ModelSeries s;
    s.model_kind = kind;
    if (auto it = oom.find(kind); it != oom.end()) s.oom_n = it->second;
    for (const auto& [n, tokens] : by_model[kind]) {
      const auto miss = tokens.find(miss_index);
      const auto hit = tokens.find(hit_index);
      if (miss == tokens.end() || hit == tokens.end()) continue;
      s.n.push_back(n);
      s.miss_latency_ns.push_back(static_cast<double>(miss->second->latency_ns));
      s.hit_latency_ns.push_back(static_cast<double>(hit->second->latency_ns));
      const double h = s.hit_latency_ns.back();
      s.speedup.push_back(h > 0.0 ? s.miss_latency_ns.back() / h : std::numeric_limits<double>::infinity());
      s.hit_macs.push_back(hit->second->macs);
      s.cache_bytes.push_back(hit->second->cache_bytes);
    }
    if (s.n.size() < 2) {
      throw DomainError("summarize: model '" + kind + "' has fewer than two usable prompt lengths");
    }
    std::vector<double> nd(s.n.begin(), s.n.end());
    s.speedup_rank_corr = spearman(nd, s.speedup);
    s.miss_latency_rank_corr = spearman(nd, s.miss_latency_ns);
    s.hit_latency_rank_corr = spearman(nd, s.hit_latency_ns);
    const auto [lo, hi] = std::minmax_element(s.hit_latency_ns.begin(), s.hit_latency_ns.end());
    s.hit_latency_max_min = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
    s.cache_bytes_constant = std::all_of(s.cache_bytes.begin(), s.cache_bytes.end(),
                                         [&](std::uint64_t b) { return b == s.cache_bytes.front(); });
    s.cache_bytes_strictly_increasing = true;
    for (std::size_t i = 1; i < s.cache_bytes.size(); ++i) {
      if (s.cache_bytes[i] <= s.cache_bytes[i - 1]) s.cache_bytes_strictly_increasing = false;
    }
    summary.models.push_back(std::move(s));
  }

  const ModelSeries* tc = summary.find("tconst");
  const ModelSeries* base = summary.find("baseline");
  if (tc != nullptr && base != nullptr) {
    for (std::size_t i = 0; i < tc->n.size(); ++i) {
      const auto j = std::find(base->n.begin(), base->n.end(), tc->n[i]);
      if (j == base->n.end()) continue;
      const auto k = static_cast<std::size_t>(j - base->n.begin());
      summary.ratio_n.push_back(tc->n[i]);
      summary.miss_latency_ratio.push_back(tc->miss_latency_ns[i] / base->miss_latency_ns[k]);
      summary.hit_latency_ratio.push_back(tc->hit_latency_ns[i] / base->hit_latency_ns[k]);
    }
  }
  return summary;
}

void write_summary(std::ostream& out, const BenchSummary& summary) {
  for (const auto& s : summary.models) {
    out << "[" << s.model_kind << "]\n";
    out << "n,miss_latency_ns,hit_latency_ns,speedup,hit_macs,cache_bytes\n";
    for (std::size_t i = 0; i < s.n.size(); ++i) {
      out << s.n[i] << ',' << s.miss_latency_ns[i] << ',' << s.hit_latency_ns[i] << ',' << s.speedup[i] << ','
          << s.hit_macs[i] << ',' << s.cache_bytes[i] << '\n';
    }
    out << "speedup_rank_corr=" << s.speedup_rank_corr << '\n'
        << "miss_latency_rank_corr=" << s.miss_latency_rank_corr << '\n'
        << "hit_latency_rank_corr=" << s.hit_latency_rank_corr << '\n'
        << "hit_latency_max_min=" << s.hit_latency_max_min << '\n'
        << "cache_bytes_constant=" << (s.cache_bytes_constant ? "true" : "false") << '\n'
        << "cache_bytes_strictly_increasing=" << (s.cache_bytes_strictly_increasing ? "true" : "false") << '\n';
    if (s.oom_n) out << "oom_at_n=" << *s.oom_n << '\n';
  }
  if (!summary.ratio_n.empty()) {
    out << "[tconst/baseline]\nn,miss_latency_ratio,hit_latency_ratio\n";
    for (std::size_t i = 0; i < summary.ratio_n.size(); ++i) {
      out << summary.ratio_n[i] << ',' << summary.miss_latency_ratio[i] << ',' << summary.hit_latency_ratio[i]
          << '\n';
    }
  }
}

}  // namespace tconst
