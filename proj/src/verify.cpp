#include "tconst/verify.hpp"

#include <algorithm>
#include <sstream>

#include "tconst/const_state.hpp"
#include "tconst/cost_meter.hpp"
#include "tconst/engine.hpp"
#include "tconst/model.hpp"
#include "tconst/rng.hpp"

namespace tconst {

std::uint64_t expected_tconst_parameters(const ModelConfig& c) {
  const std::uint64_t d = c.d_model;
  const std::uint64_t h = c.ctx_layers;
  const std::uint64_t attn = 4 * d * d;
  std::uint64_t total = c.vocab * d * (c.tie_embeddings ? 1 : 2) + 2 * d;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    total += c.history_window * d + 2 * d + attn;  // latents, history norm, focused
    total += h * (2 * d + attn);
    if (c.block_has_restore(b)) total += 4 * d + attn;
    total += (h + 2) * (4 * d + attn + 2 * c.ffn_mult * d * d);
    total += (h + 1) * (2 * d + attn);
  }
  return total;
}

std::uint64_t expected_baseline_parameters(const ModelConfig& c) {
  const std::uint64_t d = c.d_model;
  return c.vocab * d * (c.tie_embeddings ? 1 : 2) + 2 * d +
         c.n_layers_baseline * (4 * d * d + 2 * c.ffn_mult * d * d + 4 * d);
}

namespace {

std::vector<TokenId> random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
  return ids;
}

// Prompt that leaves Wog - 1 tokens in the first window over a history of at
// least Woh tokens, so the second step closes a window.
std::size_t closing_prompt_length(const ModelConfig& c) {
  const std::size_t k = std::max<std::size_t>(1, (c.history_window + c.gen_window - 1) / c.gen_window);
  return k * c.gen_window + c.gen_window - 1;
}

struct SteppedRun {
  std::vector<StepTrace> traces;
  std::vector<CostLedger> ledgers;
};

SteppedRun run_steps(Session& session, std::size_t n) {
  SteppedRun run;
  for (std::size_t i = 0; i < n; ++i) {
    CostLedger meter;
    run.traces.push_back(session.step(meter).trace);
    run.ledgers.push_back(std::move(meter));
  }
  return run;
}

CheckResult check(std::string name, bool pass, const std::string& detail) {
  return {std::move(name), pass, detail};
}

}  // namespace

std::vector<CheckResult> run_verify_suite(const ModelConfig& cfg, const VerifyOptions& opt) {
  cfg.validate();
  std::vector<CheckResult> out;
  Rng rng(opt.seed);
  Rng weight_rng(mix_seed(opt.seed, 1));
  const TConstModel model = build_tconst(cfg, weight_rng);
  const BaselineModel baseline = build_baseline(cfg, weight_rng);
  const std::size_t wog = cfg.gen_window;
  const std::size_t woh = cfg.history_window;

  {
    std::ostringstream detail;
    bool pass = true;
    for (std::size_t n = woh + wog; n <= woh + 3 * wog; ++n) {
      const auto tokens = random_tokens(rng, n, cfg.vocab);
      CostLedger meter;
      forward_window(model, tokens, n - wog, meter);
      const VerifyReport r = verify_counts(meter, closed_form_miss(cfg, n), cfg, CountContext::miss(n));
      if (!r.pass) {
        pass = false;
        detail << "N=" << n << ": " << r.summary() << "\n";
      }
    }
    out.push_back(check("miss_units_match_closed_form", pass, detail.str()));
  }

  const std::size_t n0 = closing_prompt_length(cfg);
  const std::size_t steps = 2 * wog + 2;
  TConstSession session(model);
  session.prime(random_tokens(rng, n0, cfg.vocab));
  const SteppedRun run = run_steps(session, steps);

  {
    std::ostringstream detail;
    bool pass = true;
    std::size_t closes = 0;
    for (std::size_t i = 0; i < steps; ++i) {
      const StepTrace& t = run.traces[i];
      if (t.mode == StepMode::Sync && t.phase == wog) {
        ++closes;
        const std::size_t n = t.position + 1 + wog;
        const VerifyReport r = verify_counts(run.ledgers[i], closed_form_miss(cfg, n), cfg, CountContext::miss(n));
        if (!r.pass) {
          pass = false;
          detail << "step " << i << " N=" << n << ": " << r.summary() << "\n";
        }
      } else if (t.mode == StepMode::Hit) {
        const VerifyReport r =
            verify_counts(run.ledgers[i], closed_form_hit(cfg), cfg, CountContext::hit(t.phase));
        if (!r.pass) {
          pass = false;
          detail << "step " << i << " phase " << t.phase << ": " << r.summary() << "\n";
        }
      }
    }
    if (closes < 2) {
      pass = false;
      detail << "only " << closes << " window-closing steps\n";
    }
    out.push_back(check("engine_steps_match_closed_forms", pass, detail.str()));
  }

  {
    // One cycle: the hits after a window-closing step through the next close.
    std::vector<std::size_t> closes;
    for (std::size_t i = 0; i < steps; ++i) {
      if (run.traces[i].mode == StepMode::Sync && run.traces[i].phase == wog) closes.push_back(i);
    }
    bool pass = closes.size() >= 2;
    std::ostringstream detail;
    if (pass) {
      std::uint64_t measured = 0;
      for (std::size_t i = closes[0] + 1; i <= closes[1]; ++i) measured += run.traces[i].macs;
      std::uint64_t expected = closed_form_miss(cfg, run.traces[closes[1]].position + 1 + wog);
      for (std::size_t r = 1; r < wog; ++r) expected += exact_hit_cost(cfg, r);
      pass = measured == expected;
      detail << "measured=" << measured << " expected=" << expected;
    }
    out.push_back(check("amortized_cycle_units", pass, detail.str()));
  }

  {
    TConstSession longer(model);
    longer.prime(random_tokens(rng, n0 + 10 * wog, cfg.vocab));
    const SteppedRun far = run_steps(longer, steps);
    bool pass = true;
    std::ostringstream detail;
    for (std::size_t i = 0; i < steps; ++i) {
      if (run.traces[i].mode != StepMode::Hit) continue;
      if (far.traces[i].mode != StepMode::Hit || far.traces[i].macs != run.traces[i].macs) {
        pass = false;
        detail << "step " << i << ": " << run.traces[i].macs << " vs " << far.traces[i].macs << "\n";
      }
    }
    out.push_back(check("hit_units_independent_of_length", pass, detail.str()));
  }

  {
    const std::uint64_t formula = tconst_cache_bytes_formula(cfg);
    bool pass = true;
    for (const auto& t : run.traces) pass = pass && t.cache_bytes == formula;
    out.push_back(check("tconst_cache_bytes_constant", pass, "formula=" + std::to_string(formula)));
  }

  {
    BaselineSession base(baseline);
    base.prime(random_tokens(rng, n0, cfg.vocab));
    const SteppedRun b = run_steps(base, steps);
    bool pass = true;
    std::ostringstream detail;
    for (std::size_t i = 0; i < steps; ++i) {
      const std::uint64_t want = baseline_cache_bytes_formula(b.traces[i].position + 1, cfg);
      if (b.traces[i].cache_bytes != want || (i > 0 && b.traces[i].cache_bytes <= b.traces[i - 1].cache_bytes)) {
        pass = false;
        detail << "step " << i << ": " << b.traces[i].cache_bytes << " vs " << want << "\n";
      }
    }
    out.push_back(check("baseline_cache_bytes_formula", pass, detail.str()));
  }

  {
    const auto prompt = random_tokens(rng, 1 + rng.below(2 * wog), cfg.vocab);
    const EquivalenceReport r = equivalence_check(model, prompt, opt.equivalence_tokens);
    std::ostringstream detail;
    detail << "max_rel_error=" << r.max_rel_error << " syncs=" << r.sync_events;
    out.push_back(check("cache_on_off_equivalence", r.ids_identical && r.max_rel_error <= 1e-5, detail.str()));
  }

  {
    bool pass = true;
    std::ostringstream detail;
    const std::size_t len = 3 * wog + 1;
    for (std::size_t c = 0; c < opt.causality_cases; ++c) {
      auto tokens = random_tokens(rng, len, cfg.vocab);
      const std::size_t j = rng.below(len);
      CostLedger scratch;
      scratch.set_keep_records(false);
      const Tensor before = chunked_training_forward(model, tokens, scratch);
      tokens[j] = static_cast<TokenId>((static_cast<std::size_t>(tokens[j]) + 1) % cfg.vocab);
      const Tensor after = chunked_training_forward(model, tokens, scratch);
      if (!before.slice_rows(0, j).bitwise_equal(after.slice_rows(0, j))) {
        pass = false;
        detail << "perturbing token " << j << " changed earlier logits\n";
      }
    }
    out.push_back(check("chunked_forward_causality", pass, detail.str()));
  }

  {
    const std::uint64_t tc = count_parameters(model);
    const std::uint64_t bl = count_parameters(baseline);
    const bool pass = tc == expected_tconst_parameters(cfg) && bl == expected_baseline_parameters(cfg);
    std::ostringstream detail;
    detail << "tconst=" << tc << " baseline=" << bl << " delta=" << static_cast<std::int64_t>(tc - bl);
    out.push_back(check("parameter_counts", pass, detail.str()));
  }
  return out;
}

}  // namespace tconst
