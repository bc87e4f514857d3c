// tcf: cost formulas, invariant checks, generation traces and the latency
// benchmark for the constant-state transformer and its decoder baseline.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "tconst/bench.hpp"
#include "tconst/config.hpp"
#include "tconst/cost_meter.hpp"
#include "tconst/engine.hpp"
#include "tconst/errors.hpp"
#include "tconst/model.hpp"
#include "tconst/rng.hpp"
#include "tconst/verify.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string preset;
  std::string config_path;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--preset", opts.preset, "Named configuration (toy, paper-41m-base, paper-41m-tconst-2k-512-0.5)");
  cmd->add_option("--config", opts.config_path, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "Seed for weights and prompts");
}

tconst::ModelConfig resolve_config(const CommonOptions& opts) {
  if (opts.config_path.empty()) return tconst::preset(opts.preset.empty() ? "toy" : opts.preset);
  std::ifstream in(opts.config_path);
  std::stringstream text;
  if (!opts.preset.empty()) text << "preset = " << opts.preset << "\n";
  text << in.rdbuf();
  return tconst::parse_config_text(text.str());
}

// Weights come from a sub-seed so prompts and weights never share a stream.
std::uint64_t weight_seed(std::uint64_t seed) { return tconst::mix_seed(seed, 1); }

int cmd_cost(const CommonOptions& opts, std::size_t n) {
  const auto cfg = resolve_config(opts);
  std::cout << "n_blocks=" << cfg.n_blocks << "\n"
            << "C1=" << tconst::closed_form_c1(cfg) << "\n"
            << "C0=" << tconst::closed_form_c0(cfg) << "\n"
            << "n=" << n << "\n"
            << "miss=" << tconst::closed_form_miss(cfg, n) << "\n"
            << "hit=" << tconst::closed_form_hit(cfg) << "\n";
  return kExitPass;
}

int cmd_params(const CommonOptions& opts) {
  const auto cfg = resolve_config(opts);
  tconst::Rng rng(weight_seed(opts.seed));
  const auto tc = tconst::count_parameters(tconst::build_tconst(cfg, rng));
  const auto bl = tconst::count_parameters(tconst::build_baseline(cfg, rng));
  std::cout << "tconst_params=" << tc << "\n"
            << "baseline_params=" << bl << "\n"
            << "delta=" << static_cast<std::int64_t>(tc) - static_cast<std::int64_t>(bl) << "\n"
            << "tconst_equivalent_depth=" << cfg.equivalent_depth() << "\n"
            << "baseline_layers=" << cfg.n_layers_baseline << "\n";
  return kExitPass;
}

int cmd_verify(const CommonOptions& opts, std::size_t tokens) {
  const auto cfg = resolve_config(opts);
  tconst::VerifyOptions vo;
  vo.seed = opts.seed;
  vo.equivalence_tokens = tokens;
  bool all = true;
  for (const auto& r : tconst::run_verify_suite(cfg, vo)) {
    all = all && r.pass;
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) std::cout << "  " << r.detail;
    std::cout << "\n";
  }
  return all ? kExitPass : kExitFail;
}

int cmd_generate(const CommonOptions& opts, std::optional<std::size_t> n, std::size_t tokens,
                 const std::string& which) {
  const auto cfg = resolve_config(opts);
  tconst::Rng rng(weight_seed(opts.seed));
  const auto tc_model = tconst::build_tconst(cfg, rng);
  const auto bl_model = tconst::build_baseline(cfg, rng);
  const std::size_t prompt_len = n.value_or(2 * cfg.gen_window + 1);
  std::unique_ptr<tconst::Session> session;
  tconst::ModelKind kind = tconst::ModelKind::TConst;
  if (which == "baseline") {
    kind = tconst::ModelKind::Baseline;
    session = std::make_unique<tconst::BaselineSession>(bl_model);
  } else {
    session = std::make_unique<tconst::TConstSession>(tc_model);
  }
  session->prime(tconst::bench_prompt(opts.seed, kind, prompt_len, cfg.vocab));
  tconst::CostLedger meter;
  meter.set_keep_records(false);
  const auto run = session->generate(tokens, meter);
  std::cout << "ids=";
  for (std::size_t i = 0; i < run.ids.size(); ++i) std::cout << (i ? "," : "") << run.ids[i];
  std::cout << "\nstep,mode,phase,macs,latency_ns,cache_bytes\n";
  for (const auto& t : run.traces) {
    std::cout << t.step_index << ',' << tconst::step_mode_name(t.mode) << ',' << t.phase << ',' << t.macs << ','
              << t.latency_ns << ',' << t.cache_bytes << "\n";
  }
  return kExitPass;
}

struct BenchArgs {
  tconst::BenchPlan plan;
  std::optional<std::size_t> n_max;
  std::optional<std::uint64_t> budget;
  std::string model = "both";
  std::string out;
  std::string summary_out;
  bool no_warmup = false;
};

int cmd_bench(const CommonOptions& opts, BenchArgs args) {
  const auto cfg = resolve_config(opts);
  args.plan.seed = opts.seed;
  args.plan.n_max = args.n_max;
  args.plan.cache_budget_bytes = args.budget;
  args.plan.warmup = !args.no_warmup;
  args.plan.validate();
  tconst::Rng rng(weight_seed(opts.seed));
  const auto tc_model = tconst::build_tconst(cfg, rng);
  const auto bl_model = tconst::build_baseline(cfg, rng);
  tconst::BenchTargets targets;
  if (args.model != "baseline") targets.tconst = &tc_model;
  if (args.model != "tconst") targets.baseline = &bl_model;

  std::ofstream file;
  if (!args.out.empty()) {
    file.open(args.out);
    if (!file) throw tconst::ConfigError("cannot write '" + args.out + "'");
  }
  std::ostream& csv = args.out.empty() ? std::cout : file;
  tconst::write_csv_header(csv);
  std::vector<tconst::BenchRecord> all;
  tconst::run_bench(args.plan, targets, [&](const tconst::BenchRecord& r) {
    tconst::write_csv_row(csv, r);
    csv.flush();
    all.push_back(r);
  });
  if (!args.summary_out.empty()) {
    std::ofstream s(args.summary_out);
    tconst::write_summary(s, tconst::summarize(all));
  }
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constant-state transformer toolkit: cost formulas, invariant checks, generation and benchmarks"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* verify = app.add_subcommand("verify", "Run every invariant check on a config; exit 1 on any failure");
  add_common(verify, common);
  std::size_t verify_tokens = 64;
  verify->add_option("--tokens", verify_tokens, "Tokens generated for the cache-on/off comparison");

  auto* cost = app.add_subcommand("cost", "Print C1, C0, miss(N) and the hit bound as key=value lines");
  add_common(cost, common);
  std::size_t cost_n = 0;
  cost->add_option("--n", cost_n, "Total sequence length N")->required();

  auto* params = app.add_subcommand("params", "Count parameters of both models");
  add_common(params, common);

  auto* generate = app.add_subcommand("generate", "Prime with a random prompt and print greedy ids with step traces");
  add_common(generate, common);
  std::optional<std::size_t> gen_n;
  std::size_t gen_tokens = 6;
  std::string gen_model = "tconst";
  generate->add_option("--n", gen_n, "Prompt length (default 2*Wog+1)");
  generate->add_option("--tokens", gen_tokens, "Tokens to generate");
  generate->add_option("--model", gen_model, "tconst or baseline")->check(CLI::IsMember({"tconst", "baseline"}));

  auto* bench = app.add_subcommand("bench", "Latency, cost and cache-size protocol over growing prompt lengths (CSV)");
  add_common(bench, common);
  BenchArgs bench_args;
  bench->add_option("--n-start", bench_args.plan.n_start, "First prompt length");
  bench->add_option("--n-step", bench_args.plan.n_step, "Prompt length increment");
  bench->add_option("--n-max", bench_args.n_max, "Largest prompt length (default: until out of memory)");
  bench->add_option("--gen-tokens", bench_args.plan.gen_tokens, "Tokens generated per prompt");
  bench->add_option("--repeats", bench_args.plan.repeats, "Timed runs per prompt length; latency is the median");
  bench->add_option("--cache-budget", bench_args.budget, "Cache bytes treated as the memory limit");
  bench->add_flag("--no-warmup", bench_args.no_warmup, "Skip the untimed warm-up run");
  bench->add_option("--model", bench_args.model, "tconst, baseline or both")
      ->check(CLI::IsMember({"tconst", "baseline", "both"}));
  bench->add_option("--out", bench_args.out, "CSV path (default: standard output)");
  bench->add_option("--summary", bench_args.summary_out, "Also write trend statistics to this path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (*verify) return cmd_verify(common, verify_tokens);
    if (*cost) return cmd_cost(common, cost_n);
    if (*params) return cmd_params(common);
    if (*generate) return cmd_generate(common, gen_n, gen_tokens, gen_model);
    if (*bench) return cmd_bench(common, bench_args);
  } catch (const tconst::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tconst::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tconst::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
  return kExitUsage;
}
