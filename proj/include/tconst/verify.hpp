#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tconst/config.hpp"

namespace tconst {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t equivalence_tokens = 64;
  std::size_t causality_cases = 10;
};

// Shape-sum of every declared weight, from the config alone.
std::uint64_t expected_tconst_parameters(const ModelConfig& config);
std::uint64_t expected_baseline_parameters(const ModelConfig& config);

// Cost, memory, equivalence, causality and parameter checks on one config.
// Sized for small configs; every check is exact except the logit tolerance.
std::vector<CheckResult> run_verify_suite(const ModelConfig& config, const VerifyOptions& options);

}  // namespace tconst
