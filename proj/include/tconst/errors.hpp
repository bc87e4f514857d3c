#pragma once

#include <stdexcept>
#include <string>

namespace tconst {

// Shape mismatches, fully-masked rows, non-finite values, out-of-range ids.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inference-state misuse: stepping an unprimed session, appending into a full
// generation window, syncing mid-window.
class LifecycleError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class WindowOverflowError : public LifecycleError {
 public:
  using LifecycleError::LifecycleError;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace tconst
