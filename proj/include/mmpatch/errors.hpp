#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmpatch {

/// Caller passed a value outside an operation's documented domain.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A file or directory could not be read, decoded or parsed.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training aborted. `step()` is the global step index at which it happened.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t step, bool diverged)
      : std::runtime_error(what), step_(step), diverged_(diverged) {}

  std::size_t step() const noexcept { return step_; }
  bool diverged() const noexcept { return diverged_; }

 private:
  std::size_t step_;
  bool diverged_;
};

}  // namespace mmpatch
