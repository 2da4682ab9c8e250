#pragma once

#include <stdexcept>
#include <string>

namespace esrgcnn {

// Raised when a caller breaks an operation's precondition (shape, channel or
// range mismatch). Always a programming error on the caller's side.
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// Requested an upsampling mode the model was not configured with.
class ValveError : public std::runtime_error {
 public:
  explicit ValveError(const std::string& what) : std::runtime_error(what) {}
};

class IngestError : public std::runtime_error {
 public:
  explicit IngestError(const std::string& what) : std::runtime_error(what) {}
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(long long step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  long long step() const noexcept { return step_; }

 private:
  long long step_;
};

enum class CheckpointErrorKind { Io, Magic, Version, Truncated, DimOverflow, Config, Content };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

namespace detail {

[[noreturn]] inline void contract_fail(const std::string& what) { throw ContractViolation(what); }

inline void require(bool ok, const char* what) {
  if (!ok) contract_fail(what);
}

}  // namespace detail
}  // namespace esrgcnn
