#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mia {

enum class ErrorCode {
  kInvalidArgument,
  kPrecondition,
  kTrainingFailure,
  kQueryFailure,
  kInvalidBracket,
  kInitFailure,
  kInvalidInit,
  kInsufficientAux,
  kInsufficientCorrect,
  kUndefinedCorrelation,
  kConfigError,
  kIoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class QueryFailure : public Error {
 public:
  QueryFailure(const std::string& what, int attempts)
      : Error(ErrorCode::kQueryFailure, what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, std::size_t epoch)
      : Error(ErrorCode::kTrainingFailure, what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(ErrorCode::kConfigError, key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Process exit codes used by the command-line tool.
int exit_code_for(ErrorCode code);

}  // namespace mia
