#pragma once

#include <stdexcept>
#include <string>

namespace chunkfuse {

// Process exit codes shared by the CLI.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 1,
  kData = 2,
  kScorer = 3,
  kMetricUndefined = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

// A required column (or other schema element) is missing from an input.
class SchemaError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class InvalidLabelError : public DataError {
 public:
  using DataError::DataError;
};

class ScorerError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kScorer; }
};

// Violated interface contract between components (class-count mismatch,
// ragged prediction matrix, weight/model mismatch).
class ContractError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class TransportError : public ScorerError {
 public:
  TransportError(const std::string& what, int http_status, int attempts, bool retryable)
      : ScorerError(what), http_status_(http_status), attempts_(attempts), retryable_(retryable) {}

  // 0 when no HTTP response was received.
  int http_status() const noexcept { return http_status_; }
  int attempts() const noexcept { return attempts_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int http_status_;
  int attempts_;
  bool retryable_;
};

class ProtocolError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class NumericDivergenceError : public ScorerError {
 public:
  NumericDivergenceError(const std::string& what, long step) : ScorerError(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class MetricUndefinedError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kMetricUndefined; }
};

// Only one class is present in the labels handed to a binary ROC computation.
class DegenerateClassError : public MetricUndefinedError {
 public:
  DegenerateClassError(const std::string& what, int present_class)
      : MetricUndefinedError(what), present_class_(present_class) {}
  int present_class() const noexcept { return present_class_; }

 private:
  int present_class_;
};

}  // namespace chunkfuse
