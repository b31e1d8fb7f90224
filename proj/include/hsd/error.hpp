#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hsd {

enum class ErrorCode {
  // corpus
  MissingColumn,
  UnknownLabel,
  EmptyText,
  MalformedRecord,
  DuplicateId,
  EmptyClass,
  TargetBelowOne,
  TooFewExamples,
  Io,
  // features / config
  InvalidConfig,
  // classifier
  DimensionMismatch,
  EmptyBatch,
  SingleClassCorpus,
  BadMagic,
  UnsupportedVersion,
  CorruptPayload,
  // debiaser
  NotEnoughExamples,
  EmptyInput,
  InvalidTemplate,
  DegenerateDistribution,
  Timeout,
  BackendError,
  EmptyGeneration,
  // metrics
  LengthMismatch,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI exit codes, HTTP status mapping) can branch without parsing
/// messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by generation backends; `status` is the HTTP status, or 0 when no
/// response was received.
class BackendError : public Error {
 public:
  BackendError(int status, const std::string& message)
      : Error(ErrorCode::BackendError,
              "backend error (status " + std::to_string(status) + "): " + message),
        status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace hsd
