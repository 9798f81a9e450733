#pragma once

#include <stdexcept>
#include <string>

namespace reem {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A value violated a domain invariant (bad composition, bad range, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file was missing, truncated, or malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Transport-level provider failure after exhausting retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// The provider answered, but the reply could not be parsed as the
/// requested structure even after the corrective re-ask.
class StructuredOutputError : public Error {
 public:
  StructuredOutputError(const std::string& what, std::string raw_text)
      : Error(what), raw_text_(std::move(raw_text)) {}

  const std::string& raw_text() const { return raw_text_; }

 private:
  std::string raw_text_;
};

/// Codebook consolidation produced output violating codebook invariants.
class ConsolidationError : public Error {
 public:
  using Error::Error;
};

/// Pipeline configuration rejected (unknown key, out-of-range value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was run before the stage it depends on.
class DependencyError : public Error {
 public:
  DependencyError(const std::string& what, std::string missing_stage)
      : Error(what), missing_stage_(std::move(missing_stage)) {}

  const std::string& missing_stage() const { return missing_stage_; }

 private:
  std::string missing_stage_;
};

}  // namespace reem
