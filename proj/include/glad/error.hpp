#pragma once

#include <stdexcept>
#include <string>

namespace glad {

enum class ErrorCode {
  ShapeMismatch,
  NumericDomain,
  NotScalar,
  DetachedLoss,
  MissingGrad,
  StepOutOfRange,
  DimMismatch,
  MissingHead,
  EmptyMask,
  LabelOutOfRange,
  PathMissing,
  SingleHead,
  ConfigConflict,
  ConfigError,
  DataMissing,
  HeadShapeMismatch,
  MissingEntry,
  IoFailure,
  BadMagic,
  TruncatedFile,
  VersionUnsupported,
  IndivisibleClasses,
};

const char* to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by strict config parsing; key() names the offending entry.
class ConfigKeyError : public Error {
 public:
  ConfigKeyError(std::string key, const std::string& what)
      : Error(ErrorCode::ConfigError, key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace glad
