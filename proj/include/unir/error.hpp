#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unir {

enum class ErrorCode {
  MalformedRecord,
  DuplicateId,
  DanglingReference,
  ModalityMismatch,
  MissingFeature,
  DimMismatch,
  ModeMismatch,
  TooFewRows,
  BadMagic,
  ChecksumMismatch,
  NonSquare,
  NonPositiveTemperature,
  EmptyCorpus,
  BatchTooSmall,
  UnknownFormat,
  ConfigInvalid,
  EmptyHeldOut,
  NothingHeldIn,
  Io,
};

// Stable upper-snake name used in CLI diagnostics, e.g. "DANGLING_REF".
std::string_view error_code_name(ErrorCode code);

// True for errors caused by bad input data (CLI exit code 2).
bool is_data_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace unir
