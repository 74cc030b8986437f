#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace apnea {

enum class ErrorCode {
  NightTooShort,
  EmptyInput,
  NonFiniteSample,
  UnsupportedFormat,
  DegenerateInput,
  ShapeMismatch,
  NonFiniteActivation,
  NoRecordedGraph,
  CorruptCheckpoint,
  VersionMismatch,
  EmptyDataset,
  MissingClass,
  MissingCheckpoint,
  UnsortedInput,
  NonPositiveTst,
  NegativeAhi,
  SingleClass,
  TooFewSubjects,
  ConfigInvalid,
  UnknownSubcommand,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library. The message is prefixed with the
/// originating module, e.g. "dsp: NightTooShort: ...".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string_view module, std::string_view detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace apnea
