#include "apnea/error.hpp"

namespace apnea {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NightTooShort: return "NightTooShort";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::NoRecordedGraph: return "NoRecordedGraph";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::UnsortedInput: return "UnsortedInput";
    case ErrorCode::NonPositiveTst: return "NonPositiveTst";
    case ErrorCode::NegativeAhi: return "NegativeAhi";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace {
std::string compose(ErrorCode code, std::string_view module, std::string_view detail) {
  std::string msg;
  msg.reserve(module.size() + detail.size() + 24);
  msg.append(module).append(": ").append(to_string(code));
  if (!detail.empty()) msg.append(": ").append(detail);
  return msg;
}
}  // namespace

Error::Error(ErrorCode code, std::string_view module, std::string_view detail)
    : std::runtime_error(compose(code, module, detail)), code_(code) {}

}  // namespace apnea
