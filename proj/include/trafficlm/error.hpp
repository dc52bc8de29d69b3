#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trafficlm {

enum class ErrorCode {
  // capture parsing and flows
  BadMagic,
  TruncatedCapture,
  UnsupportedLinkType,
  EmptyFlow,
  BadSpec,
  // tokenization
  VocabTooSmall,
  EmptyBurst,
  EmptyInput,
  UnknownToken,
  IrreversibleSequence,
  // image representation
  IndivisiblePatch,
  BadPatchLen,
  // tensors and checkpoints
  ShapeMismatch,
  IdOutOfRange,
  TooLong,
  VersionMismatch,
  CorruptTable,
  // training
  NothingToMask,
  InsufficientFlows,
  NoEligibleFlows,
  TooShort,
  IncompatibleObjective,
  EmptyCorpus,
  WrongMode,
  DegenerateLabels,
  EmptyPrompt,
  // metrics
  LengthMismatch,
  LabelOutOfRange,
  EmptySample,
  // plumbing
  InvalidArgument,
  Config,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedCapture: return "TruncatedCapture";
    case ErrorCode::UnsupportedLinkType: return "UnsupportedLinkType";
    case ErrorCode::EmptyFlow: return "EmptyFlow";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::VocabTooSmall: return "VocabTooSmall";
    case ErrorCode::EmptyBurst: return "EmptyBurst";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::IrreversibleSequence: return "IrreversibleSequence";
    case ErrorCode::IndivisiblePatch: return "IndivisiblePatch";
    case ErrorCode::BadPatchLen: return "BadPatchLen";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::TooLong: return "TooLong";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptTable: return "CorruptTable";
    case ErrorCode::NothingToMask: return "NothingToMask";
    case ErrorCode::InsufficientFlows: return "InsufficientFlows";
    case ErrorCode::NoEligibleFlows: return "NoEligibleFlows";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::IncompatibleObjective: return "IncompatibleObjective";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::WrongMode: return "WrongMode";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map them without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trafficlm
