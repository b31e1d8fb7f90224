#include "hsd/error.hpp"

namespace hsd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::TargetBelowOne: return "TargetBelowOne";
    case ErrorCode::TooFewExamples: return "TooFewExamples";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::SingleClassCorpus: return "SingleClassCorpus";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::CorruptPayload: return "CorruptPayload";
    case ErrorCode::NotEnoughExamples: return "NotEnoughExamples";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidTemplate: return "InvalidTemplate";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

}  // namespace hsd
