#include "melstream/error.hpp"

namespace melstream {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::CorruptData: return "CorruptData";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::EmptyFilter: return "EmptyFilter";
    case ErrorCode::BufferOverflow: return "BufferOverflow";
    case ErrorCode::AlreadyFlushed: return "AlreadyFlushed";
    case ErrorCode::ManifestParse: return "ManifestParse";
    case ErrorCode::MissingWeight: return "MissingWeight";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnsupportedOp: return "UnsupportedOp";
    case ErrorCode::CyclicGraph: return "CyclicGraph";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::InputShapeMismatch: return "InputShapeMismatch";
    case ErrorCode::TrackTooShort: return "TrackTooShort";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateDataset: return "DegenerateDataset";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateClass: return "DegenerateClass";
    case ErrorCode::NoEvaluableTracks: return "NoEvaluableTracks";
    case ErrorCode::InvalidDataset: return "InvalidDataset";
  }
  return "Unknown";
}

}  // namespace melstream
