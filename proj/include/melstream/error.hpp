#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace melstream {

enum class ErrorCode {
  // audio_io
  UnsupportedFormat,
  CorruptHeader,
  CorruptData,
  EmptyAudio,
  Io,
  // dsp
  InvalidConfig,
  SignalTooShort,
  EmptyFilter,
  // streaming
  BufferOverflow,
  AlreadyFlushed,
  // inference
  ManifestParse,
  MissingWeight,
  ShapeMismatch,
  UnsupportedOp,
  CyclicGraph,
  UnknownNode,
  InputShapeMismatch,
  TrackTooShort,
  // transfer
  NonFiniteGradient,
  NonFiniteLoss,
  DegenerateDataset,
  DimMismatch,
  // eval
  ClassTooSmall,
  EmptyInput,
  DegenerateClass,
  NoEvaluableTracks,
  InvalidDataset,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace melstream
