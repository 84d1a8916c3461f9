#pragma once

#include <stdexcept>
#include <string>

namespace glioma {

// Every failure mode the pipeline can report. CLI prints the enum name as a
// machine-parsable category, so names are stable interface.
enum class ErrorCode {
  // NIfTI / case loading
  BadMagic,
  UnsupportedDatatype,
  TruncatedData,
  NonFiniteVoxel,
  BadHeader,
  MissingModality,
  ShapeMismatch,
  BadLabelValue,
  // preprocessing
  EmptyMask,
  ZeroVariance,
  DegenerateHistogram,
  SingularFit,
  OddDimension,
  // tensor engine / segmenter
  BadConfig,
  EmptyDataset,
  NonFiniteLoss,
  NoGraph,
  // metrics
  LengthMismatch,
  DegenerateRanks,
  // forest
  EmptyData,
  NonFiniteInput,
  DimensionMismatch,
  TooFewSamples,
  // survival
  EmptyBrainMask,
  TooFewRecords,
  NegativeDays,
  // phantom / operator surface
  SpecInfeasible,
  IoError,
  ConfigError,
  DataError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace glioma
