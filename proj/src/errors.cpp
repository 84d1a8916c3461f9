#include "glioma/errors.hpp"

namespace glioma {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::NonFiniteVoxel: return "NonFiniteVoxel";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::MissingModality: return "MissingModality";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadLabelValue: return "BadLabelValue";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DegenerateHistogram: return "DegenerateHistogram";
    case ErrorCode::SingularFit: return "SingularFit";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NoGraph: return "NoGraph";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateRanks: return "DegenerateRanks";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EmptyBrainMask: return "EmptyBrainMask";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::NegativeDays: return "NegativeDays";
    case ErrorCode::SpecInfeasible: return "SpecInfeasible";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DataError: return "DataError";
  }
  return "UnknownError";
}

}  // namespace glioma
