#include "cmag/error.hpp"

namespace cmag {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyCategory: return "EmptyCategory";
    case ErrorCode::kDegenerateFusion: return "DegenerateFusion";
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kUnknownCategory: return "UnknownCategory";
    case ErrorCode::kCategoryMismatch: return "CategoryMismatch";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidTaxonomy: return "InvalidTaxonomy";
    case ErrorCode::kAdvisorUnavailable: return "AdvisorUnavailable";
    case ErrorCode::kNoViewsAvailable: return "NoViewsAvailable";
    case ErrorCode::kMissingTextPrior: return "MissingTextPrior";
    case ErrorCode::kJudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::kMissingCoreCategory: return "MissingCoreCategory";
    case ErrorCode::kBudgetInfeasible: return "BudgetInfeasible";
    case ErrorCode::kInfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::kScenarioConstructionFailed: return "ScenarioConstructionFailed";
    case ErrorCode::kTransportError: return "TransportError";
  }
  return "Unknown";
}

}  // namespace cmag
