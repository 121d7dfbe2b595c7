#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmag {

enum class ErrorCode {
  kZeroVector,
  kDimensionMismatch,
  kEmptyCategory,
  kDegenerateFusion,
  kFileNotFound,
  kMalformedRecord,
  kUnknownCategory,
  kCategoryMismatch,
  kIoError,
  kChecksumMismatch,
  kVersionMismatch,
  kInvalidArgument,
  kInvalidTaxonomy,
  kAdvisorUnavailable,
  kNoViewsAvailable,
  kMissingTextPrior,
  kJudgeUnavailable,
  kMissingCoreCategory,
  kBudgetInfeasible,
  kInfeasibleSpec,
  kScenarioConstructionFailed,
  kTransportError,
};

// Stable name used in error documents, e.g. "ChecksumMismatch".
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace cmag
