#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace promptsmith {

enum class ErrorKind {
    InvalidArgument,
    Io,
    Config,
    // task-data
    MalformedLine,
    UnknownLabel,
    DuplicateSampleId,
    EmptyDataset,
    BadFractions,
    InvalidTask,
    // strategy-pool
    MissingOptimizer,
    OptimizerEmptyResponse,
    ComboRepeat,
    UnknownStrategy,
    InvalidStrategy,
    // model-backend
    Transport,
    RateLimited,
    AuthMissing,
    RetriesExhausted,
    AllSamplesFailed,
    NoJsonFound,
    MissingKeys,
    // eval-harness
    GoldNotInLabelSet,
    // memory
    RewardOutOfRange,
    SimilarityProviderFailure,
    EmptyStats,
    SchemaVersionMismatch,
    CorruptFile,
    VersionConflict,
    // rws
    BudgetExceeded,
    BudgetExhausted,
    NoReference,
    // eso
    AnalysisUnparseable,
    EmptyRewrite,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::vector<std::string> details = {})
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind),
          details_(std::move(details)) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Structured payload, e.g. the missing keys of MissingKeys.
    const std::vector<std::string>& details() const noexcept { return details_; }

private:
    ErrorKind kind_;
    std::vector<std::string> details_;
};

}  // namespace promptsmith
