#include "promptsmith/error.hpp"

namespace promptsmith {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Io: return "Io";
        case ErrorKind::Config: return "Config";
        case ErrorKind::MalformedLine: return "MalformedLine";
        case ErrorKind::UnknownLabel: return "UnknownLabel";
        case ErrorKind::DuplicateSampleId: return "DuplicateSampleId";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::BadFractions: return "BadFractions";
        case ErrorKind::InvalidTask: return "InvalidTask";
        case ErrorKind::MissingOptimizer: return "MissingOptimizer";
        case ErrorKind::OptimizerEmptyResponse: return "OptimizerEmptyResponse";
        case ErrorKind::ComboRepeat: return "ComboRepeat";
        case ErrorKind::UnknownStrategy: return "UnknownStrategy";
        case ErrorKind::InvalidStrategy: return "InvalidStrategy";
        case ErrorKind::Transport: return "Transport";
        case ErrorKind::RateLimited: return "RateLimited";
        case ErrorKind::AuthMissing: return "AuthMissing";
        case ErrorKind::RetriesExhausted: return "RetriesExhausted";
        case ErrorKind::AllSamplesFailed: return "AllSamplesFailed";
        case ErrorKind::NoJsonFound: return "NoJsonFound";
        case ErrorKind::MissingKeys: return "MissingKeys";
        case ErrorKind::GoldNotInLabelSet: return "GoldNotInLabelSet";
        case ErrorKind::RewardOutOfRange: return "RewardOutOfRange";
        case ErrorKind::SimilarityProviderFailure: return "SimilarityProviderFailure";
        case ErrorKind::EmptyStats: return "EmptyStats";
        case ErrorKind::SchemaVersionMismatch: return "SchemaVersionMismatch";
        case ErrorKind::CorruptFile: return "CorruptFile";
        case ErrorKind::VersionConflict: return "VersionConflict";
        case ErrorKind::BudgetExceeded: return "BudgetExceeded";
        case ErrorKind::BudgetExhausted: return "BudgetExhausted";
        case ErrorKind::NoReference: return "NoReference";
        case ErrorKind::AnalysisUnparseable: return "AnalysisUnparseable";
        case ErrorKind::EmptyRewrite: return "EmptyRewrite";
    }
    return "Unknown";
}

}  // namespace promptsmith
