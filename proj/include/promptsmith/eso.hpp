#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptsmith/error.hpp"
#include "promptsmith/eval_harness.hpp"
#include "promptsmith/strategy_pool.hpp"
#include "promptsmith/task_data.hpp"

namespace promptsmith {

struct BadCase {
    std::string sample_id;
    std::vector<MediaRef> media;
    std::string gold_label;
    Prediction predicted;
    std::string raw_excerpt;

    bool operator==(const BadCase&) const = default;
};

struct ErrorAnalysis {
    std::string error_causes;
    std::string improvement_methods;
    int source_prompt_version = 0;
};

struct EsoConfig {
    int max_iterations = 10;
    int bad_cases = 5;
    std::size_t excerpt_chars = 500;

    static EsoConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

enum class StopReason { MaxIterations, PerfectAccuracy, NoErrors, Error };
std::string_view to_string(StopReason r);

struct EsoIteration {
    PromptCandidate prompt;
    EvalResult eval;
    std::optional<ErrorAnalysis> analysis;  // analysis of this iteration's errors, if one was run
    bool identical_rewrite = false;         // text equals the previous iteration's
};

struct OptimizationRun {
    std::string task_id;
    std::vector<EsoIteration> iterations;  // iterations[0] is the initial evaluation
    std::size_t best_index = 0;
    StopReason stopped_reason = StopReason::MaxIterations;
    std::string error;  // set when stopped_reason is Error
    ErrorKind error_kind = ErrorKind::InvalidArgument;
    int rewrite_calls = 0;

    const PromptCandidate& best_prompt() const { return iterations.at(best_index).prompt; }
    double best_accuracy() const { return iterations.at(best_index).eval.accuracy; }
};

// Round-robin over confusion buckets, largest first, taking the earliest
// unused sample of the bucket on each visit. All errors when there are at
// most n.
std::vector<BadCase> select_bad_cases(const EvalResult& eval, const Dataset& d, int n,
                                      std::size_t excerpt_chars = 500);

std::string analysis_template();
std::string summary_template();

std::string format_strategies(const StrategyCombo& combo);
std::string format_bad_cases(const std::vector<BadCase>& cases);

struct HistoryItem {
    std::string prompt_text;
    double accuracy = 0.0;
    std::string error_summary;
};
std::string format_history(const std::vector<HistoryItem>& history);

// Throws AnalysisUnparseable when neither the answer nor the one retry
// holds both keys with non-empty values.
ErrorAnalysis analyze_errors(const PromptCandidate& prompt, const ErrorDistribution& errors,
                             const std::vector<BadCase>& cases, const ModelHandle& optimizer);

// Throws EmptyRewrite on a blank answer.
PromptCandidate rewrite_prompt(const std::vector<HistoryItem>& history, const PromptCandidate& current,
                               const ErrorAnalysis& analysis, const ModelHandle& optimizer);

// Evaluate, then reflect and rewrite until max_iterations rewrites, perfect
// accuracy, or no errors. The best iteration wins, ties to the earliest.
// Analysis or rewrite failures end the run with stopped_reason Error.
OptimizationRun run_eso(const PromptCandidate& initial, Evaluator& evaluator, const ModelHandle& optimizer,
                        const EsoConfig& cfg);
OptimizationRun run_eso(const PromptCandidate& initial, const Task& task, const Dataset& val,
                        const ModelHandle& inference, const ModelHandle& optimizer, int max_iterations);

nlohmann::json optimization_run_to_json(const OptimizationRun& run);

}  // namespace promptsmith
