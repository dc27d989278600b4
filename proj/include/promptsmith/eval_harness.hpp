#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptsmith/model_backend.hpp"
#include "promptsmith/strategy_pool.hpp"
#include "promptsmith/task_data.hpp"

namespace promptsmith {

// Predicted label; nullopt is UNPARSED.
using Prediction = std::optional<std::string>;

inline constexpr std::string_view kUnparsed = "UNPARSED";

std::string prediction_name(const Prediction& p);

struct SampleRecord {
    std::string sample_id;
    std::string raw_output;
    Prediction predicted;
    std::string gold_label;  // canonical label-set entry
    int score = 0;
    std::string error;  // non-empty when inference failed for this sample

    bool operator==(const SampleRecord&) const = default;
};

struct Confusion {
    std::string gold;
    Prediction predicted;

    auto operator<=>(const Confusion&) const = default;
    bool operator==(const Confusion&) const = default;
};

struct ErrorDistribution {
    std::map<Confusion, int> buckets;

    int total() const;
    bool empty() const { return buckets.empty(); }
    // Largest bucket first; ties by key order.
    std::vector<std::pair<Confusion, int>> sorted() const;
    // One "- gold -> predicted: count" line per bucket, largest first.
    std::string describe() const;

    bool operator==(const ErrorDistribution&) const = default;
};

struct EvalResult {
    PromptCandidate prompt;
    std::string dataset_tag;
    std::vector<SampleRecord> records;
    double accuracy = 0.0;
    ErrorDistribution error_distribution;

    int correct() const;
};

// trim, strip trailing punctuation, case-fold; then exact label match, else
// the single label occurring as a substring, else UNPARSED.
Prediction normalize_answer(std::string_view raw, const std::vector<std::string>& label_set);

// Throws GoldNotInLabelSet.
SampleRecord score_sample(std::string_view raw, std::string_view gold, const std::vector<std::string>& label_set);

ErrorDistribution compute_error_distribution(const std::vector<SampleRecord>& records);

// Run history: every evaluation of a run, in order.
using EvalHistory = std::vector<EvalResult>;

// Failed samples score 0 with predicted UNPARSED. Throws EmptyDataset and
// AllSamplesFailed.
EvalResult evaluate_prompt(const PromptCandidate& prompt, const Task& task, const Dataset& d,
                           const ModelHandle& inference, EvalHistory* history = nullptr);

nlohmann::json error_distribution_to_json(const ErrorDistribution& e);
nlohmann::json eval_result_to_json(const EvalResult& r);

// Evaluates prompts against one dataset, reusing earlier results for prompt
// text it has already scored (the inference model runs at temperature 0).
class Evaluator {
public:
    Evaluator(const Task& task, const Dataset& dataset, ModelHandle inference);

    EvalResult evaluate(const PromptCandidate& prompt);
    bool has_cached(const std::string& prompt_text) const { return cache_.count(prompt_text) != 0; }

    // Evaluations that actually ran the model.
    int evaluations() const { return evaluations_; }
    const EvalHistory& history() const { return history_; }
    const Task& task() const { return task_; }
    const Dataset& dataset() const { return dataset_; }

private:
    const Task& task_;
    const Dataset& dataset_;
    ModelHandle inference_;
    std::map<std::string, EvalResult> cache_;
    EvalHistory history_;
    int evaluations_ = 0;
};

}  // namespace promptsmith
