#include "promptsmith/eval_harness.hpp"

#include <algorithm>

#include "promptsmith/error.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;

std::string prediction_name(const Prediction& p) { return p ? *p : std::string(kUnparsed); }

int ErrorDistribution::total() const {
    int n = 0;
    for (const auto& [k, v] : buckets) n += v;
    return n;
}

std::vector<std::pair<Confusion, int>> ErrorDistribution::sorted() const {
    std::vector<std::pair<Confusion, int>> out(buckets.begin(), buckets.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

std::string ErrorDistribution::describe() const {
    if (buckets.empty()) return "(no errors)";
    std::string out;
    for (const auto& [k, n] : sorted()) {
        if (!out.empty()) out += '\n';
        out += "- " + k.gold + " -> " + prediction_name(k.predicted) + ": " + std::to_string(n);
    }
    return out;
}

int EvalResult::correct() const {
    int n = 0;
    for (const auto& r : records) n += r.score;
    return n;
}

Prediction normalize_answer(std::string_view raw, const std::vector<std::string>& label_set) {
    const auto out = normalize_label(raw);
    std::vector<std::string> norm;
    norm.reserve(label_set.size());
    for (const auto& l : label_set) norm.push_back(normalize_label(l));

    for (std::size_t i = 0; i < norm.size(); ++i) {
        if (norm[i] == out) return label_set[i];
    }
    if (out == normalize_label(kUnparsed)) return std::nullopt;
    std::optional<std::size_t> hit;
    for (std::size_t i = 0; i < norm.size(); ++i) {
        if (norm[i].empty() || out.find(norm[i]) == std::string::npos) continue;
        if (hit) return std::nullopt;  // two labels present: ambiguous
        hit = i;
    }
    if (hit) return label_set[*hit];
    return std::nullopt;
}

SampleRecord score_sample(std::string_view raw, std::string_view gold, const std::vector<std::string>& label_set) {
    const auto gold_norm = normalize_label(gold);
    auto it = std::find_if(label_set.begin(), label_set.end(),
                           [&](const std::string& l) { return normalize_label(l) == gold_norm; });
    if (it == label_set.end()) {
        throw Error(ErrorKind::GoldNotInLabelSet, "gold label '" + std::string(gold) + "' is not in the label set");
    }
    SampleRecord r;
    r.raw_output = std::string(raw);
    r.gold_label = *it;
    r.predicted = normalize_answer(raw, label_set);
    r.score = (r.predicted && *r.predicted == r.gold_label) ? 1 : 0;
    return r;
}

ErrorDistribution compute_error_distribution(const std::vector<SampleRecord>& records) {
    ErrorDistribution e;
    for (const auto& r : records) {
        if (r.score == 0) ++e.buckets[{r.gold_label, r.predicted}];
    }
    return e;
}

EvalResult evaluate_prompt(const PromptCandidate& prompt, const Task& task, const Dataset& d,
                           const ModelHandle& inference, EvalHistory* history) {
    if (d.empty()) throw Error(ErrorKind::EmptyDataset, "cannot evaluate on an empty dataset");
    if (inference.backend == nullptr) throw Error(ErrorKind::InvalidArgument, "no inference backend");

    const auto batch = batch_infer(*inference.backend, prompt.text, d.samples, inference.model, inference.seed);

    EvalResult result;
    result.prompt = prompt;
    result.dataset_tag = std::string(to_string(d.split_tag));
    result.records.reserve(d.size());
    int correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& sample = d.samples[i];
        SampleRecord rec;
        if (batch.outputs[i]) {
            rec = score_sample(*batch.outputs[i], sample.gold_label, task.label_set);
        } else {
            rec = score_sample("", sample.gold_label, task.label_set);
            rec.predicted.reset();
            rec.score = 0;
            rec.error = batch.errors[i];
        }
        rec.sample_id = sample.sample_id;
        correct += rec.score;
        result.records.push_back(std::move(rec));
    }
    result.accuracy = static_cast<double>(correct) / static_cast<double>(d.size());
    result.error_distribution = compute_error_distribution(result.records);
    if (history) history->push_back(result);
    return result;
}

json error_distribution_to_json(const ErrorDistribution& e) {
    json arr = json::array();
    for (const auto& [k, n] : e.sorted()) {
        arr.push_back({{"gold", k.gold}, {"predicted", k.predicted ? json(*k.predicted) : json(nullptr)}, {"count", n}});
    }
    return arr;
}

json eval_result_to_json(const EvalResult& r) {
    json records = json::array();
    for (const auto& rec : r.records) {
        json j{{"sample_id", rec.sample_id},
               {"raw_output", rec.raw_output},
               {"predicted", rec.predicted ? json(*rec.predicted) : json(nullptr)},
               {"gold_label", rec.gold_label},
               {"score", rec.score}};
        if (!rec.error.empty()) j["error"] = rec.error;
        records.push_back(std::move(j));
    }
    return json{{"prompt", candidate_to_json(r.prompt)},
                {"dataset", r.dataset_tag},
                {"accuracy", r.accuracy},
                {"correct", r.correct()},
                {"total", r.records.size()},
                {"error_distribution", error_distribution_to_json(r.error_distribution)},
                {"records", std::move(records)}};
}

Evaluator::Evaluator(const Task& task, const Dataset& dataset, ModelHandle inference)
    : task_(task), dataset_(dataset), inference_(std::move(inference)) {}

EvalResult Evaluator::evaluate(const PromptCandidate& prompt) {
    if (auto it = cache_.find(prompt.text); it != cache_.end()) {
        EvalResult r = it->second;
        r.prompt = prompt;
        return r;
    }
    EvalResult r = evaluate_prompt(prompt, task_, dataset_, inference_, &history_);
    ++evaluations_;
    cache_.emplace(prompt.text, r);
    return r;
}

}  // namespace promptsmith
