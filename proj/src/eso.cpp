#include "promptsmith/eso.hpp"

#include <algorithm>
#include <map>

#include "promptsmith/error.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;

namespace {

const char* const kAnalysisTemplate =
    "You are currently an accomplished prompt engineer. Your task is to analyze potential causes of errors based on the model inference prompt and typical erroneous samples. These causes will be used to optimize the model inference prompt.\n"
    "The following is the prompt for model inference:\n"
    "{prompt}\n"
    "The strategies obtained in Reinforcement Warm-up Strategy are:\n"
    "{strategies}\n"
    "The current error distribution of the model is as follows:\n"
    "{error_distribution}\n"
    "Here are some representative error samples:\n"
    "{error_cases}\n"
    "Please analyze the possible causes of errors from the following perspectives:\n"
    "1. Clarity of Task Definition:\n"
    "(1) Typically, models with a 2B parameter size have limited instruction-following capabilities. Is the task description in the prompt overly complex, insufficiently concise, or unclear, leading to the model's inability to comprehend the task\n"
    "(2) Are the descriptions of options unclear, causing the model to misunderstand the meaning of the options?\n"
    "(3) Are the boundaries between the options indistinct, causing the model to easily confuse certain options?\n"
    "2. Model Capability:\n"
    "(1) Although the task and options are clearly described, the model's capacity may be insufficient to solve the task. It might be necessary to attempt task decomposition or other methods to reduce task complexity.\n"
    "Based on the error cause analysis, please propose improvement methods for this prompt. Note that in the improvement suggestions regarding options, the names of the options must not be changed. Instead, identify the boundaries between option definitions to help the model clearly understand the specific meaning of each option and prevent confusion.\n"
    "Please follow this format to structure your output: {\"Error Causes\": \"\", \"Improvement Methods\": \"\"}";

const char* const kSummaryTemplate =
    "You are currently an accomplished prompt engineer. Your task is to optimize the prompt used for inference based on historical records of prompt optimization, the current inference prompt, error distribution, and error cause analysis, with the aim of enhancing the inference performance of smaller models.\n"
    "The following are the prompts, accuracy rates, and error distribution information from previous inference rounds:\n"
    "{historical_results}\n"
    "For the current inference, my prompt is:\n"
    "{prompt}\n"
    "The current analysis of error causes and directions for optimization are as follows:\n"
    "{error_analysis_results}\n"
    "Please provide the revised prompt directly, omitting the process of analysis.";

const char* const kFormatReminder =
    "\nRespond with only a JSON object of the form {\"Error Causes\": \"...\", \"Improvement Methods\": \"...\"}.";

std::string media_line(const MediaRef& m) {
    switch (m.kind) {
        case MediaKind::ImagePath: return "Image: " + m.payload;
        case MediaKind::ImageUrl: return "Image: " + m.payload;
        case MediaKind::ImageBase64: return "Image: (inline)";
        case MediaKind::None: return "";
    }
    return "";
}

}  // namespace

EsoConfig EsoConfig::from_json(const json& j) {
    EsoConfig c;
    try {
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.bad_cases = j.value("bad_cases", c.bad_cases);
        c.excerpt_chars = j.value("excerpt_chars", c.excerpt_chars);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("eso config: ") + e.what());
    }
    if (c.max_iterations < 0) throw Error(ErrorKind::Config, "max_iterations must be >= 0");
    if (c.bad_cases < 1) throw Error(ErrorKind::Config, "bad_cases must be >= 1");
    return c;
}

json EsoConfig::to_json() const {
    return json{{"max_iterations", max_iterations}, {"bad_cases", bad_cases}, {"excerpt_chars", excerpt_chars}};
}

std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::MaxIterations: return "max_iterations";
        case StopReason::PerfectAccuracy: return "perfect_accuracy";
        case StopReason::NoErrors: return "no_errors";
        case StopReason::Error: return "error";
    }
    return "error";
}

std::vector<BadCase> select_bad_cases(const EvalResult& eval, const Dataset& d, int n, std::size_t excerpt_chars) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "bad case count must be >= 1");
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : d.samples) by_id[s.sample_id] = &s;

    auto make = [&](const SampleRecord& r) {
        BadCase c;
        c.sample_id = r.sample_id;
        if (auto it = by_id.find(r.sample_id); it != by_id.end()) c.media = it->second->media;
        c.gold_label = r.gold_label;
        c.predicted = r.predicted;
        c.raw_excerpt = truncate_utf8(r.raw_output, excerpt_chars);
        return c;
    };

    std::vector<const SampleRecord*> errors;
    for (const auto& r : eval.records) {
        if (r.score == 0) errors.push_back(&r);
    }
    std::vector<BadCase> out;
    if (errors.size() <= static_cast<std::size_t>(n)) {
        for (const auto* r : errors) out.push_back(make(*r));
        return out;
    }

    std::map<Confusion, std::vector<const SampleRecord*>> buckets;
    for (const auto* r : errors) buckets[Confusion{r->gold_label, r->predicted}].push_back(r);
    std::vector<std::vector<const SampleRecord*>*> order;
    for (auto& [key, members] : buckets) order.push_back(&members);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->size() > b->size(); });

    std::vector<std::size_t> taken(order.size(), 0);
    while (out.size() < static_cast<std::size_t>(n)) {
        for (std::size_t b = 0; b < order.size() && out.size() < static_cast<std::size_t>(n); ++b) {
            if (taken[b] < order[b]->size()) out.push_back(make(*(*order[b])[taken[b]++]));
        }
    }
    return out;
}

std::string analysis_template() { return kAnalysisTemplate; }
std::string summary_template() { return kSummaryTemplate; }

std::string format_strategies(const StrategyCombo& combo) {
    return combo.empty() ? "(none)" : join(combo.ids, ", ");
}

std::string format_bad_cases(const std::vector<BadCase>& cases) {
    std::string out;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        if (i > 0) out += "\n";
        out += "Case " + std::to_string(i + 1) + " (" + c.sample_id + "):\n";
        for (const auto& m : c.media) {
            if (auto line = media_line(m); !line.empty()) out += line + "\n";
        }
        out += "Gold label: " + c.gold_label + "\n";
        out += "Predicted label: " + prediction_name(c.predicted) + "\n";
        out += "Model output: " + c.raw_excerpt;
    }
    return out;
}

std::string format_history(const std::vector<HistoryItem>& history) {
    if (history.empty()) return "(no previous rounds)";
    std::string out;
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& h = history[i];
        if (i > 0) out += "\n";
        out += "Round " + std::to_string(i) + ":\n";
        out += "Prompt: " + h.prompt_text + "\n";
        out += "Accuracy: " + format_fixed(h.accuracy, 4) + "\n";
        out += "Error distribution:\n" + h.error_summary;
    }
    return out;
}

ErrorAnalysis analyze_errors(const PromptCandidate& prompt, const ErrorDistribution& errors,
                             const std::vector<BadCase>& cases, const ModelHandle& optimizer) {
    if (cases.empty()) throw Error(ErrorKind::InvalidArgument, "error analysis needs at least one bad case");
    if (optimizer.backend == nullptr) throw Error(ErrorKind::MissingOptimizer, "error analysis needs an optimizer");
    const std::string request = fill_template(kAnalysisTemplate, {{"prompt", prompt.text},
                                                                  {"strategies", format_strategies(prompt.combo)},
                                                                  {"error_distribution", errors.describe()},
                                                                  {"error_cases", format_bad_cases(cases)}});
    const std::vector<std::string> keys{"Error Causes", "Improvement Methods"};
    std::string last_problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto reply = optimizer.ask(attempt == 0 ? request : request + kFormatReminder);
        try {
            auto fields = extract_structured(reply.text, keys);
            ErrorAnalysis a{trim(fields.at(keys[0])), trim(fields.at(keys[1])), prompt.eso_iteration};
            if (!a.error_causes.empty() && !a.improvement_methods.empty()) return a;
            last_problem = "empty analysis field";
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NoJsonFound && e.kind() != ErrorKind::MissingKeys) throw;
            last_problem = e.what();
        }
    }
    throw Error(ErrorKind::AnalysisUnparseable, "error analysis unparseable after retry: " + last_problem);
}

PromptCandidate rewrite_prompt(const std::vector<HistoryItem>& history, const PromptCandidate& current,
                               const ErrorAnalysis& analysis, const ModelHandle& optimizer) {
    if (optimizer.backend == nullptr) throw Error(ErrorKind::MissingOptimizer, "prompt rewrite needs an optimizer");
    const std::string analysis_text =
        "Error Causes: " + analysis.error_causes + "\nImprovement Methods: " + analysis.improvement_methods;
    const auto reply = optimizer.ask(fill_template(kSummaryTemplate, {{"historical_results", format_history(history)},
                                                                      {"prompt", current.text},
                                                                      {"error_analysis_results", analysis_text}}));
    PromptCandidate next = current;
    next.text = strip_fences_and_quotes(reply.text);
    if (next.text.empty()) throw Error(ErrorKind::EmptyRewrite, "optimizer returned an empty rewrite");
    next.eso_iteration = current.eso_iteration + 1;
    const std::string step = "eso#" + std::to_string(next.eso_iteration);
    next.lineage_note = current.lineage_note.empty() ? step : current.lineage_note + " > " + step;
    return next;
}

OptimizationRun run_eso(const PromptCandidate& initial, Evaluator& evaluator, const ModelHandle& optimizer,
                        const EsoConfig& cfg) {
    if (cfg.max_iterations < 0) throw Error(ErrorKind::InvalidArgument, "max_iterations must be >= 0");
    OptimizationRun run;
    run.task_id = evaluator.task().task_id;
    run.iterations.push_back({initial, evaluator.evaluate(initial), std::nullopt, false});

    for (int i = 0;; ++i) {
        auto& current = run.iterations.back();
        if (current.eval.accuracy >= 1.0) {
            run.stopped_reason = StopReason::PerfectAccuracy;
            break;
        }
        if (i >= cfg.max_iterations) {
            run.stopped_reason = StopReason::MaxIterations;
            break;
        }
        const auto cases = select_bad_cases(current.eval, evaluator.dataset(), cfg.bad_cases, cfg.excerpt_chars);
        if (cases.empty()) {
            run.stopped_reason = StopReason::NoErrors;
            break;
        }
        try {
            current.analysis = analyze_errors(current.prompt, current.eval.error_distribution, cases, optimizer);
            std::vector<HistoryItem> history;
            for (int h = 0; h < i; ++h) {
                const auto& it = run.iterations[h];
                history.push_back({it.prompt.text, it.eval.accuracy, it.eval.error_distribution.describe()});
            }
            auto next = rewrite_prompt(history, current.prompt, *current.analysis, optimizer);
            ++run.rewrite_calls;
            const bool identical = next.text == current.prompt.text;
            auto eval = evaluator.evaluate(next);
            run.iterations.push_back({std::move(next), std::move(eval), std::nullopt, identical});
        } catch (const Error& e) {
            run.stopped_reason = StopReason::Error;
            run.error = std::string(to_string(e.kind())) + ": " + e.what();
            run.error_kind = e.kind();
            break;
        }
    }

    for (std::size_t i = 1; i < run.iterations.size(); ++i) {
        if (run.iterations[i].eval.accuracy > run.iterations[run.best_index].eval.accuracy) run.best_index = i;
    }
    return run;
}

OptimizationRun run_eso(const PromptCandidate& initial, const Task& task, const Dataset& val,
                        const ModelHandle& inference, const ModelHandle& optimizer, int max_iterations) {
    Evaluator evaluator(task, val, inference);
    EsoConfig cfg;
    cfg.max_iterations = max_iterations;
    return run_eso(initial, evaluator, optimizer, cfg);
}

json optimization_run_to_json(const OptimizationRun& run) {
    json iterations = json::array();
    for (std::size_t i = 0; i < run.iterations.size(); ++i) {
        const auto& it = run.iterations[i];
        json j{{"iteration", i},
               {"prompt", candidate_to_json(it.prompt)},
               {"accuracy", it.eval.accuracy},
               {"correct", it.eval.correct()},
               {"total", it.eval.records.size()},
               {"error_distribution", error_distribution_to_json(it.eval.error_distribution)},
               {"identical_rewrite", it.identical_rewrite}};
        if (it.analysis) {
            j["analysis"] = {{"error_causes", it.analysis->error_causes},
                             {"improvement_methods", it.analysis->improvement_methods},
                             {"source_prompt_version", it.analysis->source_prompt_version}};
        } else {
            j["analysis"] = nullptr;
        }
        iterations.push_back(std::move(j));
    }
    json out{{"task_id", run.task_id},
             {"stopped_reason", to_string(run.stopped_reason)},
             {"rewrite_calls", run.rewrite_calls},
             {"best", {{"iteration", run.best_index},
                       {"accuracy", run.iterations.empty() ? 0.0 : run.best_accuracy()},
                       {"prompt", run.iterations.empty() ? std::string() : run.best_prompt().text}}},
             {"iterations", std::move(iterations)}};
    if (run.stopped_reason == StopReason::Error) out["error"] = run.error;
    return out;
}

}  // namespace promptsmith
