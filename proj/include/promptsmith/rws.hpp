#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptsmith/eval_harness.hpp"
#include "promptsmith/memory.hpp"
#include "promptsmith/rng.hpp"
#include "promptsmith/strategy_pool.hpp"

namespace promptsmith {

struct SearchConfig {
    double epsilon = 0.3;
    int k = 3;
    int max_depth = 2;
    int budget = 15;  // warm search evaluations
    std::uint64_t seed = 0;
    bool strict = false;        // cold search refuses to exceed budget
    int max_idle_draws = 1000;  // consecutive already-evaluated draws before warm search gives up

    static SearchConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

enum class ChosenBy { Cold, Exploit, Explore };
std::string_view to_string(ChosenBy c);

struct SearchStep {
    StrategyCombo combo;
    double reward = 0.0;
    ChosenBy chosen_by = ChosenBy::Cold;
    std::vector<StrategyCombo> exploit_set;  // top-k at selection time (warm only)
    std::string prompt_text;
};

struct SearchTrace {
    std::string mode;  // "cold" or "warm"
    std::vector<SearchStep> steps;
    StrategyCombo best_combo;
    double best_reward = 0.0;
    PromptCandidate best_prompt;
    EvalResult best_eval;
    int evaluations_used = 0;
    std::optional<Reference> reference;
    std::string stop_reason;

    void record(SearchStep step, const PromptCandidate& prompt, const EvalResult& eval);
};

// All ordered, repetition-free combos of length 0..max_depth, shortest
// first, then lexicographic.
std::vector<StrategyCombo> enumerate_combos(const StrategyPool& pool, int max_depth);

// What a search needs to score a combo: build the prompt from the task's
// initial prompt, then evaluate it.
struct SearchContext {
    const Task& task;
    Evaluator& evaluator;
    const StrategyPool& pool;
    const ModelHandle* optimizer = nullptr;
    MemoryKey key;
};

// Exhaustive tree search; every combo's reward is recorded in memory under
// ctx.key. The empty combo is evaluated first.
SearchTrace cold_start_search(const SearchContext& ctx, const SearchConfig& cfg, MemoryModule& memory);

// Exploit: uniform over top_k with probability 1 - epsilon. Explore: uniform
// over the rest. An empty complement means exploit.
std::pair<StrategyCombo, ChosenBy> select_action(const std::vector<ActionStats>& stats, const SearchConfig& cfg,
                                                 Rng& rng);

// Prior for the target: the reference distribution smoothed by rho, over
// the full combo space (combos the reference never saw get its global
// mean). Observations already stored under ctx.key override the prior.
std::vector<ActionStats> warm_prior(const SearchContext& ctx, const SearchConfig& cfg, const MemoryModule& memory,
                                    const Reference& reference);

// Epsilon-greedy search seeded from `reference`. Combos drawn twice are not
// re-evaluated and do not use budget. Throws BudgetExhausted for budget < 1.
SearchTrace warm_search(const SearchContext& ctx, const SearchConfig& cfg, MemoryModule& memory,
                        const Reference& reference);

// Picks the reference with select_reference; throws NoReference if none.
SearchTrace warm_search(const SearchContext& ctx, const SearchConfig& cfg, MemoryModule& memory,
                        SimilarityProvider& similarity);

std::string search_trace_jsonl(const SearchTrace& t);
nlohmann::json search_summary_json(const SearchTrace& t);

}  // namespace promptsmith
