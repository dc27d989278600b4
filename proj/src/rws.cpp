#include "promptsmith/rws.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "promptsmith/error.hpp"

namespace promptsmith {

using nlohmann::json;

SearchConfig SearchConfig::from_json(const json& j) {
    SearchConfig c;
    try {
        c.epsilon = j.value("epsilon", c.epsilon);
        c.k = j.value("k", c.k);
        c.max_depth = j.value("max_depth", c.max_depth);
        c.budget = j.value("budget", c.budget);
        c.seed = j.value("seed", c.seed);
        c.strict = j.value("strict", c.strict);
        c.max_idle_draws = j.value("max_idle_draws", c.max_idle_draws);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("search config: ") + e.what());
    }
    if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw Error(ErrorKind::Config, "epsilon must be in [0, 1]");
    if (c.k < 1) throw Error(ErrorKind::Config, "k must be >= 1");
    if (c.max_depth < 1) throw Error(ErrorKind::Config, "max_depth must be >= 1");
    return c;
}

json SearchConfig::to_json() const {
    return json{{"epsilon", epsilon}, {"k", k},           {"max_depth", max_depth},
                {"budget", budget},   {"seed", seed},     {"strict", strict},
                {"max_idle_draws", max_idle_draws}};
}

std::string_view to_string(ChosenBy c) {
    switch (c) {
        case ChosenBy::Cold: return "cold";
        case ChosenBy::Exploit: return "exploit";
        case ChosenBy::Explore: return "explore";
    }
    return "cold";
}

void SearchTrace::record(SearchStep step, const PromptCandidate& prompt, const EvalResult& eval) {
    if (steps.empty() || step.reward > best_reward) {
        best_combo = step.combo;
        best_reward = step.reward;
        best_prompt = prompt;
        best_eval = eval;
    }
    steps.push_back(std::move(step));
    evaluations_used = static_cast<int>(steps.size());
}

std::vector<StrategyCombo> enumerate_combos(const StrategyPool& pool, int max_depth) {
    if (max_depth < 1) throw Error(ErrorKind::InvalidArgument, "max_depth must be >= 1");
    std::vector<std::string> ids = pool.ids();
    std::sort(ids.begin(), ids.end());
    std::vector<StrategyCombo> out{StrategyCombo{}};
    std::vector<StrategyCombo> frontier{StrategyCombo{}};
    for (int depth = 1; depth <= max_depth; ++depth) {
        std::vector<StrategyCombo> next;
        for (const auto& c : frontier) {
            for (const auto& id : ids) {
                if (!c.contains(id)) next.push_back(c.with(id));
            }
        }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    std::stable_sort(out.begin(), out.end(), canonical_less);
    return out;
}

SearchTrace cold_start_search(const SearchContext& ctx, const SearchConfig& cfg, MemoryModule& memory) {
    const auto combos = enumerate_combos(ctx.pool, cfg.max_depth);
    if (cfg.strict && static_cast<std::size_t>(cfg.budget) < combos.size()) {
        throw Error(ErrorKind::BudgetExceeded, "cold search needs " + std::to_string(combos.size()) +
                                                   " evaluations, budget is " + std::to_string(cfg.budget));
    }
    const auto base = PromptCandidate::from_base(ctx.task.initial_prompt);
    SearchTrace trace;
    trace.mode = "cold";
    for (const auto& combo : combos) {
        const auto prompt = compose_combo(base, combo, ctx.pool, ctx.optimizer);
        const auto eval = ctx.evaluator.evaluate(prompt);
        update_memory(memory, ctx.key, combo, eval.accuracy);
        trace.record({combo, eval.accuracy, ChosenBy::Cold, {}, prompt.text}, prompt, eval);
    }
    trace.stop_reason = "exhaustive";
    return trace;
}

std::pair<StrategyCombo, ChosenBy> select_action(const std::vector<ActionStats>& stats, const SearchConfig& cfg,
                                                 Rng& rng) {
    if (stats.empty()) throw Error(ErrorKind::EmptyStats, "no actions to select from");
    const auto top = top_k(stats, cfg.k);
    std::vector<StrategyCombo> rest;
    for (const auto& s : stats) {
        if (std::find(top.begin(), top.end(), s.action) == top.end()) rest.push_back(s.action);
    }
    std::sort(rest.begin(), rest.end(), canonical_less);

    const double u = rng.uniform();
    if (u < cfg.epsilon && !rest.empty()) return {rest[rng.below(rest.size())], ChosenBy::Explore};
    return {top[rng.below(top.size())], ChosenBy::Exploit};
}

std::vector<ActionStats> warm_prior(const SearchContext& ctx, const SearchConfig& cfg, const MemoryModule& memory,
                                    const Reference& reference) {
    const auto* ref = memory.find(reference.key);
    if (ref == nullptr || ref->actions.empty()) {
        throw Error(ErrorKind::NoReference, "reference " + reference.key.task_id + "/" + reference.key.model_id +
                                                " has no stored actions");
    }
    const auto smoothed = smooth_distribution(ref->actions, reference.rho);
    const double g = global_mean(ref->actions);

    std::map<StrategyCombo, ActionStats> by_combo;
    for (const auto& s : smoothed) by_combo[s.action] = s;
    if (const auto* own = memory.find(ctx.key)) {
        for (const auto& s : own->actions) {
            if (s.count > 0) by_combo[s.action] = s;
        }
    }

    std::vector<ActionStats> out;
    for (const auto& combo : enumerate_combos(ctx.pool, cfg.max_depth)) {
        auto it = by_combo.find(combo);
        out.push_back(it != by_combo.end() ? it->second : ActionStats{combo, g, 0});
    }
    return out;
}

SearchTrace warm_search(const SearchContext& ctx, const SearchConfig& cfg, MemoryModule& memory,
                        const Reference& reference) {
    if (cfg.budget < 1) throw Error(ErrorKind::BudgetExhausted, "warm search needs a budget of at least 1");
    auto working = warm_prior(ctx, cfg, memory, reference);

    const auto base = PromptCandidate::from_base(ctx.task.initial_prompt);
    SearchTrace trace;
    trace.mode = "warm";
    trace.reference = reference;
    trace.stop_reason = "budget";

    Rng rng(cfg.seed);
    std::map<StrategyCombo, double> seen;
    int idle = 0;
    while (trace.evaluations_used < cfg.budget) {
        if (seen.size() == working.size()) {
            trace.stop_reason = "exhausted";
            break;
        }
        auto exploit_set = top_k(working, cfg.k);
        auto [combo, chosen_by] = select_action(working, cfg, rng);
        if (seen.count(combo)) {
            if (++idle >= cfg.max_idle_draws) {
                trace.stop_reason = "stalled";
                break;
            }
            continue;
        }
        idle = 0;

        const auto prompt = compose_combo(base, combo, ctx.pool, ctx.optimizer);
        const auto eval = ctx.evaluator.evaluate(prompt);
        update_memory(memory, ctx.key, combo, eval.accuracy);
        seen[combo] = eval.accuracy;

        const auto* own = memory.find(ctx.key);
        for (const auto& s : own->actions) {
            if (s.action != combo) continue;
            for (auto& w : working) {
                if (w.action == combo) w = s;
            }
        }
        trace.record({combo, eval.accuracy, chosen_by, std::move(exploit_set), prompt.text}, prompt, eval);
    }
    return trace;
}

SearchTrace warm_search(const SearchContext& ctx, const SearchConfig& cfg, MemoryModule& memory,
                        SimilarityProvider& similarity) {
    auto ref = select_reference(memory, ctx.key, similarity);
    if (!ref) throw Error(ErrorKind::NoReference, "memory holds no reference for " + ctx.key.task_id);
    return warm_search(ctx, cfg, memory, *ref);
}

std::string search_trace_jsonl(const SearchTrace& t) {
    std::string out;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const auto& s = t.steps[i];
        json exploit = json::array();
        for (const auto& c : s.exploit_set) exploit.push_back(combo_to_json(c));
        json j{{"step", i},
               {"combo", combo_to_json(s.combo)},
               {"reward", s.reward},
               {"chosen_by", to_string(s.chosen_by)},
               {"exploit_set", std::move(exploit)},
               {"prompt", s.prompt_text}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

json search_summary_json(const SearchTrace& t) {
    json j{{"mode", t.mode},
           {"best_combo", combo_to_json(t.best_combo)},
           {"best_reward", t.best_reward},
           {"evaluations_used", t.evaluations_used},
           {"stop_reason", t.stop_reason}};
    if (t.reference) {
        j["reference"] = {{"task_id", t.reference->key.task_id},
                          {"model_id", t.reference->key.model_id},
                          {"rho", t.reference->rho}};
    }
    return j;
}

}  // namespace promptsmith
