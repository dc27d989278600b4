#pragma once

#include <compare>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptsmith/model_backend.hpp"

namespace promptsmith {

// suffix: appended to the prompt, no model call.
// rewrite: the template is sent to the optimizer model, whose answer
// replaces the prompt.
enum class StrategyMode { Suffix, Rewrite };

std::string_view to_string(StrategyMode mode);

struct Strategy {
    std::string id;
    StrategyMode mode = StrategyMode::Suffix;
    std::string template_text;  // may contain {prompt}

    bool operator==(const Strategy&) const = default;
};

struct StrategyCombo {
    std::vector<std::string> ids;

    bool empty() const { return ids.empty(); }
    std::size_t size() const { return ids.size(); }
    bool contains(std::string_view id) const;
    StrategyCombo with(std::string id) const;
    // "A+B", or "(base)" for the empty combo.
    std::string label() const;

    bool operator==(const StrategyCombo&) const = default;
    auto operator<=>(const StrategyCombo&) const = default;
};

// Canonical order: shorter first, then lexicographic by id.
bool canonical_less(const StrategyCombo& a, const StrategyCombo& b);

nlohmann::json combo_to_json(const StrategyCombo& c);
StrategyCombo combo_from_json(const nlohmann::json& j);

struct PromptCandidate {
    std::string text;
    std::string base_prompt;
    StrategyCombo combo;
    int eso_iteration = 0;
    std::string lineage_note;

    static PromptCandidate from_base(std::string base);
    bool operator==(const PromptCandidate&) const = default;
};

nlohmann::json candidate_to_json(const PromptCandidate& c);

class StrategyPool {
public:
    StrategyPool() = default;
    explicit StrategyPool(std::vector<Strategy> strategies);

    // Throws InvalidStrategy on a duplicate id or malformed template.
    void add(Strategy s);
    bool remove(std::string_view id);
    const Strategy& at(std::string_view id) const;  // UnknownStrategy
    bool contains(std::string_view id) const;

    const std::vector<Strategy>& strategies() const { return strategies_; }
    std::vector<std::string> ids() const;
    std::size_t size() const { return strategies_.size(); }

private:
    std::vector<Strategy> strategies_;
};

// Rewrite templates need exactly one {prompt}; suffix templates at most one.
void validate_strategy(const Strategy& s);

// The eight built-in strategies.
StrategyPool builtin_pool();

Strategy strategy_from_json(const nlohmann::json& j);
nlohmann::json strategy_to_json(const Strategy& s);
Strategy load_strategy_file(const std::filesystem::path& path);
// Every *.json in dir, in filename order.
StrategyPool load_pool_dir(const std::filesystem::path& dir);

// Suffix: text + "\n" + template (or the template with {prompt} filled, if it
// has one). Rewrite: optimizer answer to the filled template.
PromptCandidate apply_strategy(const PromptCandidate& base, const Strategy& s, const ModelHandle* optimizer);

// Applies the combo members left to right.
PromptCandidate compose_combo(const PromptCandidate& base, const StrategyCombo& combo, const StrategyPool& pool,
                              const ModelHandle* optimizer);

}  // namespace promptsmith
