#include "promptsmith/strategy_pool.hpp"

#include <algorithm>

#include "promptsmith/error.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;

namespace {

constexpr const char* kEngineerPreamble =
    "You are now an expert prompt engineer, tasked with optimizing prompts to help smaller models accurately "
    "reason through complex problems. ";
constexpr const char* kRewriteTail =
    "\nMy prompt is: {prompt}.\nPlease output the optimized prompt directly without providing the analysis process.";

}  // namespace

std::string_view to_string(StrategyMode mode) { return mode == StrategyMode::Suffix ? "suffix" : "rewrite"; }

bool StrategyCombo::contains(std::string_view id) const {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

StrategyCombo StrategyCombo::with(std::string id) const {
    StrategyCombo c = *this;
    c.ids.push_back(std::move(id));
    return c;
}

std::string StrategyCombo::label() const { return ids.empty() ? "(base)" : join(ids, "+"); }

bool canonical_less(const StrategyCombo& a, const StrategyCombo& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a.ids < b.ids;
}

json combo_to_json(const StrategyCombo& c) { return c.ids; }

StrategyCombo combo_from_json(const json& j) { return StrategyCombo{j.get<std::vector<std::string>>()}; }

PromptCandidate PromptCandidate::from_base(std::string base) {
    PromptCandidate c;
    c.text = base;
    c.base_prompt = std::move(base);
    return c;
}

json candidate_to_json(const PromptCandidate& c) {
    return json{{"text", c.text},
                {"base_prompt", c.base_prompt},
                {"combo", combo_to_json(c.combo)},
                {"eso_iteration", c.eso_iteration},
                {"lineage_note", c.lineage_note}};
}

// ---------------------------------------------------------------- pool

StrategyPool::StrategyPool(std::vector<Strategy> strategies) {
    for (auto& s : strategies) add(std::move(s));
}

void StrategyPool::add(Strategy s) {
    validate_strategy(s);
    if (contains(s.id)) throw Error(ErrorKind::InvalidStrategy, "duplicate strategy id '" + s.id + "'");
    strategies_.push_back(std::move(s));
}

bool StrategyPool::remove(std::string_view id) {
    auto it = std::find_if(strategies_.begin(), strategies_.end(), [&](const Strategy& s) { return s.id == id; });
    if (it == strategies_.end()) return false;
    strategies_.erase(it);
    return true;
}

const Strategy& StrategyPool::at(std::string_view id) const {
    for (const auto& s : strategies_) {
        if (s.id == id) return s;
    }
    throw Error(ErrorKind::UnknownStrategy, "no strategy '" + std::string(id) + "' in pool");
}

bool StrategyPool::contains(std::string_view id) const {
    return std::any_of(strategies_.begin(), strategies_.end(), [&](const Strategy& s) { return s.id == id; });
}

std::vector<std::string> StrategyPool::ids() const {
    std::vector<std::string> out;
    for (const auto& s : strategies_) out.push_back(s.id);
    return out;
}

void validate_strategy(const Strategy& s) {
    if (s.id.empty()) throw Error(ErrorKind::InvalidStrategy, "strategy id must be non-empty");
    const auto n = count_placeholder(s.template_text, "prompt");
    if (s.mode == StrategyMode::Rewrite && n != 1) {
        throw Error(ErrorKind::InvalidStrategy, "rewrite strategy '" + s.id + "' needs exactly one {prompt}");
    }
    if (s.mode == StrategyMode::Suffix && n > 1) {
        throw Error(ErrorKind::InvalidStrategy, "suffix strategy '" + s.id + "' has more than one {prompt}");
    }
    if (trim(s.template_text).empty()) throw Error(ErrorKind::InvalidStrategy, "strategy '" + s.id + "' is empty");
}

StrategyPool builtin_pool() {
    const std::string pre = kEngineerPreamble;
    return StrategyPool({
        {"Reasoning", StrategyMode::Suffix,
         "Please carefully understand the question before answering and provide your thought and analysis process."},
        {"Reinterpretation", StrategyMode::Suffix,
         "Please do not rush to answer; before providing a response, reread and carefully understand my question and "
         "requirements."},
        {"Simplification", StrategyMode::Rewrite,
         pre +
             "Focus on simplifying the expression of the problem and its requirements.\nMy prompt is: {prompt}.\n"
             "Please output your optimized prompt directly without providing the analysis process."},
        {"RolePrompting", StrategyMode::Rewrite,
         pre + "Focus on incorporating role-playing (e.g., \"You are a xxx...\") as a method of optimization." +
             kRewriteTail},
        {"Decomposition", StrategyMode::Rewrite,
         pre +
             "Focus on decomposing the problem description into a combination of multiple simple and understandable "
             "questions to enhance performance through multi-step reasoning." +
             kRewriteTail},
        {"SelfCriticism", StrategyMode::Suffix,
         "Please do not rush to answer, before giving the answer, carefully reflect on your answer is correct, "
         "confirm the answer is correct before output the answer."},
        {"Caption", StrategyMode::Rewrite,
         pre +
             "Focus on having the model first provide a detailed description of the image content, and then "
             "formulate an answer based on this description." +
             kRewriteTail},
        {"Rephrasing", StrategyMode::Suffix,
         "Did you understand the task above? Please summarize the tasks you need to do and show how you will execute "
         "the detailed plan for the task"},
    });
}

Strategy strategy_from_json(const json& j) {
    Strategy s;
    try {
        s.id = j.at("strategy_id").get<std::string>();
        const auto mode = j.at("mode").get<std::string>();
        if (mode == "suffix") s.mode = StrategyMode::Suffix;
        else if (mode == "rewrite") s.mode = StrategyMode::Rewrite;
        else throw Error(ErrorKind::InvalidStrategy, "unknown mode '" + mode + "'");
        s.template_text = j.at("template").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidStrategy, e.what());
    }
    validate_strategy(s);
    return s;
}

json strategy_to_json(const Strategy& s) {
    return json{{"strategy_id", s.id}, {"mode", to_string(s.mode)}, {"template", s.template_text}};
}

Strategy load_strategy_file(const std::filesystem::path& path) {
    try {
        return strategy_from_json(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::InvalidStrategy, path.string() + ": " + e.what());
    }
}

StrategyPool load_pool_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    StrategyPool pool;
    for (const auto& f : files) pool.add(load_strategy_file(f));
    return pool;
}

// ---------------------------------------------------------------- application

PromptCandidate apply_strategy(const PromptCandidate& base, const Strategy& s, const ModelHandle* optimizer) {
    if (base.combo.contains(s.id)) {
        throw Error(ErrorKind::ComboRepeat, "strategy '" + s.id + "' already applied");
    }
    PromptCandidate out = base;
    if (out.base_prompt.empty()) out.base_prompt = base.text;
    out.combo = base.combo.with(s.id);
    out.eso_iteration = 0;

    if (s.mode == StrategyMode::Suffix) {
        out.text = count_placeholder(s.template_text, "prompt") == 1
                       ? fill_template(s.template_text, {{"prompt", base.text}})
                       : base.text + "\n" + s.template_text;
    } else {
        if (optimizer == nullptr || optimizer->backend == nullptr) {
            throw Error(ErrorKind::MissingOptimizer, "rewrite strategy '" + s.id + "' needs an optimizer model");
        }
        const auto reply = optimizer->ask(fill_template(s.template_text, {{"prompt", base.text}}));
        out.text = strip_fences_and_quotes(reply.text);
        if (out.text.empty()) {
            throw Error(ErrorKind::OptimizerEmptyResponse, "optimizer returned no text for '" + s.id + "'");
        }
    }
    const std::string step = s.id + "(" + std::string(to_string(s.mode)) + ")";
    out.lineage_note = base.lineage_note.empty() ? step : base.lineage_note + " > " + step;
    return out;
}

PromptCandidate compose_combo(const PromptCandidate& base, const StrategyCombo& combo, const StrategyPool& pool,
                              const ModelHandle* optimizer) {
    PromptCandidate current = base;
    for (const auto& id : combo.ids) current = apply_strategy(current, pool.at(id), optimizer);
    return current;
}

}  // namespace promptsmith
