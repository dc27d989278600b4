#include "promptsmith/simulated_backend.hpp"

#include <algorithm>
#include <sstream>

#include "promptsmith/error.hpp"
#include "promptsmith/rng.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;

namespace {

int word_count(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::string w;
    int n = 0;
    while (in >> w) ++n;
    return n;
}

std::vector<std::string> string_list(const json& j, const char* key) {
    if (!j.contains(key)) return {};
    const auto& v = j.at(key);
    if (v.is_string()) return {v.get<std::string>()};
    return v.get<std::vector<std::string>>();
}

}  // namespace

SimScript SimScript::from_json(const json& j) {
    SimScript s;
    try {
        for (const auto& rj : j.value("rules", json::array())) {
            SimRule r;
            r.match_all = string_list(rj, "match");
            for (auto& m : string_list(rj, "match_all")) r.match_all.push_back(m);
            if (rj.contains("role")) {
                const auto role = rj.at("role").get<std::string>();
                if (role == "inference") r.role = ModelRole::Inference;
                else if (role == "optimizer") r.role = ModelRole::Optimizer;
                else throw Error(ErrorKind::Config, "unknown rule role '" + role + "'");
            }
            r.sample_ids = string_list(rj, "sample_ids");
            r.response = rj.value("response", "");
            r.choices = string_list(rj, "choices");
            if (rj.contains("sample_responses")) {
                r.sample_responses = rj.at("sample_responses").get<std::map<std::string, std::string>>();
            }
            if (rj.contains("fail")) {
                const auto f = rj.at("fail").get<std::string>();
                if (f == "transport") r.fail = ErrorKind::Transport;
                else if (f == "rate_limit") r.fail = ErrorKind::RateLimited;
                else throw Error(ErrorKind::Config, "unknown failure kind '" + f + "'");
            }
            s.rules.push_back(std::move(r));
        }
        if (j.contains("default") && !j.at("default").is_null()) s.default_response = j.at("default").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("simulated script: ") + e.what());
    }
    return s;
}

SimScript SimScript::load(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Config, path.string() + ": " + e.what());
    }
}

SimScript SimScript::from_spec(std::string_view spec) {
    constexpr std::string_view prefix = "echo-label:";
    if (spec.substr(0, prefix.size()) != prefix) {
        throw Error(ErrorKind::Config, "unknown simulated script spec '" + std::string(spec) + "'");
    }
    SimScript s;
    s.default_response = std::string(spec.substr(prefix.size()));
    return s;
}

std::string SimulatedBackend::user_text(const CompletionRequest& req) {
    std::string out;
    for (const auto& m : req.messages) {
        if (m.role != MessageRole::User) continue;
        if (!out.empty()) out += '\n';
        out += m.text;
    }
    return out;
}

CompletionResult SimulatedBackend::do_complete(const CompletionRequest& req) {
    const std::string input = user_text(req);
    auto respond = [&](std::string text) {
        CompletionResult r;
        r.text = std::move(text);
        r.backend_kind = BackendKind::Simulated;
        r.usage = {word_count(input), word_count(r.text)};
        return r;
    };

    for (const auto& hook : hooks_) {
        if (auto text = hook(req)) return respond(std::move(*text));
    }

    std::string sample_id;
    if (auto it = req.metadata.find("sample_id"); it != req.metadata.end()) sample_id = it->second;

    std::map<std::string, std::string> vars{{"input", input}, {"input_hash", hex64(fnv1a64(input))},
                                            {"sample_id", sample_id}};
    for (const auto& [k, v] : req.metadata) vars["meta_" + k] = v;

    for (const auto& rule : script_.rules) {
        if (rule.role && *rule.role != req.model.role) continue;
        if (!rule.sample_ids.empty() &&
            std::find(rule.sample_ids.begin(), rule.sample_ids.end(), sample_id) == rule.sample_ids.end()) {
            continue;
        }
        const bool all = std::all_of(rule.match_all.begin(), rule.match_all.end(),
                                     [&](const std::string& m) { return input.find(m) != std::string::npos; });
        if (!all) continue;

        if (rule.fail) throw Error(*rule.fail, "scripted failure for sample '" + sample_id + "'");
        if (auto it = rule.sample_responses.find(sample_id); it != rule.sample_responses.end()) {
            return respond(fill_template(it->second, vars));
        }
        if (!rule.choices.empty()) {
            const auto h = splitmix64(fnv1a64(input) ^ req.seed.value_or(0));
            return respond(fill_template(rule.choices[h % rule.choices.size()], vars));
        }
        return respond(fill_template(rule.response, vars));
    }
    if (script_.default_response) return respond(fill_template(*script_.default_response, vars));
    throw Error(ErrorKind::Transport, "simulated backend has no rule for this request");
}

}  // namespace promptsmith
