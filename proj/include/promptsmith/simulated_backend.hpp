#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptsmith/error.hpp"
#include "promptsmith/model_backend.hpp"

namespace promptsmith {

// One declarative rule: when every condition holds, respond.
//
// Response templates may use {input} (all user text joined by newlines),
// {input_hash} (FNV-1a hex of {input}), {sample_id} and {meta_<key>} for any
// request metadata key.
struct SimRule {
    std::vector<std::string> match_all;      // substrings that must all occur in the input
    std::optional<ModelRole> role;           // restrict to one model role
    std::vector<std::string> sample_ids;     // restrict to these samples
    std::string response;
    std::vector<std::string> choices;        // if set, one is picked by hash(input, seed)
    std::map<std::string, std::string> sample_responses;  // per-sample override of `response`
    std::optional<ErrorKind> fail;           // Transport or RateLimited
};

struct SimScript {
    std::vector<SimRule> rules;
    std::optional<std::string> default_response;

    static SimScript from_json(const nlohmann::json& j);
    static SimScript load(const std::filesystem::path& path);
    // "echo-label:<text>" answers <text> to everything.
    static SimScript from_spec(std::string_view spec);
};

// Deterministic backend: the response is a pure function of the request
// content and seed. Hooks run before the rules; the first hook that returns
// a value answers.
class SimulatedBackend : public Backend {
public:
    using Hook = std::function<std::optional<std::string>(const CompletionRequest&)>;

    SimulatedBackend() = default;
    explicit SimulatedBackend(SimScript script) : script_(std::move(script)) {}

    void add_hook(Hook hook) { hooks_.push_back(std::move(hook)); }
    SimScript& script() { return script_; }

    static std::string user_text(const CompletionRequest& req);

protected:
    CompletionResult do_complete(const CompletionRequest& req) override;

private:
    SimScript script_;
    std::vector<Hook> hooks_;
};

}  // namespace promptsmith
