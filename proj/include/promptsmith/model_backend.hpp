#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptsmith/task_data.hpp"

namespace promptsmith {

enum class ModelRole { Inference, Optimizer };

struct ModelRef {
    std::string model_id;
    ModelRole role = ModelRole::Inference;
    std::string endpoint = "simulated";  // chat-completions URL or "simulated"
    double temperature = 0.0;
    int max_output_tokens = 512;
    int parallelism_limit = 1;

    static ModelRef inference(std::string id, std::string endpoint = "simulated");
    static ModelRef optimizer(std::string id, std::string endpoint = "simulated");

    bool is_simulated() const { return endpoint == "simulated" || endpoint == "sim"; }
};

std::string_view to_string(ModelRole role);
ModelRef model_ref_from_json(const nlohmann::json& j, ModelRole role);

enum class MessageRole { System, User };

struct Message {
    MessageRole role = MessageRole::User;
    std::string text;
    std::vector<MediaRef> media;
};

struct CompletionRequest {
    ModelRef model;
    std::vector<Message> messages;
    std::optional<std::uint64_t> seed;
    // Local routing info (sample id and sample extras). Never transmitted;
    // the simulated backend may read it.
    std::map<std::string, std::string> metadata;

    static CompletionRequest single_user(ModelRef model, std::string text);
};

struct Usage {
    int input_tokens = 0;
    int output_tokens = 0;
};

enum class BackendKind { Http, Simulated };

struct CompletionResult {
    std::string text;
    Usage usage;
    std::int64_t latency_ms = 0;
    BackendKind backend_kind = BackendKind::Simulated;
    int retry_count = 0;
    bool refusal = false;
};

// Append-only JSONL record of every request/response. Single writer: all
// appends are serialized by one mutex.
class TraceLog {
public:
    TraceLog() = default;  // in-memory only
    explicit TraceLog(const std::filesystem::path& path);

    void append(const nlohmann::json& record);
    std::vector<nlohmann::json> records() const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::vector<nlohmann::json> records_;
    std::optional<std::ofstream> file_;
};

// Bounds concurrent complete() calls per model_id.
class ConcurrencyGate {
public:
    class Permit {
    public:
        Permit(ConcurrencyGate& gate, const std::string& key, int limit);
        ~Permit();
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;

    private:
        ConcurrencyGate& gate_;
        std::string key_;
    };

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, int> in_flight_;
};

class Backend {
public:
    virtual ~Backend() = default;

    // Safe for concurrent use. Every call lands in the trace log, if one is attached.
    CompletionResult complete(const CompletionRequest& req);

    void set_trace_log(std::shared_ptr<TraceLog> log) { trace_ = std::move(log); }
    const std::shared_ptr<TraceLog>& trace_log() const { return trace_; }

    // Total complete() calls, including failed ones.
    std::uint64_t call_count() const;

protected:
    virtual CompletionResult do_complete(const CompletionRequest& req) = 0;

private:
    std::shared_ptr<TraceLog> trace_;
    ConcurrencyGate gate_;
    mutable std::mutex count_mu_;
    std::uint64_t calls_ = 0;
};

nlohmann::json request_to_json(const CompletionRequest& req);

struct BatchOutput {
    // Aligned with the input samples; nullopt marks a per-sample failure.
    std::vector<std::optional<std::string>> outputs;
    std::vector<std::string> errors;  // empty string where the sample succeeded

    std::size_t failure_count() const;
};

// The user message carries the prompt text plus the sample's media.
CompletionRequest inference_request(const std::string& prompt_text, const Sample& sample, const ModelRef& model,
                                    std::optional<std::uint64_t> seed);

// Runs one request per sample with at most model.parallelism_limit in
// flight. Requests start in sample order. Throws AllSamplesFailed only when
// every sample errored.
BatchOutput batch_infer(Backend& backend, const std::string& prompt_text, const std::vector<Sample>& samples,
                        const ModelRef& model, std::optional<std::uint64_t> seed = std::nullopt);

// First balanced JSON object in free text (prose, code fences), with every
// required key present. Non-string values are returned in their JSON dump.
std::map<std::string, std::string> extract_structured(std::string_view text,
                                                      const std::vector<std::string>& required_keys);

}  // namespace promptsmith

namespace promptsmith {

// A backend bound to one model. Used wherever an operation needs "the
// optimizer" or "the inference model".
struct ModelHandle {
    Backend* backend = nullptr;
    ModelRef model;
    std::optional<std::uint64_t> seed;

    // Sends `text` as a single user message.
    CompletionResult ask(std::string text) const;
};

}  // namespace promptsmith
