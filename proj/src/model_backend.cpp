#include "promptsmith/model_backend.hpp"

#include <atomic>
#include <thread>

#include "promptsmith/error.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;

ModelRef ModelRef::inference(std::string id, std::string endpoint) {
    ModelRef m;
    m.model_id = std::move(id);
    m.role = ModelRole::Inference;
    m.endpoint = std::move(endpoint);
    m.temperature = 0.0;
    return m;
}

ModelRef ModelRef::optimizer(std::string id, std::string endpoint) {
    ModelRef m;
    m.model_id = std::move(id);
    m.role = ModelRole::Optimizer;
    m.endpoint = std::move(endpoint);
    m.temperature = 1.0;
    m.max_output_tokens = 2048;
    return m;
}

std::string_view to_string(ModelRole role) { return role == ModelRole::Inference ? "inference" : "optimizer"; }

ModelRef model_ref_from_json(const json& j, ModelRole role) {
    ModelRef m = role == ModelRole::Inference ? ModelRef::inference("") : ModelRef::optimizer("");
    try {
        m.model_id = j.at("model_id").get<std::string>();
        m.endpoint = j.value("endpoint", m.endpoint);
        m.temperature = j.value("temperature", m.temperature);
        m.max_output_tokens = j.value("max_output_tokens", m.max_output_tokens);
        m.parallelism_limit = j.value("parallelism_limit", m.parallelism_limit);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("model reference: ") + e.what());
    }
    if (m.parallelism_limit < 1) throw Error(ErrorKind::Config, "parallelism_limit must be >= 1");
    return m;
}

CompletionRequest CompletionRequest::single_user(ModelRef model, std::string text) {
    CompletionRequest req;
    req.model = std::move(model);
    req.messages.push_back({MessageRole::User, std::move(text), {}});
    return req;
}

// ---------------------------------------------------------------- TraceLog

TraceLog::TraceLog(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    file_.emplace(path, std::ios::binary | std::ios::app);
    if (!*file_) throw Error(ErrorKind::Io, "cannot open trace log " + path.string());
}

void TraceLog::append(const json& record) {
    std::lock_guard lock(mu_);
    records_.push_back(record);
    if (file_) {
        *file_ << record.dump() << '\n';
        file_->flush();
    }
}

std::vector<json> TraceLog::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::size_t TraceLog::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

// ---------------------------------------------------------------- gate

ConcurrencyGate::Permit::Permit(ConcurrencyGate& gate, const std::string& key, int limit) : gate_(gate), key_(key) {
    std::unique_lock lock(gate_.mu_);
    gate_.cv_.wait(lock, [&] { return gate_.in_flight_[key_] < limit; });
    ++gate_.in_flight_[key_];
}

ConcurrencyGate::Permit::~Permit() {
    {
        std::lock_guard lock(gate_.mu_);
        --gate_.in_flight_[key_];
    }
    gate_.cv_.notify_all();
}

// ---------------------------------------------------------------- Backend

namespace {

const char* message_role_name(MessageRole r) { return r == MessageRole::System ? "system" : "user"; }

const char* media_kind_label(MediaKind k) {
    switch (k) {
        case MediaKind::ImagePath: return "path";
        case MediaKind::ImageUrl: return "url";
        case MediaKind::ImageBase64: return "base64";
        case MediaKind::None: return "none";
    }
    return "none";
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

json request_to_json(const CompletionRequest& req) {
    json j;
    j["model_id"] = req.model.model_id;
    j["role"] = to_string(req.model.role);
    j["endpoint"] = req.model.endpoint;
    j["temperature"] = req.model.temperature;
    j["max_tokens"] = req.model.max_output_tokens;
    if (req.seed) j["seed"] = *req.seed;
    j["messages"] = json::array();
    for (const auto& m : req.messages) {
        json mj{{"role", message_role_name(m.role)}, {"text", m.text}};
        if (!m.media.empty()) {
            mj["media"] = json::array();
            for (const auto& media : m.media) {
                // base64 payloads are elided to keep the log readable
                std::string payload = media.kind == MediaKind::ImageBase64
                                          ? "<" + std::to_string(media.payload.size()) + " bytes>"
                                          : media.payload;
                mj["media"].push_back({{"kind", media_kind_label(media.kind)}, {"payload", payload}});
            }
        }
        j["messages"].push_back(std::move(mj));
    }
    if (!req.metadata.empty()) j["metadata"] = req.metadata;
    return j;
}

CompletionResult Backend::complete(const CompletionRequest& req) {
    bool has_user = false;
    for (const auto& m : req.messages) has_user = has_user || m.role == MessageRole::User;
    if (!has_user) throw Error(ErrorKind::InvalidArgument, "completion request needs at least one user message");

    {
        std::lock_guard lock(count_mu_);
        ++calls_;
    }
    ConcurrencyGate::Permit permit(gate_, req.model.model_id, std::max(1, req.model.parallelism_limit));
    const auto started = now_ms();
    try {
        CompletionResult r = do_complete(req);
        if (trace_) {
            trace_->append({{"ts_ms", started},
                            {"request", request_to_json(req)},
                            {"response", r.text},
                            {"backend", r.backend_kind == BackendKind::Http ? "http" : "simulated"},
                            {"usage", {{"input_tokens", r.usage.input_tokens}, {"output_tokens", r.usage.output_tokens}}},
                            {"latency_ms", r.latency_ms},
                            {"retry_count", r.retry_count},
                            {"refusal", r.refusal}});
        }
        return r;
    } catch (const Error& e) {
        if (trace_) {
            json rec{{"ts_ms", started}, {"request", request_to_json(req)}, {"error", e.what()},
                     {"error_kind", to_string(e.kind())}};
            if (!e.details().empty()) rec["error_details"] = e.details();
            trace_->append(rec);
        }
        throw;
    }
}

std::uint64_t Backend::call_count() const {
    std::lock_guard lock(count_mu_);
    return calls_;
}

// ---------------------------------------------------------------- batch

std::size_t BatchOutput::failure_count() const {
    std::size_t n = 0;
    for (const auto& o : outputs) n += o ? 0 : 1;
    return n;
}

CompletionRequest inference_request(const std::string& prompt_text, const Sample& sample, const ModelRef& model,
                                    std::optional<std::uint64_t> seed) {
    CompletionRequest req;
    req.model = model;
    req.messages.push_back({MessageRole::User, prompt_text, sample.media});
    req.seed = seed;
    req.metadata = sample.extra;
    req.metadata["sample_id"] = sample.sample_id;
    return req;
}

BatchOutput batch_infer(Backend& backend, const std::string& prompt_text, const std::vector<Sample>& samples,
                        const ModelRef& model, std::optional<std::uint64_t> seed) {
    if (samples.empty()) throw Error(ErrorKind::EmptyDataset, "batch_infer needs at least one sample");
    BatchOutput out;
    out.outputs.resize(samples.size());
    out.errors.resize(samples.size());

    auto run_one = [&](std::size_t i) {
        try {
            out.outputs[i] = backend.complete(inference_request(prompt_text, samples[i], model, seed)).text;
        } catch (const std::exception& e) {
            out.outputs[i].reset();
            out.errors[i] = e.what();
        }
    };

    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, model.parallelism_limit)),
                                               samples.size());
    if (workers == 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < samples.size(); i = next.fetch_add(1)) run_one(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    if (out.failure_count() == samples.size()) {
        throw Error(ErrorKind::AllSamplesFailed,
                    "all " + std::to_string(samples.size()) + " samples failed; first error: " + out.errors[0]);
    }
    return out;
}

// ---------------------------------------------------------------- extraction

namespace {

// End index (inclusive) of the balanced object starting at `open`, if any.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i;
        }
    }
    return std::nullopt;
}

}  // namespace

std::map<std::string, std::string> extract_structured(std::string_view text,
                                                      const std::vector<std::string>& required_keys) {
    std::optional<json> found;
    for (auto open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
        auto end = balanced_end(text, open);
        if (!end) continue;
        auto parsed = json::parse(text.substr(open, *end - open + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) {
            found = std::move(parsed);
            break;
        }
    }
    if (!found) throw Error(ErrorKind::NoJsonFound, "no JSON object in model output");

    std::map<std::string, std::string> out;
    for (auto& [k, v] : found->items()) out[k] = v.is_string() ? v.get<std::string>() : v.dump();

    std::vector<std::string> missing;
    for (const auto& key : required_keys) {
        if (!out.count(key)) missing.push_back(key);
    }
    if (!missing.empty()) throw Error(ErrorKind::MissingKeys, "missing keys: " + join(missing, ", "), missing);
    return out;
}

}  // namespace promptsmith

namespace promptsmith {

CompletionResult ModelHandle::ask(std::string text) const {
    if (backend == nullptr) throw Error(ErrorKind::InvalidArgument, "model handle has no backend");
    auto req = CompletionRequest::single_user(model, std::move(text));
    req.seed = seed;
    return backend->complete(req);
}

}  // namespace promptsmith
