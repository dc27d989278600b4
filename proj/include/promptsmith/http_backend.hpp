#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "promptsmith/model_backend.hpp"

namespace promptsmith {

inline constexpr const char* kApiKeyEnv = "PROMPTSMITH_API_KEY";

struct HttpCall {
    std::string url;
    std::map<std::string, std::string> headers;
    std::string body;
};

struct HttpReply {
    int status = 0;  // 0: connection-level failure
    std::string body;
    std::optional<double> retry_after_s;
    std::string error;
};

struct HttpOptions {
    int max_retries = 3;
    std::chrono::milliseconds base_backoff{500};
    std::chrono::milliseconds max_backoff{30000};
    std::chrono::seconds timeout{120};
    std::string api_key_env = kApiKeyEnv;
};

// OpenAI-compatible chat-completions client. Retries connection failures,
// 429 and 5xx with exponential backoff (a Retry-After header raises the
// wait, capped at max_backoff). Other statuses fail immediately.
class HttpBackend : public Backend {
public:
    using Transport = std::function<HttpReply(const HttpCall&)>;
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit HttpBackend(HttpOptions options = {});

    // Test seams: replace the network layer or the backoff sleep.
    void set_transport(Transport t) { transport_ = std::move(t); }
    void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

    // Chat-completions body for a request, with media inlined as data URLs.
    static nlohmann::json build_body(const CompletionRequest& req);

protected:
    CompletionResult do_complete(const CompletionRequest& req) override;

private:
    HttpOptions options_;
    Transport transport_;
    Sleeper sleeper_;
};

// Default network transport (cpp-httplib).
HttpReply httplib_transport(const HttpCall& call, std::chrono::seconds timeout);

// "data:<mime>;base64,<payload>" for a media ref; files are read and URLs
// fetched at call time.
std::string media_data_url(const MediaRef& media);

}  // namespace promptsmith
