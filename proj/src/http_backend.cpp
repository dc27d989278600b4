#include "promptsmith/http_backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "promptsmith/error.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;

namespace {

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

UrlParts split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorKind::Config, "endpoint is not a URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string mime_for(const std::string& path) {
    auto lower = path;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    auto ends_with = [&](std::string_view ext) {
        return lower.size() >= ext.size() && lower.compare(lower.size() - ext.size(), ext.size(), ext) == 0;
    };
    if (ends_with(".png")) return "image/png";
    if (ends_with(".gif")) return "image/gif";
    if (ends_with(".webp")) return "image/webp";
    return "image/jpeg";
}

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

std::string media_data_url(const MediaRef& media) {
    switch (media.kind) {
        case MediaKind::ImageBase64:
            if (media.payload.rfind("data:", 0) == 0) return media.payload;
            return "data:image/jpeg;base64," + media.payload;
        case MediaKind::ImagePath:
            return "data:" + mime_for(media.payload) + ";base64," + httplib::detail::base64_encode(read_file(media.payload));
        case MediaKind::ImageUrl: {
            const auto parts = split_url(media.payload);
            httplib::Client cli(parts.origin);
            cli.set_follow_location(true);
            auto res = cli.Get(parts.path);
            if (!res || res->status != 200) {
                throw Error(ErrorKind::Transport, "cannot fetch image " + media.payload,
                            {std::to_string(res ? res->status : 0)});
            }
            auto mime = res->get_header_value("Content-Type");
            if (mime.empty()) mime = mime_for(parts.path);
            return "data:" + mime + ";base64," + httplib::detail::base64_encode(res->body);
        }
        case MediaKind::None:
            break;
    }
    return {};
}

HttpReply httplib_transport(const HttpCall& call, std::chrono::seconds timeout) {
    const auto parts = split_url(call.url);
    httplib::Client cli(parts.origin);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers;
    for (const auto& [k, v] : call.headers) headers.emplace(k, v);
    auto res = cli.Post(parts.path, headers, call.body, "application/json");
    HttpReply reply;
    if (!res) {
        reply.error = httplib::to_string(res.error());
        return reply;
    }
    reply.status = res->status;
    reply.body = res->body;
    if (res->has_header("Retry-After")) {
        char* end = nullptr;
        const auto value = res->get_header_value("Retry-After");
        const double secs = std::strtod(value.c_str(), &end);
        if (end != value.c_str()) reply.retry_after_s = secs;
    }
    return reply;
}

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
    transport_ = [timeout = options_.timeout](const HttpCall& call) { return httplib_transport(call, timeout); };
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

json HttpBackend::build_body(const CompletionRequest& req) {
    json body;
    body["model"] = req.model.model_id;
    body["temperature"] = req.model.temperature;
    body["max_tokens"] = req.model.max_output_tokens;
    if (req.seed) body["seed"] = *req.seed;
    body["messages"] = json::array();
    for (const auto& m : req.messages) {
        json msg{{"role", m.role == MessageRole::System ? "system" : "user"}};
        if (m.media.empty()) {
            msg["content"] = m.text;
        } else {
            json parts = json::array();
            for (const auto& media : m.media) {
                if (media.kind == MediaKind::None) continue;
                parts.push_back({{"type", "image_url"}, {"image_url", {{"url", media_data_url(media)}}}});
            }
            parts.push_back({{"type", "text"}, {"text", m.text}});
            msg["content"] = std::move(parts);
        }
        body["messages"].push_back(std::move(msg));
    }
    return body;
}

CompletionResult HttpBackend::do_complete(const CompletionRequest& req) {
    const char* key = std::getenv(options_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw Error(ErrorKind::AuthMissing, "environment variable " + options_.api_key_env + " is not set");
    }

    HttpCall call;
    call.url = req.model.endpoint;
    call.headers["Authorization"] = std::string("Bearer ") + key;
    call.body = build_body(req).dump();

    const auto started = std::chrono::steady_clock::now();
    HttpReply reply;
    int attempt = 0;
    for (;; ++attempt) {
        reply = transport_(call);
        if (reply.status == 200) break;
        if (!retryable(reply.status)) {
            throw Error(ErrorKind::Transport,
                        "HTTP " + std::to_string(reply.status) + ": " + truncate_utf8(reply.body, 300),
                        {std::to_string(reply.status)});
        }
        if (attempt >= options_.max_retries) {
            if (options_.max_retries == 0 && reply.status == 429) {
                throw Error(ErrorKind::RateLimited, "rate limited",
                            {reply.retry_after_s ? format_fixed(*reply.retry_after_s, 3) : ""});
            }
            throw Error(ErrorKind::RetriesExhausted,
                        "gave up after " + std::to_string(attempt) + " retries; last status " +
                            std::to_string(reply.status) + (reply.error.empty() ? "" : " (" + reply.error + ")"),
                        {std::to_string(reply.status), std::to_string(attempt)});
        }
        std::chrono::milliseconds wait = options_.base_backoff * (1LL << std::min(attempt, 20));
        if (reply.retry_after_s) {
            wait = std::max<std::chrono::milliseconds>(wait, std::chrono::milliseconds(static_cast<long long>(*reply.retry_after_s * 1000.0)));
        }
        sleeper_(std::min<std::chrono::milliseconds>(wait, options_.max_backoff));
    }

    CompletionResult r;
    r.backend_kind = BackendKind::Http;
    r.retry_count = attempt;
    r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started)
                       .count();
    try {
        const auto j = json::parse(reply.body);
        const auto& msg = j.at("choices").at(0).at("message");
        const auto& content = msg.at("content");
        if (content.is_null()) {
            r.refusal = true;
        } else {
            r.text = content.get<std::string>();
        }
        if (msg.contains("refusal") && msg["refusal"].is_string()) r.refusal = true;
        if (j.contains("usage")) {
            r.usage.input_tokens = j["usage"].value("prompt_tokens", 0);
            r.usage.output_tokens = j["usage"].value("completion_tokens", 0);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Transport, std::string("malformed completion body: ") + e.what(), {"200"});
    }
    return r;
}

}  // namespace promptsmith
