#include <doctest.h>

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "promptsmith/http_backend.hpp"
#include "promptsmith/util.hpp"
#include "test_support.hpp"

using namespace promptsmith;
using nlohmann::json;

namespace {

struct ApiKey {
    explicit ApiKey(const char* value) {
        if (const char* old = std::getenv(kApiKeyEnv)) saved = old;
        if (value) setenv(kApiKeyEnv, value, 1);
        else unsetenv(kApiKeyEnv);
    }
    ~ApiKey() {
        if (saved) setenv(kApiKeyEnv, saved->c_str(), 1);
        else unsetenv(kApiKeyEnv);
    }
    std::optional<std::string> saved;
};

std::string ok_body(const std::string& text) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
        .dump();
}

ModelRef http_model() { return ModelRef::inference("small-vlm", "http://127.0.0.1:9/v1/chat/completions"); }

}  // namespace

TEST_CASE("two 429 replies then success: retry_count 2 in the trace log") {
    ApiKey key("secret");
    HttpBackend b;
    int calls = 0;
    std::vector<std::chrono::milliseconds> waits;
    b.set_transport([&](const HttpCall& call) {
        ++calls;
        CHECK(call.headers.at("Authorization") == "Bearer secret");
        if (calls <= 2) return HttpReply{429, "slow down", std::nullopt, ""};
        return HttpReply{200, ok_body("white"), std::nullopt, ""};
    });
    b.set_sleeper([&](std::chrono::milliseconds d) { waits.push_back(d); });
    auto log = std::make_shared<TraceLog>();
    b.set_trace_log(log);

    const auto r = b.complete(CompletionRequest::single_user(http_model(), "Is it white?"));
    CHECK(r.text == "white");
    CHECK(r.retry_count == 2);
    CHECK(r.backend_kind == BackendKind::Http);
    CHECK(r.usage.input_tokens == 11);
    CHECK(r.usage.output_tokens == 3);
    CHECK(calls == 3);
    REQUIRE(waits.size() == 2);
    CHECK(waits[0] == std::chrono::milliseconds(500));
    CHECK(waits[1] == std::chrono::milliseconds(1000));
    REQUIRE(log->size() == 1);
    CHECK(log->records()[0]["retry_count"] == 2);
    CHECK(log->records()[0]["backend"] == "http");
}

TEST_CASE("missing credential fails before any network call") {
    ApiKey key(nullptr);
    HttpBackend b;
    int calls = 0;
    b.set_transport([&](const HttpCall&) {
        ++calls;
        return HttpReply{200, ok_body("x"), std::nullopt, ""};
    });
    CHECK(testing::error_kind_of([&] { b.complete(CompletionRequest::single_user(http_model(), "q")); }) ==
          ErrorKind::AuthMissing);
    CHECK(calls == 0);
}

TEST_CASE("retry policy: exhaustion, non-retryable status, rate limit, Retry-After") {
    ApiKey key("k");
    std::vector<std::chrono::milliseconds> waits;
    auto sleeper = [&](std::chrono::milliseconds d) { waits.push_back(d); };

    HttpBackend always_503;
    int calls = 0;
    always_503.set_transport([&](const HttpCall&) {
        ++calls;
        return HttpReply{503, "busy", std::nullopt, ""};
    });
    always_503.set_sleeper(sleeper);
    CHECK(testing::error_kind_of([&] { always_503.complete(CompletionRequest::single_user(http_model(), "q")); }) ==
          ErrorKind::RetriesExhausted);
    CHECK(calls == 4);  // first try + 3 retries

    HttpBackend bad_request;
    bad_request.set_transport([](const HttpCall&) { return HttpReply{400, "bad", std::nullopt, ""}; });
    CHECK(testing::error_kind_of([&] { bad_request.complete(CompletionRequest::single_user(http_model(), "q")); }) ==
          ErrorKind::Transport);

    HttpOptions no_retry;
    no_retry.max_retries = 0;
    HttpBackend limited(no_retry);
    limited.set_transport([](const HttpCall&) { return HttpReply{429, "", 7.0, ""}; });
    try {
        limited.complete(CompletionRequest::single_user(http_model(), "q"));
        FAIL("expected RateLimited");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RateLimited);
        CHECK(e.details().at(0) == "7.000");
    }

    HttpOptions capped;
    capped.max_backoff = std::chrono::milliseconds(4000);
    HttpBackend after(capped);
    int n = 0;
    after.set_transport([&](const HttpCall&) {
        return ++n == 1 ? HttpReply{429, "", 2.0, ""} : n == 2 ? HttpReply{429, "", 60.0, ""} : HttpReply{200, ok_body("ok"), std::nullopt, ""};
    });
    waits.clear();
    after.set_sleeper(sleeper);
    CHECK(after.complete(CompletionRequest::single_user(http_model(), "q")).text == "ok");
    REQUIRE(waits.size() == 2);
    CHECK(waits[0] == std::chrono::milliseconds(2000));
    CHECK(waits[1] == std::chrono::milliseconds(4000));

    HttpBackend conn;
    int attempts = 0;
    conn.set_transport([&](const HttpCall&) {
        return ++attempts == 1 ? HttpReply{0, "", std::nullopt, "Connection"} : HttpReply{200, ok_body("up"), std::nullopt, ""};
    });
    conn.set_sleeper(sleeper);
    CHECK(conn.complete(CompletionRequest::single_user(http_model(), "q")).retry_count == 1);
}

TEST_CASE("null content is recorded as a refusal") {
    ApiKey key("k");
    HttpBackend b;
    b.set_transport([](const HttpCall&) {
        return HttpReply{200, R"({"choices":[{"message":{"role":"assistant","content":null,"refusal":"no"}}]})",
                         std::nullopt, ""};
    });
    const auto r = b.complete(CompletionRequest::single_user(http_model(), "q"));
    CHECK(r.refusal);
    CHECK(r.text.empty());

    HttpBackend garbage;
    garbage.set_transport([](const HttpCall&) { return HttpReply{200, "not json", std::nullopt, ""}; });
    CHECK(testing::error_kind_of([&] { garbage.complete(CompletionRequest::single_user(http_model(), "q")); }) ==
          ErrorKind::Transport);
}

TEST_CASE("request body follows the chat-completions shape with inline images") {
    testing::TempDir dir;
    write_file_atomic(dir / "pic.png", "PNGDATA");
    CompletionRequest req;
    req.model = ModelRef::inference("small-vlm", "http://h/v1/chat/completions");
    req.model.max_output_tokens = 64;
    req.seed = 3;
    req.messages.push_back({MessageRole::System, "be brief", {}});
    req.messages.push_back({MessageRole::User, "what layout?", {{MediaKind::ImagePath, (dir / "pic.png").string()}}});
    req.metadata["sample_id"] = "never-sent";

    const auto body = HttpBackend::build_body(req);
    CHECK(body["model"] == "small-vlm");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["max_tokens"] == 64);
    CHECK(body["seed"] == 3);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][0]["content"] == "be brief");
    const auto& parts = body["messages"][1]["content"];
    CHECK(parts[0]["type"] == "image_url");
    CHECK(parts[0]["image_url"]["url"] == "data:image/png;base64,UE5HREFUQQ==");
    CHECK(parts[1]["text"] == "what layout?");
    CHECK(body.dump().find("never-sent") == std::string::npos);

    CHECK(media_data_url({MediaKind::ImageBase64, "QUJD"}) == "data:image/jpeg;base64,QUJD");
    CHECK(media_data_url({MediaKind::ImageBase64, "data:image/gif;base64,R0"}) == "data:image/gif;base64,R0");
}

TEST_CASE("round trip through a local HTTP server") {
    ApiKey key("local-key");
    httplib::Server server;
    int hits = 0;
    std::string auth, model;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        auth = req.get_header_value("Authorization");
        model = json::parse(req.body)["model"];
        if (hits == 1) {
            res.status = 429;
            res.set_header("Retry-After", "0");
            return;
        }
        res.set_content(ok_body("other"), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpOptions opts;
    opts.base_backoff = std::chrono::milliseconds(1);
    HttpBackend b(opts);
    const auto m = ModelRef::inference("remote-model", "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions");
    const auto r = b.complete(CompletionRequest::single_user(m, "Is the background white?"));
    server.stop();
    t.join();

    CHECK(r.text == "other");
    CHECK(r.retry_count == 1);
    CHECK(hits == 2);
    CHECK(auth == "Bearer local-key");
    CHECK(model == "remote-model");
}

TEST_CASE("unreachable server exhausts retries") {
    ApiKey key("k");
    HttpOptions opts;
    opts.max_retries = 1;
    opts.base_backoff = std::chrono::milliseconds(1);
    opts.timeout = std::chrono::seconds(2);
    HttpBackend b(opts);
    const auto m = ModelRef::inference("x", "http://127.0.0.1:1/v1/chat/completions");
    CHECK(testing::error_kind_of([&] { b.complete(CompletionRequest::single_user(m, "q")); }) ==
          ErrorKind::RetriesExhausted);
}
