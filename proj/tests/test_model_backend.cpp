#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <mutex>
#include <thread>

#include "promptsmith/model_backend.hpp"
#include "promptsmith/simulated_backend.hpp"
#include "promptsmith/util.hpp"
#include "test_support.hpp"

using namespace promptsmith;
using nlohmann::json;

namespace {

std::vector<Sample> samples(int n) {
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) out.push_back({"s" + std::to_string(i), {}, "white", {{"pos", std::to_string(i)}}});
    return out;
}

}  // namespace

TEST_CASE("echo-label script answers the label regardless of input") {
    SimulatedBackend b(SimScript::from_spec("echo-label:white"));
    const auto model = ModelRef::inference("m");
    CHECK(b.complete(CompletionRequest::single_user(model, "anything")).text == "white");
    CHECK(b.complete(CompletionRequest::single_user(model, "something else")).text == "white");
    CHECK(b.complete(CompletionRequest::single_user(model, "x")).backend_kind == BackendKind::Simulated);
    CHECK(testing::error_kind_of([] { SimScript::from_spec("bogus"); }) == ErrorKind::Config);
}

TEST_CASE("model reference defaults") {
    CHECK(ModelRef::inference("a").temperature == 0.0);
    CHECK(ModelRef::optimizer("b").temperature == 1.0);
    CHECK(ModelRef::inference("a").role == ModelRole::Inference);
    CHECK(ModelRef::optimizer("b").role == ModelRole::Optimizer);
    const auto m = model_ref_from_json(json{{"model_id", "x"}, {"endpoint", "https://h/v1/chat/completions"}},
                                       ModelRole::Optimizer);
    CHECK(m.temperature == 1.0);
    CHECK(!m.is_simulated());
    CHECK(testing::error_kind_of([] { model_ref_from_json(json{{"model_id", "x"}, {"parallelism_limit", 0}},
                                                          ModelRole::Inference); }) == ErrorKind::Config);
}

TEST_CASE("scripted rules: role, sample ids, substring match, templates") {
    const auto script = SimScript::from_json(json::parse(R"({
        "rules": [
            {"role": "optimizer", "match": "rewrite", "response": "REWRITTEN:{input_hash}"},
            {"sample_ids": ["s1"], "response": "other"},
            {"match_all": ["alpha", "beta"], "response": "both {meta_pos}"},
            {"role": "inference", "sample_responses": {"s2": "gamma"}, "response": "{sample_id} fallback"}
        ],
        "default": "none"
    })"));
    SimulatedBackend b(script);
    const auto inf = ModelRef::inference("i");
    const auto opt = ModelRef::optimizer("o");

    const std::string text = "please rewrite this";
    CHECK(b.complete(CompletionRequest::single_user(opt, text)).text == "REWRITTEN:" + hex64(testing::fnv1a(text)));
    CHECK(b.complete(CompletionRequest::single_user(inf, text)).text == " fallback");

    auto s = samples(4);
    CHECK(b.complete(inference_request("x", s[1], inf, std::nullopt)).text == "other");
    CHECK(b.complete(inference_request("alpha beta", s[3], inf, std::nullopt)).text == "both 3");
    CHECK(b.complete(inference_request("x", s[2], inf, std::nullopt)).text == "gamma");
    CHECK(b.complete(inference_request("x", s[0], inf, std::nullopt)).text == "s0 fallback");
    CHECK(b.complete(CompletionRequest::single_user(opt, "no match")).text == "none");
}

TEST_CASE("no matching rule and no default is a transport error") {
    SimulatedBackend b;
    CHECK(testing::error_kind_of([&] { b.complete(CompletionRequest::single_user(ModelRef::inference("i"), "x")); }) ==
          ErrorKind::Transport);
}

TEST_CASE("simulated responses are a pure function of request and seed") {
    const auto script = SimScript::from_json(json::parse(R"({"rules":[{"choices":["a","b","c","d","e","f"]}]})"));
    SimulatedBackend b1(script), b2(script);
    const auto model = ModelRef::inference("m");
    bool seed_matters = false;
    for (int i = 0; i < 20; ++i) {
        auto req = CompletionRequest::single_user(model, "prompt " + std::to_string(i));
        req.seed = 5;
        CHECK(b1.complete(req).text == b2.complete(req).text);
        CHECK(b1.complete(req).text == b1.complete(req).text);
        auto other = req;
        other.seed = 6;
        seed_matters = seed_matters || b1.complete(req).text != b1.complete(other).text;
    }
    CHECK(seed_matters);
}

TEST_CASE("requests need a user message") {
    SimulatedBackend b(SimScript::from_spec("echo-label:x"));
    CompletionRequest req;
    req.model = ModelRef::inference("m");
    req.messages.push_back({MessageRole::System, "sys", {}});
    CHECK(testing::error_kind_of([&] { b.complete(req); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("trace log records every call, failures included") {
    testing::TempDir dir;
    auto log = std::make_shared<TraceLog>(dir / "trace.jsonl");
    SimulatedBackend b(SimScript::from_json(json::parse(R"({"rules":[{"match":"boom","fail":"transport"}],"default":"ok"})")));
    b.set_trace_log(log);
    const auto model = ModelRef::inference("m");
    b.complete(CompletionRequest::single_user(model, "hello"));
    CHECK_THROWS_AS(b.complete(CompletionRequest::single_user(model, "boom")), Error);
    REQUIRE(log->size() == 2);
    const auto recs = log->records();
    CHECK(recs[0]["response"] == "ok");
    CHECK(recs[0]["retry_count"] == 0);
    CHECK(recs[0]["request"]["messages"][0]["text"] == "hello");
    CHECK(recs[1]["error_kind"] == "Transport");
    CHECK(b.call_count() == 2);

    const auto lines = read_file(dir / "trace.jsonl");
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 2);
    CHECK(json::parse(lines.substr(0, lines.find('\n')))["response"] == "ok");
}

TEST_CASE("batch outputs align with samples") {
    auto script = SimScript::from_json(json::parse(R"({"rules":[{"response":"label-{meta_pos}"}]})"));
    SimulatedBackend b(script);
    auto model = ModelRef::inference("m");
    const auto s = samples(4);
    const auto out = batch_infer(b, "p", s, model);
    REQUIRE(out.outputs.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(out.outputs[i] == "label-" + std::to_string(i));
    CHECK(out.failure_count() == 0);

    model.parallelism_limit = 3;
    const auto many = samples(40);
    const auto par = batch_infer(b, "p", many, model);
    for (int i = 0; i < 40; ++i) CHECK(par.outputs[i] == "label-" + std::to_string(i));
}

TEST_CASE("one failing sample becomes an error marker") {
    SimulatedBackend b(SimScript::from_json(
        json::parse(R"({"rules":[{"sample_ids":["s2"],"fail":"transport"},{"response":"white"}]})")));
    const auto out = batch_infer(b, "p", samples(4), ModelRef::inference("m"));
    CHECK(out.failure_count() == 1);
    CHECK(!out.outputs[2]);
    CHECK(!out.errors[2].empty());
    CHECK(out.errors[0].empty());
    CHECK(out.outputs[3] == "white");
}

TEST_CASE("every sample failing raises AllSamplesFailed") {
    SimulatedBackend b(SimScript::from_json(json::parse(R"({"rules":[{"fail":"rate_limit"}]})")));
    CHECK(testing::error_kind_of([&] { batch_infer(b, "p", samples(3), ModelRef::inference("m")); }) ==
          ErrorKind::AllSamplesFailed);
    CHECK(testing::error_kind_of([&] { batch_infer(b, "p", {}, ModelRef::inference("m")); }) ==
          ErrorKind::EmptyDataset);
}

TEST_CASE("parallelism limit 1 starts requests in sample order") {
    SimulatedBackend b;
    std::mutex mu;
    std::vector<std::string> order;
    b.add_hook([&](const CompletionRequest& req) -> std::optional<std::string> {
        std::lock_guard lock(mu);
        order.push_back(req.metadata.at("sample_id"));
        return "x";
    });
    const auto s = samples(10);
    batch_infer(b, "p", s, ModelRef::inference("m"));
    REQUIRE(order.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(order[i] == "s" + std::to_string(i));
}

TEST_CASE("concurrency never exceeds the model's parallelism limit") {
    SimulatedBackend b;
    std::atomic<int> in_flight{0}, peak{0};
    b.add_hook([&](const CompletionRequest&) -> std::optional<std::string> {
        const int now = ++in_flight;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        --in_flight;
        return "x";
    });
    auto model = ModelRef::inference("m");
    model.parallelism_limit = 2;
    batch_infer(b, "p", samples(16), model);
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}

TEST_CASE("extract_structured finds the first JSON object") {
    const std::vector<std::string> keys{"Error Causes", "Improvement Methods"};
    const auto m = extract_structured(R"(Sure! {"Error Causes": "a", "Improvement Methods": "b"})", keys);
    CHECK(m.at("Error Causes") == "a");
    CHECK(m.at("Improvement Methods") == "b");

    const auto fenced = extract_structured("```json\n{\"Error Causes\": \"x {y}\", \"Improvement Methods\": [1, 2]}\n```", keys);
    CHECK(fenced.at("Error Causes") == "x {y}");
    CHECK(fenced.at("Improvement Methods") == "[1,2]");

    const auto skip = extract_structured(R"(note {not json} then {"Error Causes": "c", "Improvement Methods": "d"})", keys);
    CHECK(skip.at("Error Causes") == "c");

    CHECK(testing::error_kind_of([&] { extract_structured("plain prose", keys); }) == ErrorKind::NoJsonFound);
    try {
        extract_structured(R"({"Error Causes": "a"})", keys);
        FAIL("expected MissingKeys");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingKeys);
        CHECK(e.details() == std::vector<std::string>{"Improvement Methods"});
    }
}

TEST_CASE("request serialization keeps metadata local") {
    Sample s{"s1", {{MediaKind::ImagePath, "img/a.jpg"}}, "white", {{"shop", "9"}}};
    const auto req = inference_request("prompt", s, ModelRef::inference("m"), 4);
    CHECK(req.metadata.at("sample_id") == "s1");
    CHECK(req.metadata.at("shop") == "9");
    const auto j = request_to_json(req);
    CHECK(j["messages"][0]["text"] == "prompt");
    CHECK(j["messages"][0]["media"][0]["payload"] == "img/a.jpg");
}

TEST_CASE("ModelHandle::ask sends one user message") {
    SimulatedBackend b;
    std::string seen;
    b.add_hook([&](const CompletionRequest& req) -> std::optional<std::string> {
        seen = SimulatedBackend::user_text(req);
        CHECK(req.messages.size() == 1);
        CHECK(req.seed == std::optional<std::uint64_t>(9));
        return "done";
    });
    const ModelHandle h{&b, ModelRef::optimizer("o"), 9};
    CHECK(h.ask("question").text == "done");
    CHECK(seen == "question");
}
