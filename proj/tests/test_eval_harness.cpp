#include <doctest.h>

#include <map>

#include "promptsmith/eval_harness.hpp"
#include "promptsmith/rng.hpp"
#include "promptsmith/simulated_backend.hpp"
#include "promptsmith/task_data.hpp"
#include "test_support.hpp"

using namespace promptsmith;
using nlohmann::json;

namespace {

Task abc_task() { return Task{"abc", "ABC", "test", "Pick A, B or C.", {"A", "B", "C"}, ""}; }

// Backend answering each sample with a fixed string.
SimulatedBackend scripted(const std::map<std::string, std::string>& answers) {
    SimScript s;
    SimRule r;
    r.sample_responses = answers;
    r.response = "";
    s.rules.push_back(r);
    return SimulatedBackend(std::move(s));
}

Dataset dataset_of(const std::vector<std::pair<std::string, std::string>>& id_gold) {
    Dataset d{"abc", {}, SplitTag::Validation};
    for (const auto& [id, gold] : id_gold) d.samples.push_back({id, {}, gold, {}});
    return d;
}

}  // namespace

TEST_CASE("normalize_answer examples") {
    const std::vector<std::string> wo{"white", "other"};
    CHECK(normalize_answer("  White\xE3\x80\x82", wo) == "white");
    CHECK(normalize_answer("the background is white, not other", wo) == std::nullopt);
    CHECK(normalize_answer("I think it is OTHER.", wo) == "other");
    CHECK(normalize_answer("no idea", wo) == std::nullopt);

    const auto layout = load_task(testing::data_dir() / "layout" / "task.json");
    CHECK(normalize_answer("left-right structure-left text right image", layout.label_set) ==
          "left-right structure-left text right image");
    CHECK(normalize_answer("Up-down structure-up image down text!", layout.label_set) ==
          "up-down structure-up image down text");
}

TEST_CASE("score_sample") {
    const std::vector<std::string> wo{"white", "other"};
    CHECK(score_sample("white", "white", wo).score == 1);
    CHECK(score_sample("other", "white", wo).score == 0);
    const auto unparsed = score_sample("purple", "other", wo);
    CHECK(unparsed.score == 0);
    CHECK(!unparsed.predicted);
    CHECK(score_sample("WHITE", " White ", wo).gold_label == "white");
    CHECK(testing::error_kind_of([&] { score_sample("white", "black", wo); }) == ErrorKind::GoldNotInLabelSet);
}

TEST_CASE("scoring is idempotent under normalization") {
    const std::vector<std::string> labels{"A", "B", "C"};
    for (const char* raw : {"a", " B. ", "answer: c", "A or B", "zzz", "c!", ""}) {
        const auto first = score_sample(raw, "A", labels);
        const auto again = score_sample(prediction_name(first.predicted), "A", labels);
        CHECK(first.score == again.score);
    }
}

TEST_CASE("compute_error_distribution") {
    CHECK(compute_error_distribution({}).empty());
    std::vector<SampleRecord> recs{{"1", "", "B", "A", 0, ""}, {"2", "", "C", "A", 0, ""}, {"3", "", "A", "A", 1, ""}};
    const auto e = compute_error_distribution(recs);
    CHECK(e.buckets.size() == 2);
    CHECK(e.buckets.at({"A", "B"}) == 1);
    CHECK(e.buckets.at({"A", "C"}) == 1);
    CHECK(e.total() == 2);
}

TEST_CASE("evaluate_prompt on four samples with one mistake") {
    const auto task = abc_task();
    const auto d = dataset_of({{"s1", "A"}, {"s2", "B"}, {"s3", "C"}, {"s4", "A"}});
    auto b = scripted({{"s1", "A"}, {"s2", "B"}, {"s3", "C"}, {"s4", "C"}});
    EvalHistory history;
    const auto r = evaluate_prompt(PromptCandidate::from_base("p"), task, d, {&b, ModelRef::inference("m"), {}}, &history);
    CHECK(r.accuracy == 0.75);
    CHECK(r.records.size() == 4);
    CHECK(r.dataset_tag == "validation");
    CHECK(r.error_distribution.buckets.at({"A", "C"}) == 1);
    CHECK(history.size() == 1);
}

TEST_CASE("always-gold backend scores 1 with no errors") {
    const auto task = abc_task();
    const auto d = dataset_of({{"s1", "A"}, {"s2", "B"}, {"s3", "C"}});
    auto b = scripted({{"s1", "a"}, {"s2", "b."}, {"s3", " C "}});
    const auto r = evaluate_prompt(PromptCandidate::from_base("p"), task, d, {&b, ModelRef::inference("m"), {}});
    CHECK(r.accuracy == 1.0);
    CHECK(r.error_distribution.empty());
}

TEST_CASE("ten-sample confusion fixture") {
    const auto task = abc_task();
    const auto d = dataset_of({{"s0", "A"}, {"s1", "A"}, {"s2", "A"}, {"s3", "B"}, {"s4", "B"},
                               {"s5", "C"}, {"s6", "C"}, {"s7", "C"}, {"s8", "A"}, {"s9", "B"}});
    auto b = scripted({{"s0", "B"}, {"s1", "[B]"}, {"s2", "A"}, {"s3", "B"}, {"s4", "b"},
                       {"s5", "C"}, {"s6", "not sure"}, {"s7", "c"}, {"s8", "a"}, {"s9", "B!"}});
    const auto r = evaluate_prompt(PromptCandidate::from_base("p"), task, d, {&b, ModelRef::inference("m"), {}});
    ErrorDistribution expected;
    expected.buckets[{"A", std::string("B")}] = 2;
    expected.buckets[{"C", std::nullopt}] = 1;
    CHECK(r.error_distribution == expected);
    CHECK(r.accuracy == doctest::Approx(0.7));
    CHECK(r.error_distribution.describe() == "- A -> B: 2\n- C -> UNPARSED: 1");
}

TEST_CASE("failed samples score zero and all failures propagate") {
    const auto task = abc_task();
    const auto d = dataset_of({{"s1", "A"}, {"s2", "B"}});
    SimScript s;
    SimRule fail;
    fail.sample_ids = {"s2"};
    fail.fail = ErrorKind::Transport;
    s.rules.push_back(fail);
    s.default_response = "A";
    SimulatedBackend b(s);
    const auto r = evaluate_prompt(PromptCandidate::from_base("p"), task, d, {&b, ModelRef::inference("m"), {}});
    CHECK(r.accuracy == 0.5);
    CHECK(!r.records[1].predicted);
    CHECK(!r.records[1].error.empty());
    CHECK(r.error_distribution.buckets.at({"B", std::nullopt}) == 1);

    SimulatedBackend all_fail(SimScript::from_json(json::parse(R"({"rules":[{"fail":"transport"}]})")));
    CHECK(testing::error_kind_of([&] {
              evaluate_prompt(PromptCandidate::from_base("p"), task, d, {&all_fail, ModelRef::inference("m"), {}});
          }) == ErrorKind::AllSamplesFailed);
    const Dataset empty{"abc", {}, SplitTag::Validation};
    CHECK(testing::error_kind_of([&] {
              evaluate_prompt(PromptCandidate::from_base("p"), task, empty, {&b, ModelRef::inference("m"), {}});
          }) == ErrorKind::EmptyDataset);
}

TEST_CASE("scripted fixtures match an independent recount") {
    const std::vector<std::string> labels{"alpha", "beta", "gamma", "delta"};
    const Task task{"rc", "", "", "p", labels, ""};
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        Dataset d{"rc", {}, SplitTag::Validation};
        std::map<std::string, std::string> answers;
        std::map<std::pair<std::string, std::string>, int> oracle;  // intended (gold, pred) for wrong answers
        int oracle_correct = 0;
        for (int i = 0; i < 200; ++i) {
            const std::string id = "x" + std::to_string(i);
            const auto& gold = labels[rng.below(labels.size())];
            d.samples.push_back({id, {}, gold, {}});
            std::string intended;
            std::string raw;
            switch (rng.below(5)) {
                case 0: intended = labels[rng.below(labels.size())]; raw = intended; break;
                case 1: intended = labels[rng.below(labels.size())]; raw = "  " + intended + ". "; break;
                case 2: {
                    intended = labels[rng.below(labels.size())];
                    raw = "I believe the answer is " + intended + " here";
                    for (auto& c : raw) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
                    break;
                }
                case 3: intended = "UNPARSED"; raw = labels[0] + " or " + labels[1]; break;
                default: intended = "UNPARSED"; raw = "no idea"; break;
            }
            answers[id] = raw;
            if (intended == gold) ++oracle_correct;
            else ++oracle[{gold, intended}];
        }
        auto b = scripted(answers);
        const auto r = evaluate_prompt(PromptCandidate::from_base("p"), task, d, {&b, ModelRef::inference("m"), {}});
        std::map<std::pair<std::string, std::string>, int> got;
        for (const auto& [k, n] : r.error_distribution.buckets) got[{k.gold, prediction_name(k.predicted)}] = n;
        CHECK(got == oracle);
        CHECK(r.accuracy == static_cast<double>(oracle_correct) / 200.0);
        CHECK(r.correct() + r.error_distribution.total() == 200);
        for (const auto& [k, n] : r.error_distribution.buckets) CHECK(k.predicted != std::optional<std::string>(k.gold));
    }
}

TEST_CASE("evaluation is byte-stable and the evaluator caches by prompt text") {
    const auto task = abc_task();
    const auto d = dataset_of({{"s1", "A"}, {"s2", "B"}});
    auto b = scripted({{"s1", "A"}, {"s2", "C"}});
    const ModelHandle h{&b, ModelRef::inference("m"), 3};
    const auto r1 = evaluate_prompt(PromptCandidate::from_base("p"), task, d, h);
    const auto r2 = evaluate_prompt(PromptCandidate::from_base("p"), task, d, h);
    CHECK(eval_result_to_json(r1).dump() == eval_result_to_json(r2).dump());

    Evaluator ev(task, d, h);
    const auto calls = b.call_count();
    ev.evaluate(PromptCandidate::from_base("p"));
    ev.evaluate(PromptCandidate::from_base("p"));
    ev.evaluate(PromptCandidate::from_base("q"));
    CHECK(ev.evaluations() == 2);
    CHECK(ev.history().size() == 2);
    CHECK(ev.has_cached("p"));
    CHECK(b.call_count() - calls == 4);
}

TEST_CASE("the unparsed marker never parses as a label") {
    CHECK(normalize_answer("UNPARSED", {"A", "B"}) == std::nullopt);
    CHECK(normalize_answer("unparsed", {"unparsed", "other"}) == "unparsed");
}
