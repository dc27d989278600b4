#include <doctest.h>

#include <set>
#include <thread>
#include <vector>

#include "promptsmith/rng.hpp"
#include "promptsmith/util.hpp"
#include "test_support.hpp"

using namespace promptsmith;

TEST_CASE("trim removes ASCII whitespace and ideographic spaces") {
    CHECK(trim("  a b \t\n") == "a b");
    CHECK(trim("\xE3\x80\x80white\xE3\x80\x80") == "white");
    CHECK(trim("") == "");
    CHECK(trim(" \t ") == "");
}

TEST_CASE("normalize_label strips trailing punctuation and folds case") {
    CHECK(normalize_label("  White。") == "white");
    CHECK(normalize_label("OTHER!?") == "other");
    CHECK(normalize_label("white\xEF\xBC\x81") == "white");  // full-width !
    CHECK(normalize_label("a.b.") == "a.b");
    CHECK(normalize_label("...") == "");
}

TEST_CASE("fill_template substitutes known placeholders once and leaves other braces") {
    const std::string t = R"(Use {prompt}. Format: {"Error Causes": ""} {unknown})";
    CHECK(fill_template(t, {{"prompt", "P"}}) == R"(Use P. Format: {"Error Causes": ""} {unknown})");
    // a value containing a placeholder is not expanded again
    CHECK(fill_template("{a}{b}", {{"a", "{b}"}, {"b", "x"}}) == "{b}x");
    CHECK(count_placeholder("{prompt} and {prompt}", "prompt") == 2);
    CHECK(count_placeholder("none", "prompt") == 0);
}

TEST_CASE("truncate_utf8 never splits a multi-byte sequence") {
    const std::string s = "ab\xE4\xB8\xAD\xE6\x96\x87";  // ab + two 3-byte chars
    CHECK(truncate_utf8(s, 100) == s);
    CHECK(truncate_utf8(s, 2) == "ab");
    CHECK(truncate_utf8(s, 3) == "ab");
    CHECK(truncate_utf8(s, 4) == "ab");
    CHECK(truncate_utf8(s, 5) == "ab\xE4\xB8\xAD");
}

TEST_CASE("strip_fences_and_quotes") {
    CHECK(strip_fences_and_quotes("```\nNEW PROMPT v2\n```") == "NEW PROMPT v2");
    CHECK(strip_fences_and_quotes("```text\nabc\n```\n") == "abc");
    CHECK(strip_fences_and_quotes("\"quoted\"") == "quoted");
    CHECK(strip_fences_and_quotes("  plain  ") == "plain");
    CHECK(strip_fences_and_quotes("\"unbalanced") == "\"unbalanced");
}

TEST_CASE("write_file_atomic replaces content and leaves no temp files") {
    testing::TempDir dir;
    const auto p = dir / "out.json";
    write_file_atomic(p, "one");
    write_file_atomic(p, "two");
    CHECK(read_file(p) == "two");
    int files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
    CHECK(files == 1);
}

TEST_CASE("concurrent atomic writes always leave one complete version") {
    testing::TempDir dir;
    const auto p = dir / "shared.txt";
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 25; ++i) write_file_atomic(p, std::string(1000, static_cast<char>('a' + t)));
        });
    }
    for (auto& t : threads) t.join();
    const auto content = read_file(p);
    REQUIRE(content.size() == 1000);
    CHECK(content == std::string(1000, content[0]));
}

TEST_CASE("read_file on a missing path is an Io error") {
    CHECK(testing::error_kind_of([] { read_file("/nonexistent/promptsmith/file"); }) == ErrorKind::Io);
}

TEST_CASE("fnv1a64 matches an independent implementation") {
    for (const char* s : {"", "a", "hello world", "\xE4\xB8\xAD"}) CHECK(fnv1a64(s) == testing::fnv1a(s));
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("format_fixed and join") {
    CHECK(format_fixed(0.5, 4) == "0.5000");
    CHECK(format_fixed(2.0 / 3.0, 3) == "0.667");
    CHECK(join({"a", "b", "c"}, ", ") == "a, b, c");
    CHECK(join({}, ",") == "");
}

TEST_CASE("Rng is reproducible and below() stays in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng r(7);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto x = r.below(5);
        CHECK(x < 5);
        seen.insert(x);
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(seen.size() == 5);
}

TEST_CASE("Rng::normal has roughly unit moments") {
    Rng r(3);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("derive_seed separates components") {
    CHECK(derive_seed(1, "search") == derive_seed(1, "search"));
    CHECK(derive_seed(1, "search") != derive_seed(1, "split"));
    CHECK(derive_seed(1, "search") != derive_seed(2, "search"));
}
