#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace promptsmith {

struct Task {
    std::string task_id;
    std::string name;
    std::string category;
    std::string initial_prompt;
    std::vector<std::string> label_set;
    std::string description;

    bool operator==(const Task&) const = default;
};

enum class MediaKind { ImagePath, ImageUrl, ImageBase64, None };

struct MediaRef {
    MediaKind kind = MediaKind::None;
    std::string payload;

    bool operator==(const MediaRef&) const = default;
};

struct Sample {
    std::string sample_id;
    std::vector<MediaRef> media;
    std::string gold_label;
    std::map<std::string, std::string> extra;

    bool operator==(const Sample&) const = default;
};

enum class SplitTag { Train, Validation, Test, Unsplit };

std::string_view to_string(SplitTag tag);

// Immutable after load; shared read-only across evaluation workers.
struct Dataset {
    std::string task_id;
    std::vector<Sample> samples;
    SplitTag split_tag = SplitTag::Unsplit;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    bool operator==(const Dataset&) const = default;
};

struct SplitFractions {
    double train = 0.5;
    double validation = 0.5;
};

Task task_from_json(const nlohmann::json& j);
nlohmann::json task_to_json(const Task& t);
Task load_task(const std::filesystem::path& path);

// One message per violated rule, each naming the field; empty iff valid.
std::vector<std::string> validate_task(const Task& t);

// Entry of t.label_set whose normalized form equals normalize_label(raw).
std::optional<std::string> canonical_label(const Task& t, std::string_view raw);

// Parses JSONL text (one sample per line, blank lines ignored).
// Throws MalformedLine, UnknownLabel or DuplicateSampleId.
Dataset parse_dataset(std::string_view jsonl, const Task& task);
Dataset load_dataset(const std::filesystem::path& path, const Task& task);

// Canonical JSONL: keys in schema order, compact, one line per sample.
std::string serialize_dataset(const Dataset& d);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

// Seeded partition. validation gets floor(fraction * N); every other sample,
// including the rounding remainder, goes to train. Each split keeps the
// original sample order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, SplitFractions fractions, std::uint64_t seed);

}  // namespace promptsmith
