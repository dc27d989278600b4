#include "promptsmith/task_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "promptsmith/error.hpp"
#include "promptsmith/rng.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::Train: return "train";
        case SplitTag::Validation: return "validation";
        case SplitTag::Test: return "test";
        case SplitTag::Unsplit: return "unsplit";
    }
    return "unsplit";
}

namespace {

std::string string_field(const json& j, const char* key, bool required) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        if (required) throw Error(ErrorKind::InvalidArgument, std::string("missing field '") + key + "'");
        return {};
    }
    if (!it->is_string()) throw Error(ErrorKind::InvalidArgument, std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

MediaKind media_kind_from(std::string_view s) {
    if (s == "path") return MediaKind::ImagePath;
    if (s == "url") return MediaKind::ImageUrl;
    if (s == "base64") return MediaKind::ImageBase64;
    throw Error(ErrorKind::InvalidArgument, "unknown image_kind '" + std::string(s) + "'");
}

const char* media_kind_name(MediaKind k) {
    switch (k) {
        case MediaKind::ImagePath: return "path";
        case MediaKind::ImageUrl: return "url";
        case MediaKind::ImageBase64: return "base64";
        case MediaKind::None: return nullptr;
    }
    return nullptr;
}

Sample sample_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "sample must be a JSON object");
    Sample s;
    s.sample_id = string_field(j, "sample_id", true);
    s.gold_label = string_field(j, "gold_label", true);
    const std::string image = string_field(j, "image", false);
    const std::string kind = string_field(j, "image_kind", false);
    const bool has_image = j.contains("image") && !j["image"].is_null();
    if (has_image) {
        if (kind.empty()) throw Error(ErrorKind::InvalidArgument, "image given without image_kind");
        s.media.push_back({media_kind_from(kind), image});
    }
    if (auto it = j.find("extra"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw Error(ErrorKind::InvalidArgument, "extra must be an object");
        for (auto& [k, v] : it->items()) {
            if (!v.is_string()) throw Error(ErrorKind::InvalidArgument, "extra values must be strings");
            s.extra.emplace(k, v.get<std::string>());
        }
    }
    return s;
}

}  // namespace

Task task_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::InvalidTask, "task definition must be a JSON object");
    Task t;
    try {
        t.task_id = string_field(j, "task_id", true);
        t.name = string_field(j, "name", false);
        t.category = string_field(j, "category", false);
        t.initial_prompt = string_field(j, "initial_prompt", true);
        t.description = string_field(j, "description", false);
        t.label_set = j.at("label_set").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidTask, e.what());
    } catch (const Error& e) {
        throw Error(ErrorKind::InvalidTask, e.what());
    }
    return t;
}

json task_to_json(const Task& t) {
    ordered_json j;
    j["task_id"] = t.task_id;
    j["name"] = t.name;
    j["category"] = t.category;
    j["initial_prompt"] = t.initial_prompt;
    j["label_set"] = t.label_set;
    j["description"] = t.description;
    return json(j);
}

Task load_task(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidTask, path.string() + ": " + e.what());
    }
    Task t = task_from_json(j);
    if (auto v = validate_task(t); !v.empty()) throw Error(ErrorKind::InvalidTask, join(v, "; "), v);
    return t;
}

std::vector<std::string> validate_task(const Task& t) {
    std::vector<std::string> out;
    if (t.task_id.empty()) out.push_back("task_id: must be non-empty");
    if (trim(t.initial_prompt).empty()) out.push_back("initial_prompt: must be non-empty");
    if (t.label_set.size() < 2) out.push_back("label_set: needs at least 2 entries");
    std::set<std::string> seen;
    for (const auto& label : t.label_set) {
        auto n = normalize_label(label);
        if (n.empty()) {
            out.push_back("label_set: entry '" + label + "' is empty after normalization");
        } else if (!seen.insert(n).second) {
            out.push_back("label_set: entry '" + label + "' duplicates another label after normalization");
        }
    }
    return out;
}

std::optional<std::string> canonical_label(const Task& t, std::string_view raw) {
    const auto n = normalize_label(raw);
    for (const auto& label : t.label_set) {
        if (normalize_label(label) == n) return label;
    }
    return std::nullopt;
}

Dataset parse_dataset(std::string_view jsonl, const Task& task) {
    Dataset d;
    d.task_id = task.task_id;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        auto end = jsonl.find('\n', pos);
        if (end == std::string_view::npos) end = jsonl.size();
        std::string_view line = jsonl.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (trim(line).empty()) continue;

        Sample s;
        try {
            s = sample_from_json(json::parse(line));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": " + e.what(),
                        {std::to_string(line_no)});
        }
        if (!canonical_label(task, s.gold_label)) {
            throw Error(ErrorKind::UnknownLabel, "sample '" + s.sample_id + "' has label '" + s.gold_label + "'",
                        {s.sample_id, s.gold_label});
        }
        if (!ids.insert(s.sample_id).second) {
            throw Error(ErrorKind::DuplicateSampleId, "sample_id '" + s.sample_id + "' repeats", {s.sample_id});
        }
        d.samples.push_back(std::move(s));
    }
    return d;
}

Dataset load_dataset(const std::filesystem::path& path, const Task& task) {
    return parse_dataset(read_file(path), task);
}

std::string serialize_dataset(const Dataset& d) {
    std::string out;
    for (const auto& s : d.samples) {
        if (s.media.size() > 1) {
            throw Error(ErrorKind::InvalidArgument, "sample '" + s.sample_id + "' has more than one media ref");
        }
        ordered_json j;
        j["sample_id"] = s.sample_id;
        if (s.media.empty() || s.media[0].kind == MediaKind::None) {
            j["image"] = nullptr;
            j["image_kind"] = nullptr;
        } else {
            j["image"] = s.media[0].payload;
            j["image_kind"] = media_kind_name(s.media[0].kind);
        }
        j["gold_label"] = s.gold_label;
        j["extra"] = ordered_json::object();
        for (const auto& [k, v] : s.extra) j["extra"][k] = v;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_dataset(d));
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, SplitFractions fractions, std::uint64_t seed) {
    if (d.empty()) throw Error(ErrorKind::EmptyDataset, "cannot split an empty dataset");
    if (!(fractions.train > 0.0) || !(fractions.validation > 0.0) ||
        fractions.train + fractions.validation > 1.0 + 1e-12) {
        throw Error(ErrorKind::BadFractions, "fractions must be positive and sum to at most 1");
    }
    const std::size_t n = d.size();
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    const auto n_val = static_cast<std::size_t>(std::floor(fractions.validation * static_cast<double>(n) + 1e-9));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::vector<bool> to_val(n, false);
    for (std::size_t i = 0; i < n_val; ++i) to_val[order[i]] = true;

    Dataset train{d.task_id, {}, SplitTag::Train};
    Dataset val{d.task_id, {}, SplitTag::Validation};
    for (std::size_t i = 0; i < n; ++i) (to_val[i] ? val : train).samples.push_back(d.samples[i]);
    return {std::move(train), std::move(val)};
}

}  // namespace promptsmith
