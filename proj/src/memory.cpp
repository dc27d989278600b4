#include "promptsmith/memory.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <regex>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "promptsmith/error.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;

const MemoryEntry* MemoryModule::find(const MemoryKey& key) const {
    auto it = entries.find(key.id());
    return it == entries.end() ? nullptr : &it->second;
}

bool MemoryModule::erase(const std::string& task_id, const std::string& model_id) {
    if (entries.erase({task_id, model_id}) == 0) return false;
    ++version;
    return true;
}

bool structurally_equal(const MemoryModule& a, const MemoryModule& b) {
    if (a.version != b.version || a.entries.size() != b.entries.size()) return false;
    for (auto ia = a.entries.begin(), ib = b.entries.begin(); ia != a.entries.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (ia->second.key.task_descriptor != ib->second.key.task_descriptor) return false;
        if (ia->second.actions != ib->second.actions) return false;
    }
    return true;
}

void update_memory(MemoryModule& m, const MemoryKey& key, const StrategyCombo& action, double reward) {
    if (!(reward >= 0.0 && reward <= 1.0)) {
        throw Error(ErrorKind::RewardOutOfRange, "reward " + std::to_string(reward) + " is outside [0, 1]");
    }
    auto [it, inserted] = m.entries.try_emplace(key.id(), MemoryEntry{key, {}});
    auto& entry = it->second;
    if (!key.task_descriptor.empty()) entry.key.task_descriptor = key.task_descriptor;

    auto a = std::find_if(entry.actions.begin(), entry.actions.end(),
                          [&](const ActionStats& s) { return s.action == action; });
    if (a == entry.actions.end()) {
        entry.actions.push_back({action, reward, 1});
    } else if (a->count == 0) {
        // a transferred prior is replaced by the first observation
        a->mean_reward = reward;
        a->count = 1;
    } else {
        a->mean_reward = (a->mean_reward * a->count + reward) / (a->count + 1);
        ++a->count;
    }
    ++m.version;
}

// ---------------------------------------------------------------- similarity

StaticSimilarity::StaticSimilarity(std::vector<Row> rows, double default_rho)
    : rows_(std::move(rows)), default_rho_(std::clamp(default_rho, 0.0, 1.0)) {}

StaticSimilarity StaticSimilarity::from_json(const json& j) {
    std::vector<Row> rows;
    try {
        for (const auto& r : j.value("pairs", json::array())) {
            rows.push_back({r.at("task_a").get<std::string>(), r.value("model_a", std::string("*")),
                            r.at("task_b").get<std::string>(), r.value("model_b", std::string("*")),
                            r.at("rho").get<double>()});
        }
        return StaticSimilarity(std::move(rows), j.value("default", 0.0));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("similarity table: ") + e.what());
    }
}

double StaticSimilarity::similarity(const MemoryKey& stored, const MemoryKey& target) {
    if (stored.id() == target.id()) return 1.0;
    auto model_match = [](const std::string& pattern, const std::string& id) { return pattern == "*" || pattern == id; };
    for (const auto& r : rows_) {
        const bool forward = r.task_a == stored.task_id && model_match(r.model_a, stored.model_id) &&
                             r.task_b == target.task_id && model_match(r.model_b, target.model_id);
        const bool backward = r.task_b == stored.task_id && model_match(r.model_b, stored.model_id) &&
                              r.task_a == target.task_id && model_match(r.model_a, target.model_id);
        if (forward || backward) return std::clamp(r.rho, 0.0, 1.0);
    }
    return default_rho_;
}

JudgeSimilarity::JudgeSimilarity(ModelHandle optimizer, std::string prompt_template)
    : optimizer_(std::move(optimizer)),
      template_(prompt_template.empty() ? default_template() : std::move(prompt_template)) {}

std::string JudgeSimilarity::default_template() {
    return "You are comparing two prompt-optimization settings. Each setting is a classification task solved by a "
           "specific small multimodal model.\n"
           "Setting A: task \"{stored_task}\" on model \"{stored_model}\". Task summary: {stored_descriptor}\n"
           "Setting B: task \"{target_task}\" on model \"{target_model}\". Task summary: {target_descriptor}\n"
           "How likely is it that prompt strategies that work well for setting A also work well for setting B? "
           "Answer with a single number between 0 and 1, where 1 means the settings are practically identical.";
}

double JudgeSimilarity::similarity(const MemoryKey& stored, const MemoryKey& target) {
    const auto prompt = fill_template(template_, {{"stored_task", stored.task_id},
                                                  {"stored_model", stored.model_id},
                                                  {"stored_descriptor", stored.task_descriptor},
                                                  {"target_task", target.task_id},
                                                  {"target_model", target.model_id},
                                                  {"target_descriptor", target.task_descriptor}});
    std::string answer;
    try {
        answer = optimizer_.ask(prompt).text;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::SimilarityProviderFailure, e.what());
    }
    static const std::regex number(R"([-+]?(\d+(\.\d*)?|\.\d+))");
    std::smatch m;
    if (!std::regex_search(answer, m, number)) {
        throw Error(ErrorKind::SimilarityProviderFailure, "judge answer has no number: " + truncate_utf8(answer, 200));
    }
    return std::clamp(std::stod(m.str()), 0.0, 1.0);
}

std::optional<Reference> select_reference(const MemoryModule& m, const MemoryKey& target,
                                          SimilarityProvider& similarity) {
    std::optional<Reference> best;
    try {
        // entries iterate in (task_id, model_id) order, so strict > keeps the smallest on ties
        for (const auto& [id, entry] : m.entries) {
            const double rho = std::clamp(similarity.similarity(entry.key, target), 0.0, 1.0);
            if (!best || rho > best->rho) best = Reference{entry.key, rho};
        }
    } catch (const std::exception& e) {
        std::cerr << "warning: similarity provider failed, using cold start: " << e.what() << '\n';
        return std::nullopt;
    }
    return best;
}

// ---------------------------------------------------------------- distribution ops

double global_mean(const std::vector<ActionStats>& stats) {
    if (stats.empty()) throw Error(ErrorKind::EmptyStats, "no actions");
    double sum = 0.0;
    for (const auto& s : stats) sum += s.mean_reward;
    return sum / static_cast<double>(stats.size());
}

std::vector<ActionStats> smooth_distribution(const std::vector<ActionStats>& stats, double rho) {
    if (stats.empty()) throw Error(ErrorKind::EmptyStats, "cannot smooth an empty distribution");
    if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must be in [0, 1]");
    const double g = global_mean(stats);
    std::vector<ActionStats> out = stats;
    for (auto& s : out) {
        s.mean_reward = rho * s.mean_reward + (1.0 - rho) * g;
        s.count = 0;
    }
    return out;
}

std::vector<ActionStats> ranked(const std::vector<ActionStats>& stats) {
    std::vector<ActionStats> out = stats;
    std::sort(out.begin(), out.end(), [](const ActionStats& a, const ActionStats& b) {
        if (a.mean_reward != b.mean_reward) return a.mean_reward > b.mean_reward;
        if (a.count != b.count) return a.count > b.count;
        return canonical_less(a.action, b.action);
    });
    return out;
}

std::vector<StrategyCombo> top_k(const std::vector<ActionStats>& stats, int k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    const auto order = ranked(stats);
    std::vector<StrategyCombo> out;
    for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(k); ++i) out.push_back(order[i].action);
    return out;
}

// ---------------------------------------------------------------- persistence

json memory_to_json(const MemoryModule& m) {
    json entries = json::array();
    for (const auto& [id, e] : m.entries) {
        json actions = json::array();
        for (const auto& a : e.actions) {
            actions.push_back({{"combo", combo_to_json(a.action)}, {"mean_reward", a.mean_reward}, {"count", a.count}});
        }
        entries.push_back({{"task_id", e.key.task_id},
                           {"model_id", e.key.model_id},
                           {"task_descriptor", e.key.task_descriptor},
                           {"actions", std::move(actions)}});
    }
    return json{{"schema", kMemorySchema}, {"version", m.version}, {"entries", std::move(entries)}};
}

MemoryModule memory_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::CorruptFile, "memory file is not a JSON object");
    const int schema = j.value("schema", kMemorySchema);
    if (schema != kMemorySchema) {
        throw Error(ErrorKind::SchemaVersionMismatch,
                    "memory schema " + std::to_string(schema) + " is not supported (expected " +
                        std::to_string(kMemorySchema) + ")");
    }
    MemoryModule m;
    try {
        m.version = j.at("version").get<std::uint64_t>();
        for (const auto& e : j.at("entries")) {
            MemoryEntry entry;
            entry.key = {e.at("task_id").get<std::string>(), e.at("model_id").get<std::string>(),
                         e.value("task_descriptor", std::string())};
            for (const auto& a : e.at("actions")) {
                ActionStats s{combo_from_json(a.at("combo")), a.at("mean_reward").get<double>(),
                              a.at("count").get<int>()};
                if (!(s.mean_reward >= 0.0 && s.mean_reward <= 1.0) || s.count < 0) {
                    throw Error(ErrorKind::CorruptFile, "action stats out of range");
                }
                entry.actions.push_back(std::move(s));
            }
            m.entries.emplace(entry.key.id(), std::move(entry));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptFile, e.what());
    }
    m.base_version = m.version;
    return m;
}

MemoryModule load_memory(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::CorruptFile, path.string() + ": " + e.what());
    }
    return memory_from_json(j);
}

MemoryModule load_memory_or_empty(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    return load_memory(path);
}

namespace {

class FileLock {
public:
    explicit FileLock(const std::filesystem::path& target) {
        auto lock_path = target;
        lock_path += ".lock";
        if (lock_path.has_parent_path()) std::filesystem::create_directories(lock_path.parent_path());
        fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) throw Error(ErrorKind::Io, "cannot open lock file " + lock_path.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw Error(ErrorKind::Io, "cannot lock " + lock_path.string());
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace

void save_memory(MemoryModule& m, const std::filesystem::path& path) {
    FileLock lock(path);
    const std::uint64_t on_disk = std::filesystem::exists(path) ? load_memory(path).version : 0;
    if (on_disk != m.base_version) {
        throw Error(ErrorKind::VersionConflict, "memory file is at version " + std::to_string(on_disk) +
                                                    ", this copy was read at " + std::to_string(m.base_version));
    }
    write_file_atomic(path, memory_to_json(m).dump(2) + "\n");
    m.base_version = m.version;
}

MemoryModule update_memory_file(const std::filesystem::path& path, const std::function<void(MemoryModule&)>& mutate,
                                int max_attempts) {
    for (int attempt = 1;; ++attempt) {
        MemoryModule m = load_memory_or_empty(path);
        mutate(m);
        try {
            save_memory(m, path);
            return m;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::VersionConflict || attempt >= max_attempts) throw;
        }
    }
}

}  // namespace promptsmith
