#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptsmith/model_backend.hpp"
#include "promptsmith/strategy_pool.hpp"

namespace promptsmith {

inline constexpr int kMemorySchema = 1;
inline constexpr double kPriorMean = 0.5;

struct MemoryKey {
    std::string task_id;
    std::string model_id;
    std::string task_descriptor;  // free text, used by similarity judges

    std::pair<std::string, std::string> id() const { return {task_id, model_id}; }
};

struct ActionStats {
    StrategyCombo action;
    double mean_reward = kPriorMean;
    int count = 0;

    bool operator==(const ActionStats&) const = default;
};

struct MemoryEntry {
    MemoryKey key;
    std::vector<ActionStats> actions;  // distinct combos
};

// Per-(task, model) action-reward distributions. `version` counts
// mutations; `base_version` is the file version this copy was loaded from
// and is what save_memory compares against.
struct MemoryModule {
    std::map<std::pair<std::string, std::string>, MemoryEntry> entries;
    std::uint64_t version = 0;
    std::uint64_t base_version = 0;

    const MemoryEntry* find(const MemoryKey& key) const;
    bool empty() const { return entries.empty(); }
    bool erase(const std::string& task_id, const std::string& model_id);
};

bool structurally_equal(const MemoryModule& a, const MemoryModule& b);

// Incremental mean. Creates the entry and action if absent. Throws
// RewardOutOfRange.
void update_memory(MemoryModule& m, const MemoryKey& key, const StrategyCombo& action, double reward);

class SimilarityProvider {
public:
    virtual ~SimilarityProvider() = default;
    // Task-model similarity in [0, 1].
    virtual double similarity(const MemoryKey& stored, const MemoryKey& target) = 0;
};

// Fixed table. Identical (task, model) pairs score 1; a "*" model id in a
// table row matches any model. Unlisted pairs get `default_rho`.
class StaticSimilarity : public SimilarityProvider {
public:
    struct Row {
        std::string task_a, model_a, task_b, model_b;
        double rho = 0.0;
    };

    explicit StaticSimilarity(std::vector<Row> rows = {}, double default_rho = 0.0);
    static StaticSimilarity from_json(const nlohmann::json& j);

    double similarity(const MemoryKey& stored, const MemoryKey& target) override;

private:
    std::vector<Row> rows_;
    double default_rho_;
};

// Asks the optimizer model for a similarity score; the first number in its
// answer is clamped to [0, 1]. Throws SimilarityProviderFailure when the
// answer has no number or the call fails.
class JudgeSimilarity : public SimilarityProvider {
public:
    explicit JudgeSimilarity(ModelHandle optimizer, std::string prompt_template = "");

    double similarity(const MemoryKey& stored, const MemoryKey& target) override;

    static std::string default_template();

private:
    ModelHandle optimizer_;
    std::string template_;
};

struct Reference {
    MemoryKey key;
    double rho = 0.0;
};

// Stored key with the highest similarity to target; ties go to the
// lexicographically smallest (task_id, model_id). nullopt when memory is
// empty or the provider fails (logged to stderr).
std::optional<Reference> select_reference(const MemoryModule& m, const MemoryKey& target,
                                          SimilarityProvider& similarity);

// mean' = rho * mean + (1 - rho) * global mean; counts reset to 0.
std::vector<ActionStats> smooth_distribution(const std::vector<ActionStats>& stats, double rho);

double global_mean(const std::vector<ActionStats>& stats);

// Highest mean first; ties by higher count, then canonical combo order.
std::vector<ActionStats> ranked(const std::vector<ActionStats>& stats);
std::vector<StrategyCombo> top_k(const std::vector<ActionStats>& stats, int k);

nlohmann::json memory_to_json(const MemoryModule& m);
MemoryModule memory_from_json(const nlohmann::json& j);  // SchemaVersionMismatch, CorruptFile

MemoryModule load_memory(const std::filesystem::path& path);
// Empty module when the file does not exist.
MemoryModule load_memory_or_empty(const std::filesystem::path& path);

// Compare-on-write: fails with VersionConflict when the file's version is no
// longer m.base_version. On success m.base_version becomes m.version.
void save_memory(MemoryModule& m, const std::filesystem::path& path);

// Read-mutate-save loop that retries on a fresh read after VersionConflict.
MemoryModule update_memory_file(const std::filesystem::path& path, const std::function<void(MemoryModule&)>& mutate,
                                int max_attempts = 8);

}  // namespace promptsmith
