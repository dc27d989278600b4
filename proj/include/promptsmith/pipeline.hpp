#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptsmith/eso.hpp"
#include "promptsmith/model_backend.hpp"
#include "promptsmith/rws.hpp"
#include "promptsmith/sim_bench.hpp"
#include "promptsmith/task_data.hpp"

namespace promptsmith {

// Where simulated models get their answers: a rule script, or a synthetic
// reward landscape over strategy combos.
struct SimulationConfig {
    std::optional<std::filesystem::path> script;
    std::optional<LandscapeParams> landscape;
    std::uint64_t landscape_seed = 1;
    double refine_bonus = 0.0;

    static SimulationConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

struct RunConfig {
    std::filesystem::path task_path;
    std::optional<std::filesystem::path> train_path;
    std::optional<std::filesystem::path> validation_path;
    std::optional<std::filesystem::path> unsplit_path;
    SplitFractions split;
    ModelRef inference = ModelRef::inference("inference");
    ModelRef optimizer = ModelRef::optimizer("optimizer");
    SearchConfig search;
    EsoConfig eso;
    std::filesystem::path memory_path = "memory.json";
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> strategies_dir;  // built-in pool when absent
    nlohmann::json similarity = {{"kind", "static"}, {"default", 0.0}};
    double min_similarity = 0.0;  // warm search needs rho above this
    std::optional<SimulationConfig> simulation;

    // Relative paths resolve against the config file's directory.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);
    // One message per problem; empty iff the referenced files exist and
    // the data source is unambiguous.
    std::vector<std::string> validate() const;
};

struct RunTotals {
    int evaluations = 0;
    std::uint64_t inference_calls = 0;
    std::uint64_t optimizer_calls = 0;
    std::int64_t wall_time_ms = 0;
};

struct RunReport {
    std::string task_id;
    std::string status = "completed";  // or "failed"
    std::string error;
    std::string mode;  // "cold" or "warm"
    std::optional<EvalResult> baseline;
    std::optional<SearchTrace> rws;
    std::optional<OptimizationRun> eso;
    std::string final_prompt;
    double final_accuracy = 0.0;
    RunTotals totals;
    nlohmann::json config;
};

nlohmann::json run_report_to_json(const RunReport& r, bool include_wall_time = true);

// Raised by cmd_optimize after the partial report has been written.
class RunFailed : public Error {
public:
    RunFailed(const Error& cause, std::filesystem::path report_path);
    const std::filesystem::path& report_path() const { return report_path_; }

private:
    std::filesystem::path report_path_;
};

// RWS (cold or warm, by memory state) then ESO. Writes run_report.json,
// search_trace.jsonl, eso_run.json and trace_log.jsonl to cfg.out_dir and
// folds the run's observations into the memory file.
RunReport cmd_optimize(const RunConfig& cfg);

struct EvaluateOptions {
    std::filesystem::path task_path;
    std::filesystem::path data_path;
    std::filesystem::path prompt_path;
    std::string endpoint = "sim";
    std::string model_id = "inference";
    std::optional<std::filesystem::path> sim_script;
    bool json = false;
};

// Prints accuracy and the largest error buckets, or the EvalResult JSON.
EvalResult cmd_evaluate(const EvaluateOptions& opts, std::ostream& out);

struct BenchOptions {
    std::filesystem::path config_path;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    bool plot = false;
    std::filesystem::path out_dir = ".";
};

// Writes bench.csv and bench.json (and bench.svg with plot) to out_dir and
// prints the summary table.
BenchReport cmd_bench(const BenchOptions& opts, std::ostream& out);

struct MemoryOptions {
    std::string action;  // show, prune, export
    std::filesystem::path file = "memory.json";
    std::string task_id;   // prune
    std::string model_id;  // prune; empty matches every model
    int top = 0;           // show; 0 lists every action
};

// Returns the process exit code.
int cmd_memory(const MemoryOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace promptsmith
