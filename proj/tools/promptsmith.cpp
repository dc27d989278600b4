#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "promptsmith/error.hpp"
#include "promptsmith/pipeline.hpp"
#include "promptsmith/util.hpp"

using namespace promptsmith;

int main(int argc, char** argv) {
    CLI::App app{"promptsmith: strategy search and self-reflective prompt optimization"};
    app.require_subcommand(1);

    auto* optimize = app.add_subcommand("optimize", "search strategy combos, then refine the prompt");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> memory_path, out_dir;
    optimize->add_option("--config", config_path, "run config JSON")->required();
    optimize->add_option("--seed", seed, "override the config seed");
    optimize->add_option("--memory", memory_path, "memory file");
    optimize->add_option("--out", out_dir, "output directory");

    auto* evaluate = app.add_subcommand("evaluate", "score one prompt on a dataset");
    EvaluateOptions eval_opts;
    std::string task_path, data_path, prompt_path, sim_script;
    evaluate->add_option("--task", task_path, "task JSON")->required();
    evaluate->add_option("--data", data_path, "JSONL samples")->required();
    evaluate->add_option("--prompt", prompt_path, "prompt text file")->required();
    evaluate->add_option("--model-endpoint", eval_opts.endpoint, "chat-completions URL or 'sim'")->required();
    evaluate->add_option("--model-id", eval_opts.model_id, "model name sent to the endpoint");
    evaluate->add_option("--sim-script", sim_script, "rule script for the simulated endpoint");
    evaluate->add_flag("--json", eval_opts.json, "print the result as JSON only");

    auto* bench = app.add_subcommand("bench", "compare search methods on synthetic landscapes");
    BenchOptions bench_opts;
    std::string bench_config, bench_out = ".";
    std::optional<int> trials;
    std::optional<std::uint64_t> bench_seed;
    bench->add_option("--config", bench_config, "bench config JSON")->required();
    bench->add_option("--trials", trials, "override the trial count");
    bench->add_option("--seed", bench_seed, "override the bench seed");
    bench->add_flag("--plot", bench_opts.plot, "also write bench.svg");
    bench->add_option("--out", bench_out, "output directory");

    auto* memory = app.add_subcommand("memory", "inspect or edit the strategy memory file");
    MemoryOptions mem_opts;
    std::string mem_file = "memory.json";
    memory->add_option("action", mem_opts.action, "show, prune or export")
        ->required()
        ->check(CLI::IsMember({"show", "prune", "export"}));
    memory->add_option("--file", mem_file, "memory file");
    memory->add_option("--task", mem_opts.task_id, "task id to prune");
    memory->add_option("--model", mem_opts.model_id, "model id to prune (default: all models)");
    memory->add_option("--top", mem_opts.top, "actions listed per key by show (0: all)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*optimize) {
            auto cfg = RunConfig::load(config_path);
            if (seed) cfg.seed = *seed;
            if (memory_path) cfg.memory_path = *memory_path;
            if (out_dir) cfg.out_dir = *out_dir;
            try {
                const auto report = cmd_optimize(cfg);
                std::cout << "mode: " << report.mode << "\n"
                          << "baseline accuracy: " << format_fixed(report.baseline->accuracy, 4) << "\n"
                          << "search best: " << report.rws->best_combo.label() << " "
                          << format_fixed(report.rws->best_reward, 4) << "\n"
                          << "final accuracy: " << format_fixed(report.final_accuracy, 4) << " ("
                          << to_string(report.eso->stopped_reason) << ")\n"
                          << "evaluations: " << report.totals.evaluations << "\n"
                          << "report: " << (cfg.out_dir / "run_report.json").string() << "\n";
            } catch (const RunFailed& e) {
                std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n"
                          << "partial report: " << e.report_path().string() << "\n";
                return 1;
            }
        } else if (*evaluate) {
            eval_opts.task_path = task_path;
            eval_opts.data_path = data_path;
            eval_opts.prompt_path = prompt_path;
            if (!sim_script.empty()) eval_opts.sim_script = sim_script;
            cmd_evaluate(eval_opts, std::cout);
        } else if (*bench) {
            bench_opts.config_path = bench_config;
            bench_opts.trials = trials;
            bench_opts.seed = bench_seed;
            bench_opts.out_dir = bench_out;
            cmd_bench(bench_opts, std::cout);
        } else if (*memory) {
            mem_opts.file = mem_file;
            return cmd_memory(mem_opts, std::cout, std::cerr);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
        for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
