#include "promptsmith/pipeline.hpp"

#include <chrono>
#include <iostream>
#include <memory>

#include "promptsmith/error.hpp"
#include "promptsmith/http_backend.hpp"
#include "promptsmith/memory.hpp"
#include "promptsmith/rng.hpp"
#include "promptsmith/simulated_backend.hpp"
#include "promptsmith/util.hpp"

namespace promptsmith {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

json read_json_file(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Config, path.string() + ": " + e.what());
    }
}

std::unique_ptr<Backend> make_backend(const ModelRef& model, const std::optional<SimulationConfig>& sim,
                                      const std::optional<SimWorld>& world) {
    if (!model.is_simulated()) return std::make_unique<HttpBackend>();
    auto backend = std::make_unique<SimulatedBackend>();
    if (sim && sim->script) backend->script() = SimScript::load(*sim->script);
    if (world) world->install(*backend);
    return backend;
}

std::unique_ptr<SimilarityProvider> make_similarity(const json& j, const ModelHandle& optimizer,
                                                    const fs::path& base_dir) {
    const auto kind = j.value("kind", std::string("static"));
    if (kind == "static") return std::make_unique<StaticSimilarity>(StaticSimilarity::from_json(j));
    if (kind == "judge") {
        std::string tmpl;
        if (j.contains("template")) tmpl = read_file(resolve(base_dir, j.at("template").get<std::string>()));
        return std::make_unique<JudgeSimilarity>(optimizer, tmpl);
    }
    throw Error(ErrorKind::Config, "unknown similarity kind '" + kind + "'");
}

void print_error_buckets(const EvalResult& r, std::ostream& out, std::size_t limit) {
    const auto buckets = r.error_distribution.sorted();
    for (std::size_t i = 0; i < buckets.size() && i < limit; ++i) {
        out << "  " << buckets[i].first.gold << " -> " << prediction_name(buckets[i].first.predicted) << ": "
            << buckets[i].second << "\n";
    }
}

}  // namespace

SimulationConfig SimulationConfig::from_json(const json& j, const fs::path& base_dir) {
    SimulationConfig s;
    try {
        if (j.contains("script")) s.script = resolve(base_dir, j.at("script").get<std::string>());
        if (j.contains("landscape")) s.landscape = LandscapeParams::from_json(j.at("landscape"));
        s.landscape_seed = j.value("seed", s.landscape_seed);
        s.refine_bonus = j.value("refine_bonus", s.refine_bonus);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("simulation: ") + e.what());
    }
    return s;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
    RunConfig c;
    try {
        c.task_path = resolve(base_dir, j.at("task").get<std::string>());
        const auto& data = j.at("data");
        if (data.is_string()) {
            c.unsplit_path = resolve(base_dir, data.get<std::string>());
        } else {
            if (data.contains("train")) c.train_path = resolve(base_dir, data.at("train").get<std::string>());
            if (data.contains("validation")) {
                c.validation_path = resolve(base_dir, data.at("validation").get<std::string>());
            }
            if (data.contains("unsplit")) c.unsplit_path = resolve(base_dir, data.at("unsplit").get<std::string>());
            if (data.contains("split")) {
                c.split.train = data.at("split").value("train", c.split.train);
                c.split.validation = data.at("split").value("validation", c.split.validation);
            }
        }
        if (j.contains("inference")) c.inference = model_ref_from_json(j.at("inference"), ModelRole::Inference);
        if (j.contains("optimizer")) c.optimizer = model_ref_from_json(j.at("optimizer"), ModelRole::Optimizer);
        if (j.contains("search")) c.search = SearchConfig::from_json(j.at("search"));
        if (j.contains("eso")) c.eso = EsoConfig::from_json(j.at("eso"));
        if (j.contains("memory")) c.memory_path = resolve(base_dir, j.at("memory").get<std::string>());
        if (j.contains("out")) c.out_dir = resolve(base_dir, j.at("out").get<std::string>());
        c.seed = j.value("seed", c.seed);
        if (j.contains("strategies")) c.strategies_dir = resolve(base_dir, j.at("strategies").get<std::string>());
        if (j.contains("similarity")) {
            c.similarity = j.at("similarity");
            if (c.similarity.contains("template")) {
                c.similarity["template"] = resolve(base_dir, c.similarity["template"].get<std::string>()).string();
            }
        }
        c.min_similarity = j.value("min_similarity", c.min_similarity);
        if (j.contains("simulation")) c.simulation = SimulationConfig::from_json(j.at("simulation"), base_dir);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("run config: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorKind::Config, "config file not found: " + path.string());
    return from_json(read_json_file(path), path.parent_path());
}

std::vector<std::string> RunConfig::validate() const {
    std::vector<std::string> problems;
    auto need = [&](const fs::path& p, const char* what) {
        if (!fs::exists(p)) problems.push_back(std::string(what) + " not found: " + p.string());
    };
    need(task_path, "task file");
    if (unsplit_path) {
        if (train_path || validation_path) problems.push_back("data: give either unsplit or train/validation");
        need(*unsplit_path, "dataset");
    } else if (validation_path) {
        need(*validation_path, "validation dataset");
        if (train_path) need(*train_path, "train dataset");
    } else {
        problems.push_back("data: no validation or unsplit dataset given");
    }
    if (strategies_dir && !fs::is_directory(*strategies_dir)) {
        problems.push_back("strategies directory not found: " + strategies_dir->string());
    }
    if (simulation && simulation->script) need(*simulation->script, "simulation script");
    if ((inference.is_simulated() || optimizer.is_simulated()) &&
        (!simulation || (!simulation->script && !simulation->landscape))) {
        problems.push_back("simulated models need a simulation script or landscape");
    }
    return problems;
}

RunFailed::RunFailed(const Error& cause, fs::path report_path)
    : Error(cause.kind(), cause.what(), cause.details()), report_path_(std::move(report_path)) {}

json run_report_to_json(const RunReport& r, bool include_wall_time) {
    json out{{"task_id", r.task_id}, {"status", r.status}, {"mode", r.mode}, {"config", r.config}};
    if (!r.error.empty()) out["error"] = r.error;
    if (r.baseline) {
        out["baseline"] = {{"accuracy", r.baseline->accuracy},
                           {"correct", r.baseline->correct()},
                           {"total", r.baseline->records.size()},
                           {"error_distribution", error_distribution_to_json(r.baseline->error_distribution)}};
    } else {
        out["baseline"] = nullptr;
    }
    if (r.rws) {
        json rws = search_summary_json(*r.rws);
        rws["best_prompt"] = r.rws->best_prompt.text;
        out["rws"] = std::move(rws);
    } else {
        out["rws"] = nullptr;
    }
    if (r.eso) {
        out["eso"] = {{"stopped_reason", to_string(r.eso->stopped_reason)},
                      {"iterations", r.eso->iterations.size()},
                      {"rewrite_calls", r.eso->rewrite_calls},
                      {"best_iteration", r.eso->best_index},
                      {"best_accuracy", r.eso->best_accuracy()}};
        if (!r.eso->error.empty()) out["eso"]["error"] = r.eso->error;
    } else {
        out["eso"] = nullptr;
    }
    out["final_prompt"] = r.final_prompt;
    out["final_accuracy"] = r.final_accuracy;
    json totals{{"evaluations", r.totals.evaluations},
                {"inference_calls", r.totals.inference_calls},
                {"optimizer_calls", r.totals.optimizer_calls}};
    if (include_wall_time) totals["wall_time_ms"] = r.totals.wall_time_ms;
    out["totals"] = std::move(totals);
    return out;
}

RunReport cmd_optimize(const RunConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    if (auto problems = cfg.validate(); !problems.empty()) {
        throw Error(ErrorKind::Config, "invalid run config: " + problems.front(), problems);
    }

    const Task task = load_task(cfg.task_path);
    Dataset validation;
    if (cfg.unsplit_path) {
        validation = split_dataset(load_dataset(*cfg.unsplit_path, task), cfg.split, derive_seed(cfg.seed, "split"))
                         .second;
    } else {
        validation = load_dataset(*cfg.validation_path, task);
    }

    const StrategyPool pool = cfg.strategies_dir                           ? load_pool_dir(*cfg.strategies_dir)
                              : cfg.simulation && cfg.simulation->landscape ? landscape_pool(cfg.simulation->landscape->pool_size)
                                                                            : builtin_pool();

    std::optional<SimWorld> world;
    if (cfg.simulation && cfg.simulation->landscape) {
        world.emplace(make_landscape(*cfg.simulation->landscape, cfg.simulation->landscape_seed), task.initial_prompt,
                      cfg.simulation->refine_bonus);
    }

    fs::create_directories(cfg.out_dir);
    const fs::path trace_path = cfg.out_dir / "trace_log.jsonl";
    fs::remove(trace_path);
    auto trace_log = std::make_shared<TraceLog>(trace_path);
    auto inference_backend = make_backend(cfg.inference, cfg.simulation, world);
    auto optimizer_backend = make_backend(cfg.optimizer, cfg.simulation, world);
    inference_backend->set_trace_log(trace_log);
    optimizer_backend->set_trace_log(trace_log);
    const ModelHandle inference{inference_backend.get(), cfg.inference, derive_seed(cfg.seed, "inference")};
    const ModelHandle optimizer{optimizer_backend.get(), cfg.optimizer, derive_seed(cfg.seed, "optimizer")};

    SearchConfig search = cfg.search;
    search.seed = derive_seed(cfg.seed, "search");

    RunReport report;
    report.task_id = task.task_id;
    report.config = {{"seed", cfg.seed},
                     {"search", search.to_json()},
                     {"eso", cfg.eso.to_json()},
                     {"inference", {{"model_id", cfg.inference.model_id}, {"endpoint", cfg.inference.endpoint}}},
                     {"optimizer", {{"model_id", cfg.optimizer.model_id}, {"endpoint", cfg.optimizer.endpoint}}},
                     {"strategies", pool.ids()},
                     {"validation_samples", validation.size()}};

    Evaluator evaluator(task, validation, inference);
    const MemoryKey key{task.task_id, cfg.inference.model_id,
                        task.description.empty() ? task.name : task.description};

    auto finish = [&] {
        report.totals.evaluations = evaluator.evaluations();
        report.totals.inference_calls = inference_backend->call_count();
        report.totals.optimizer_calls = optimizer_backend->call_count();
        report.totals.wall_time_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
        if (report.rws) write_file_atomic(cfg.out_dir / "search_trace.jsonl", search_trace_jsonl(*report.rws));
        if (report.eso) {
            write_file_atomic(cfg.out_dir / "eso_run.json", optimization_run_to_json(*report.eso).dump(2) + "\n");
        }
        write_file_atomic(cfg.out_dir / "run_report.json", run_report_to_json(report).dump(2) + "\n");
    };

    try {
        report.baseline = evaluator.evaluate(PromptCandidate::from_base(task.initial_prompt));

        MemoryModule memory = load_memory_or_empty(cfg.memory_path);
        auto similarity = make_similarity(cfg.similarity, optimizer, cfg.out_dir);
        const SearchContext ctx{task, evaluator, pool, &optimizer, key};
        const auto reference = memory.empty() ? std::nullopt : select_reference(memory, key, *similarity);
        if (reference && reference->rho > cfg.min_similarity) {
            report.mode = "warm";
            report.rws = warm_search(ctx, search, memory, *reference);
        } else {
            report.mode = "cold";
            report.rws = cold_start_search(ctx, search, memory);
        }

        const auto& steps = report.rws->steps;
        update_memory_file(cfg.memory_path, [&](MemoryModule& m) {
            for (const auto& s : steps) update_memory(m, key, s.combo, s.reward);
        });

        report.eso = run_eso(report.rws->best_prompt, evaluator, optimizer, cfg.eso);
        report.final_prompt = report.eso->best_prompt().text;
        report.final_accuracy = report.eso->best_accuracy();
        if (report.eso->stopped_reason == StopReason::Error) {
            throw Error(report.eso->error_kind, "refinement stopped: " + report.eso->error);
        }
    } catch (const Error& e) {
        report.status = "failed";
        report.error = std::string(to_string(e.kind())) + ": " + e.what();
        finish();
        throw RunFailed(e, cfg.out_dir / "run_report.json");
    }
    finish();
    return report;
}

EvalResult cmd_evaluate(const EvaluateOptions& opts, std::ostream& out) {
    for (const auto& [path, what] : {std::pair{opts.task_path, "task file"}, std::pair{opts.data_path, "dataset"},
                                     std::pair{opts.prompt_path, "prompt file"}}) {
        if (!fs::exists(path)) throw Error(ErrorKind::Config, std::string(what) + " not found: " + path.string());
    }
    const Task task = load_task(opts.task_path);
    const Dataset data = load_dataset(opts.data_path, task);
    const std::string prompt = read_file(opts.prompt_path);

    ModelRef model = ModelRef::inference(opts.model_id, opts.endpoint);
    std::unique_ptr<Backend> backend;
    if (model.is_simulated()) {
        if (!opts.sim_script) throw Error(ErrorKind::Config, "the simulated endpoint needs --sim-script");
        backend = std::make_unique<SimulatedBackend>(SimScript::load(*opts.sim_script));
    } else {
        backend = std::make_unique<HttpBackend>();
    }
    const ModelHandle handle{backend.get(), model, std::nullopt};
    const auto result = evaluate_prompt(PromptCandidate::from_base(prompt), task, data, handle);

    if (opts.json) {
        out << eval_result_to_json(result).dump(2) << "\n";
    } else {
        out << "accuracy: " << format_fixed(result.accuracy, 4) << " (" << result.correct() << "/"
            << result.records.size() << ")\n";
        if (!result.error_distribution.empty()) {
            out << "top error buckets:\n";
            print_error_buckets(result, out, 5);
        }
    }
    return result;
}

BenchReport cmd_bench(const BenchOptions& opts, std::ostream& out) {
    if (!fs::exists(opts.config_path)) {
        throw Error(ErrorKind::Config, "bench config not found: " + opts.config_path.string());
    }
    BenchConfig cfg = BenchConfig::from_json(read_json_file(opts.config_path));
    if (opts.trials) {
        if (*opts.trials < 1) throw Error(ErrorKind::Config, "--trials must be >= 1");
        cfg.trials = *opts.trials;
    }
    if (opts.seed) cfg.seed = *opts.seed;

    const auto report = run_comparison(cfg);
    fs::create_directories(opts.out_dir);
    write_file_atomic(opts.out_dir / "bench.csv", bench_csv(report));
    write_file_atomic(opts.out_dir / "bench.json", bench_report_to_json(report).dump(2) + "\n");
    if (opts.plot) write_file_atomic(opts.out_dir / "bench.svg", bench_svg(report));
    out << bench_table(report);
    return report;
}

int cmd_memory(const MemoryOptions& opts, std::ostream& out, std::ostream& err) {
    if (opts.action == "show") {
        const auto m = load_memory(opts.file);
        out << "memory " << opts.file.string() << " (version " << m.version << ", " << m.entries.size()
            << (m.entries.size() == 1 ? " key)\n" : " keys)\n");
        for (const auto& [id, entry] : m.entries) {
            out << entry.key.task_id << " / " << entry.key.model_id << ": " << entry.actions.size() << " actions\n";
            const auto ranked_actions = ranked(entry.actions);
            for (std::size_t i = 0; i < ranked_actions.size(); ++i) {
                if (opts.top > 0 && i >= static_cast<std::size_t>(opts.top)) break;
                const auto& a = ranked_actions[i];
                out << "  " << format_fixed(a.mean_reward, 4) << "  n=" << a.count << "  " << a.action.label() << "\n";
            }
        }
        return 0;
    }
    if (opts.action == "export") {
        out << memory_to_json(load_memory(opts.file)).dump(2) << "\n";
        return 0;
    }
    if (opts.action == "prune") {
        if (opts.task_id.empty()) {
            err << "memory prune needs --task\n";
            return 2;
        }
        if (!fs::exists(opts.file)) {
            err << "warning: " << opts.file.string() << " does not exist; nothing to prune\n";
            return 0;
        }
        int removed = 0;
        update_memory_file(opts.file, [&](MemoryModule& m) {
            removed = 0;
            std::vector<std::pair<std::string, std::string>> doomed;
            for (const auto& [id, entry] : m.entries) {
                if (id.first == opts.task_id && (opts.model_id.empty() || id.second == opts.model_id)) {
                    doomed.push_back(id);
                }
            }
            for (const auto& id : doomed) removed += m.erase(id.first, id.second) ? 1 : 0;
        });
        if (removed == 0) {
            err << "warning: no memory entry for task '" << opts.task_id << "'"
                << (opts.model_id.empty() ? "" : " and model '" + opts.model_id + "'") << "\n";
        } else {
            out << "pruned " << removed << (removed == 1 ? " entry\n" : " entries\n");
        }
        return 0;
    }
    err << "unknown memory action '" << opts.action << "' (expected show, prune or export)\n";
    return 2;
}

}  // namespace promptsmith
