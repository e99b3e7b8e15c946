// Command-line front end: run/resume optimizations from a JSON config,
// inspect frontier checkpoints, validate configs and replay recorded
// proposer logs. Exit codes: 0 success, 2 invalid config, 3 evaluator
// resolution failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <textevo/http_backend.hpp>
#include <textevo/textevo.hpp>

namespace fs = std::filesystem;
using namespace textevo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitEvaluator = 3;

struct CliError {
    int code;
    std::string message;
};

json load_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError{kExitConfig, "cannot read " + path.string()};
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw CliError{kExitConfig, path.string() + " is not valid JSON"};
    return j;
}

struct RunSetup {
    EngineConfig engine;
    std::optional<std::vector<Example>> dataset;
    std::optional<std::vector<Example>> valset;
    std::unique_ptr<Evaluator> evaluator;
    std::unique_ptr<ProposerBackend> proposer;
    fs::path cache_dir;
};

std::vector<Example> parse_examples(const json& arr, Split split) {
    std::vector<Example> out;
    for (const auto& je : arr) {
        Example e;
        if (je.contains("id")) {
            e = Example::from_json(je);
        } else {
            e.id = out.size();
            e.payload = je;
        }
        e.split = split;
        out.push_back(std::move(e));
    }
    return out;
}

std::unique_ptr<Evaluator> build_evaluator(const json& spec) {
    const std::string type = spec.at("type").get<std::string>();
    if (type == "builtin") {
        const std::string name = spec.at("name").get<std::string>();
        if (name == "circle-packing") {
            const auto n = spec.value("n", 26u);
            const auto penalty = spec.value("penalty", 10.0);
            return std::make_unique<domains::PackingEvaluator>(n, penalty);
        }
        if (name == "string-task") {
            if (spec.contains("target")) {
                domains::StringTask task;
                task.target = spec.at("target").get<std::string>();
                task.scorer = domains::string_scorer_from_string(
                    spec.value("scorer", std::string("prefix_match_len")));
                if (spec.contains("char")) task.count_char = spec.at("char").get<std::string>().at(0);
                return std::make_unique<domains::StringTaskEvaluator>(task);
            }
            return std::make_unique<domains::StringTaskEvaluator>();
        }
        throw CliError{kExitEvaluator, "unknown builtin evaluator '" + name + "'"};
    }
    if (type == "subprocess") {
        const std::string program = spec.at("program").get<std::string>();
        std::error_code ec;
        if (!fs::exists(program, ec))
            throw CliError{kExitEvaluator, "evaluator program not found: " + program};
        std::vector<std::string> argv{program};
        if (spec.contains("args"))
            for (const auto& a : spec.at("args")) argv.push_back(a.get<std::string>());
        return std::make_unique<SubprocessEvaluator>(std::move(argv),
                                                     spec.at("identity").get<std::string>(),
                                                     spec.at("version").get<std::string>());
    }
    throw CliError{kExitConfig, "unknown evaluator type '" + type + "'"};
}

std::unique_ptr<ProposerBackend> build_proposer(const json& spec) {
    const std::string type = spec.at("type").get<std::string>();
    std::unique_ptr<ProposerBackend> backend;
    if (type == "scripted") {
        const std::string strategy = spec.value("strategy", std::string("prefix-fixer"));
        if (strategy == "prefix-fixer") {
            backend = std::make_unique<ScriptedBackend>(scripted::prefix_fixer());
        } else if (strategy.rfind("append:", 0) == 0) {
            backend = std::make_unique<ScriptedBackend>(scripted::append_literal(strategy.substr(7)));
        } else {
            throw CliError{kExitConfig, "unknown scripted strategy '" + strategy + "'"};
        }
    } else if (type == "http") {
        HttpChatConfig cfg;
        cfg.endpoint = spec.at("endpoint").get<std::string>();
        cfg.model = spec.at("model").get<std::string>();
        cfg.api_key_env = spec.value("api_key_env", cfg.api_key_env);
        cfg.timeout_seconds = spec.value("timeout_s", cfg.timeout_seconds);
        cfg.multimodal = spec.value("multimodal", false);
        cfg.verbose = spec.value("verbose", false);
        backend = std::make_unique<HttpChatBackend>(cfg);
    } else if (type == "replay") {
        backend = std::make_unique<ReplayBackend>(spec.at("log").get<std::string>());
    } else {
        throw CliError{kExitConfig, "unknown proposer type '" + type + "'"};
    }
    if (spec.contains("record_log"))
        backend = std::make_unique<RecordingBackend>(std::move(backend),
                                                     spec.at("record_log").get<std::string>());
    return backend;
}

RunSetup build_setup(const json& cfg) {
    RunSetup setup;

    if (cfg.contains("seed_candidate") && !cfg.at("seed_candidate").is_null())
        setup.engine.seed_text = cfg.at("seed_candidate").get<std::string>();
    if (cfg.contains("objective") && !cfg.at("objective").is_null())
        setup.engine.objective_text = cfg.at("objective").get<std::string>();
    if (cfg.contains("background") && !cfg.at("background").is_null())
        setup.engine.background_text = cfg.at("background").get<std::string>();

    if (cfg.contains("engine")) {
        const json& e = cfg.at("engine");
        auto get = [&](const char* key, auto& field) {
            if (e.contains(key)) field = e.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("minibatch_size", setup.engine.minibatch_size);
        get("max_evaluator_calls", setup.engine.max_evaluator_calls);
        get("rng_seed", setup.engine.rng_seed);
        get("acceptance", setup.engine.acceptance);
        get("checkpoint_every", setup.engine.checkpoint_every);
        get("max_iterations", setup.engine.max_iterations);
        get("floor_score", setup.engine.floor_score);
        get("proposer_retries", setup.engine.proposer_retries);
        get("bootstrap_retries", setup.engine.bootstrap_retries);
        get("parallelism", setup.engine.parallelism);
        get("capture_stdio", setup.engine.capture_stdio);
        get("eval_timeout_ms", setup.engine.eval_timeout_ms);
        get("si_cap_bytes", setup.engine.si_cap_bytes);
        get("frontier_digest_texts", setup.engine.frontier_digest_texts);
        get("frontier_digest_text_bytes", setup.engine.frontier_digest_text_bytes);
    }

    if (cfg.contains("dataset") && !cfg.at("dataset").is_null()) {
        const json& d = cfg.at("dataset");
        if (d.is_object() && d.contains("builtin")) {
            const std::string name = d.at("builtin").get<std::string>();
            if (name != "string-suite")
                throw CliError{kExitConfig, "unknown builtin dataset '" + name + "'"};
            const auto k = d.value("k", 3u);
            const auto val = d.value("val", 0u);
            const auto seed = d.value("seed", std::uint64_t{0});
            if (val > 0) {
                auto [train, vals] = domains::make_generalization_suite(k, val, seed);
                setup.dataset = std::move(train);
                setup.valset = std::move(vals);
            } else {
                setup.dataset = domains::make_multitask_suite(k, seed);
            }
        } else if (d.is_array()) {
            setup.dataset = parse_examples(d, Split::Train);
        } else {
            throw CliError{kExitConfig, "dataset must be an array or a builtin spec"};
        }
    }
    if (cfg.contains("valset") && !cfg.at("valset").is_null()) {
        if (setup.valset) throw CliError{kExitConfig, "valset given twice (builtin and explicit)"};
        setup.valset = parse_examples(cfg.at("valset"), Split::Val);
    }

    if (!cfg.contains("evaluator")) throw CliError{kExitConfig, "config needs an evaluator"};
    setup.evaluator = build_evaluator(cfg.at("evaluator"));
    if (cfg.at("evaluator").contains("timeout_ms"))
        setup.engine.eval_timeout_ms = cfg.at("evaluator").at("timeout_ms").get<std::int64_t>();
    if (cfg.at("evaluator").contains("capture_stdio"))
        setup.engine.capture_stdio = cfg.at("evaluator").at("capture_stdio").get<bool>();
    if (!cfg.contains("proposer")) throw CliError{kExitConfig, "config needs a proposer"};
    setup.proposer = build_proposer(cfg.at("proposer"));
    if (cfg.contains("cache_dir")) setup.cache_dir = cfg.at("cache_dir").get<std::string>();
    return setup;
}

void write_outputs(const fs::path& out_dir, const OptimizationResult& result, const ParetoState& pareto,
                   const std::optional<fs::path>& plot_path) {
    fs::create_directories(out_dir);
    atomic_write_file(out_dir / "result.json", result.to_json().dump() + "\n");
    atomic_write_file(out_dir / "frontier.tsv", frontier_table(pareto));
    if (plot_path) {
        std::string csv = "iteration,best_aggregate\n";
        for (std::size_t i = 0; i < result.best_aggregate_series.size(); ++i)
            csv += std::to_string(i + 1) + "," + json(result.best_aggregate_series[i]).dump() + "\n";
        atomic_write_file(*plot_path, csv);
    }
}

void print_result(const OptimizationResult& result) {
    if (result.mode == Mode::MultiTask) {
        double sum = 0.0;
        for (const auto& [key, v] : result.final_scores) sum += v;
        const double mean_score =
            result.final_scores.empty() ? 0.0 : sum / static_cast<double>(result.final_scores.size());
        std::cout << "best mean score: " << json(mean_score).dump() << " over "
                  << result.best_per_example.size() << " tasks\n";
        return;
    }
    double sum = 0.0;
    const auto& scores = result.mode == Mode::Generalization && !result.val_scores.empty()
                             ? result.val_scores
                             : result.final_scores;
    for (const auto& [key, v] : scores) sum += v;
    std::cout << "best score: "
              << json(scores.empty() ? 0.0 : sum / static_cast<double>(scores.size())).dump() << "\n";
    if (result.best) std::cout << "best candidate id: " << result.best->id << "\n";
}

int cmd_run(const fs::path& config_path, const std::optional<std::uint64_t>& budget_override,
            const std::optional<std::uint64_t>& rng_override,
            const std::optional<std::uint64_t>& max_iter_override, const std::optional<fs::path>& resume_from,
            const fs::path& out_dir, const std::optional<fs::path>& plot_path,
            std::unique_ptr<ProposerBackend> forced_proposer = nullptr) {
    const json cfg = load_json_file(config_path);
    RunSetup setup;
    try {
        setup = build_setup(cfg);
    } catch (const json::exception& e) {
        throw CliError{kExitConfig, std::string("config error: ") + e.what()};
    }
    if (forced_proposer) setup.proposer = std::move(forced_proposer);
    if (budget_override) setup.engine.max_evaluator_calls = *budget_override;
    if (rng_override) setup.engine.rng_seed = *rng_override;
    if (max_iter_override) setup.engine.max_iterations = *max_iter_override;

    EvalCache cache(setup.cache_dir.empty() ? out_dir / "cache" : setup.cache_dir);
    EvaluationHost host(cache, setup.engine.floor_score, setup.engine.si_cap_bytes);

    std::optional<SearchEngine> engine;
    try {
        if (resume_from) {
            RunCheckpoint ckpt = load_checkpoint(*resume_from);
            if (budget_override) ckpt.config.max_evaluator_calls = *budget_override;
            if (max_iter_override) ckpt.config.max_iterations = *max_iter_override;
            ckpt.budget.max_evaluator_calls = ckpt.config.max_evaluator_calls;
            engine.emplace(SearchEngine::from_checkpoint(ckpt, *setup.evaluator, *setup.proposer, host));
        } else {
            engine.emplace(setup.engine, std::move(setup.dataset), std::move(setup.valset),
                           *setup.evaluator, *setup.proposer, host);
        }
    } catch (const ConfigError& e) {
        throw CliError{kExitConfig, e.what()};
    }

    fs::create_directories(out_dir);
    std::ofstream trajectory(out_dir / "trajectory.jsonl", std::ios::binary | std::ios::app);
    engine->set_trajectory_sink(
        [&](const IterationOutcome& o) { trajectory << o.to_json().dump() << '\n'; });
    engine->set_checkpoint_path(out_dir / "checkpoint.json");

    OptimizationResult result;
    try {
        result = engine->run();
    } catch (const ConfigError& e) {
        throw CliError{kExitConfig, e.what()};
    }
    trajectory.flush();
    write_outputs(out_dir, result, engine->pareto(), plot_path);
    print_result(result);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"evolutionary text-artifact optimizer"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "textevo-out";
    std::string checkpoint_path;
    std::string plot_path;
    std::string replay_log;
    std::optional<std::uint64_t> budget, rng_seed, max_iterations;
    std::string resume_path;

    auto* run = app.add_subcommand("run", "run an optimization from a config file");
    run->add_option("--config", config_path, "config JSON")->required();
    run->add_option("--out-dir", out_dir, "output directory");
    run->add_option("--budget", budget, "override max evaluator calls");
    run->add_option("--rng-seed", rng_seed, "override rng seed");
    run->add_option("--max-iterations", max_iterations, "override iteration cap");
    run->add_option("--resume", resume_path, "resume from a checkpoint file");
    run->add_option("--plot-data", plot_path, "write per-iteration best-aggregate CSV");

    auto* resume = app.add_subcommand("resume", "resume a checkpointed run");
    resume->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    resume->add_option("--config", config_path, "config JSON (for evaluator/proposer wiring)")->required();
    resume->add_option("--out-dir", out_dir, "output directory");
    resume->add_option("--budget", budget, "override max evaluator calls");
    resume->add_option("--max-iterations", max_iterations, "override iteration cap");
    resume->add_option("--plot-data", plot_path, "write per-iteration best-aggregate CSV");

    auto* inspect = app.add_subcommand("inspect-frontier", "print the frontier table of a checkpoint");
    inspect->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    std::string inspect_out;
    inspect->add_option("--out", inspect_out, "also write the table to a file");

    auto* validate = app.add_subcommand("validate-config", "parse and validate a config file");
    validate->add_option("--config", config_path, "config JSON")->required();

    auto* replay = app.add_subcommand("replay-proposer", "re-run using a recorded proposer log");
    replay->add_option("--config", config_path, "config JSON")->required();
    replay->add_option("--log", replay_log, "recorded request/response JSONL")->required();
    replay->add_option("--out-dir", out_dir, "output directory");
    replay->add_option("--budget", budget, "override max evaluator calls");
    replay->add_option("--rng-seed", rng_seed, "override rng seed");
    replay->add_option("--max-iterations", max_iterations, "override iteration cap");
    replay->add_option("--plot-data", plot_path, "write per-iteration best-aggregate CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(config_path, budget, rng_seed, max_iterations,
                           resume_path.empty() ? std::nullopt : std::optional<fs::path>(resume_path),
                           out_dir, plot_path.empty() ? std::nullopt : std::optional<fs::path>(plot_path));
        }
        if (resume->parsed()) {
            return cmd_run(config_path, budget, std::nullopt, max_iterations,
                           std::optional<fs::path>(checkpoint_path), out_dir,
                           plot_path.empty() ? std::nullopt : std::optional<fs::path>(plot_path));
        }
        if (inspect->parsed()) {
            const RunCheckpoint ckpt = load_checkpoint(checkpoint_path);
            const std::string table = frontier_table(ckpt.pareto);
            std::cout << table;
            if (!inspect_out.empty()) atomic_write_file(inspect_out, table);
            return kExitOk;
        }
        if (validate->parsed()) {
            const json cfg = load_json_file(config_path);
            RunSetup setup = build_setup(cfg);
            setup.engine.validate();
            std::cout << "config ok\n";
            return kExitOk;
        }
        if (replay->parsed()) {
            return cmd_run(config_path, budget, rng_seed, max_iterations, std::nullopt, out_dir,
                           plot_path.empty() ? std::nullopt : std::optional<fs::path>(plot_path),
                           std::make_unique<ReplayBackend>(replay_log));
        }
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SpawnFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEvaluator;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
