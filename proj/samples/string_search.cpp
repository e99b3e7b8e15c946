// Library usage walkthrough: a fully offline single-task run. The evaluator
// scores prefix match against a hidden target and the scripted proposer
// consumes the first-mismatch feedback, so the loop converges in a dozen
// iterations.

#include <iostream>

#include <textevo/textevo.hpp>

using namespace textevo;

int main() {
    domains::StringTask task;
    task.target = "hello-world!";  // whitespace-free: the refiner trims proposal edges
    task.scorer = domains::StringScorer::PrefixMatchLen;
    domains::StringTaskEvaluator evaluator(task);

    ScriptedBackend proposer(scripted::prefix_fixer());

    EvalCache cache;  // memory-only
    EvaluationHost host(cache);

    EngineConfig config;
    config.seed_text = "";
    config.max_evaluator_calls = 40;
    config.max_iterations = 30;
    config.rng_seed = 7;

    SearchEngine engine(config, std::nullopt, std::nullopt, evaluator, proposer, host);
    engine.set_trajectory_sink([](const IterationOutcome& o) {
        std::cout << "iter " << o.iteration << ": " << to_string(o.reason) << "\n";
    });

    const OptimizationResult result = engine.run();
    std::cout << "best text: \"" << result.best->text << "\"\n";
    std::cout << "final score: " << result.final_scores.front().second << "\n";
    std::cout << "evaluator calls: " << result.budget_consumed << "\n";
    return 0;
}
