#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <textevo/core.hpp>

namespace textevo {

struct EngineConfig {
    unsigned minibatch_size = 3;
    std::uint64_t max_evaluator_calls = 0;
    std::optional<std::string> seed_text;
    std::optional<std::string> objective_text;
    std::optional<std::string> background_text;
    std::uint64_t rng_seed = 0;
    std::string acceptance = "strict_improvement";
    std::uint64_t checkpoint_every = 10;
    std::uint64_t max_iterations = 10000;
    double floor_score = 0.0;
    unsigned proposer_retries = 2;
    unsigned bootstrap_retries = 2;
    unsigned parallelism = 1;
    bool capture_stdio = true;
    std::int64_t eval_timeout_ms = 300000;
    std::uint64_t si_cap_bytes = 256 * 1024;
    std::uint64_t frontier_digest_texts = 3;      // candidates summarized per prompt; 0 disables
    std::uint64_t frontier_digest_text_bytes = 256;

    void validate() const {
        if (minibatch_size < 1) throw ConfigError("minibatch_size must be >= 1");
        if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
        if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
        if (acceptance != "strict_improvement")
            throw ConfigError("unknown acceptance rule '" + acceptance + "'");
        if (!seed_text && (!objective_text || objective_text->empty()))
            throw ConfigError("seedless mode requires a nonempty objective");
        if (eval_timeout_ms <= 0) throw ConfigError("eval_timeout_ms must be positive");
    }

    json to_json() const {
        json j;
        j["minibatch_size"] = minibatch_size;
        j["max_evaluator_calls"] = max_evaluator_calls;
        if (seed_text) j["seed_text"] = *seed_text;
        if (objective_text) j["objective_text"] = *objective_text;
        if (background_text) j["background_text"] = *background_text;
        j["rng_seed"] = rng_seed;
        j["acceptance"] = acceptance;
        j["checkpoint_every"] = checkpoint_every;
        j["max_iterations"] = max_iterations;
        j["floor_score"] = floor_score;
        j["proposer_retries"] = proposer_retries;
        j["bootstrap_retries"] = bootstrap_retries;
        j["parallelism"] = parallelism;
        j["capture_stdio"] = capture_stdio;
        j["eval_timeout_ms"] = eval_timeout_ms;
        j["si_cap_bytes"] = si_cap_bytes;
        j["frontier_digest_texts"] = frontier_digest_texts;
        j["frontier_digest_text_bytes"] = frontier_digest_text_bytes;
        return j;
    }

    static EngineConfig from_json(const json& j) {
        EngineConfig c;
        c.minibatch_size = j.at("minibatch_size").get<unsigned>();
        c.max_evaluator_calls = j.at("max_evaluator_calls").get<std::uint64_t>();
        if (j.contains("seed_text")) c.seed_text = j.at("seed_text").get<std::string>();
        if (j.contains("objective_text")) c.objective_text = j.at("objective_text").get<std::string>();
        if (j.contains("background_text")) c.background_text = j.at("background_text").get<std::string>();
        c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        c.acceptance = j.at("acceptance").get<std::string>();
        c.checkpoint_every = j.at("checkpoint_every").get<std::uint64_t>();
        c.max_iterations = j.at("max_iterations").get<std::uint64_t>();
        c.floor_score = j.at("floor_score").get<double>();
        c.proposer_retries = j.at("proposer_retries").get<unsigned>();
        c.bootstrap_retries = j.at("bootstrap_retries").get<unsigned>();
        c.parallelism = j.at("parallelism").get<unsigned>();
        c.capture_stdio = j.at("capture_stdio").get<bool>();
        c.eval_timeout_ms = j.at("eval_timeout_ms").get<std::int64_t>();
        c.si_cap_bytes = j.at("si_cap_bytes").get<std::uint64_t>();
        c.frontier_digest_texts = j.at("frontier_digest_texts").get<std::uint64_t>();
        c.frontier_digest_text_bytes = j.at("frontier_digest_text_bytes").get<std::uint64_t>();
        return c;
    }
};

enum class OutcomeReason { Accepted, RejectedNoImprovement, ProposalFailed, BudgetExhausted };

inline std::string to_string(OutcomeReason r) {
    switch (r) {
        case OutcomeReason::Accepted: return "accepted";
        case OutcomeReason::RejectedNoImprovement: return "rejected_no_improvement";
        case OutcomeReason::ProposalFailed: return "proposal_failed";
        case OutcomeReason::BudgetExhausted: return "budget_exhausted";
    }
    throw ContractViolation("unknown OutcomeReason");
}

inline OutcomeReason outcome_reason_from_string(const std::string& s) {
    if (s == "accepted") return OutcomeReason::Accepted;
    if (s == "rejected_no_improvement") return OutcomeReason::RejectedNoImprovement;
    if (s == "proposal_failed") return OutcomeReason::ProposalFailed;
    if (s == "budget_exhausted") return OutcomeReason::BudgetExhausted;
    throw ContractViolation("unknown OutcomeReason '" + s + "'");
}

/// One trajectory event.
struct IterationOutcome {
    std::uint64_t iteration = 0;
    CandidateId parent_id = 0;
    std::optional<CandidateId> proposal_id;
    bool accepted = false;
    std::vector<ExampleId> minibatch_example_ids;
    OutcomeReason reason = OutcomeReason::ProposalFailed;
    std::string detail;

    json to_json() const {
        json j;
        j["iteration"] = iteration;
        j["parent_id"] = parent_id;
        if (proposal_id) j["proposal_id"] = *proposal_id;
        j["accepted"] = accepted;
        j["minibatch_example_ids"] = minibatch_example_ids;
        j["reason"] = to_string(reason);
        if (!detail.empty()) j["detail"] = detail;
        return j;
    }

    static IterationOutcome from_json(const json& j) {
        IterationOutcome o;
        o.iteration = j.at("iteration").get<std::uint64_t>();
        o.parent_id = j.at("parent_id").get<CandidateId>();
        if (j.contains("proposal_id")) o.proposal_id = j.at("proposal_id").get<CandidateId>();
        o.accepted = j.at("accepted").get<bool>();
        o.minibatch_example_ids = j.at("minibatch_example_ids").get<std::vector<ExampleId>>();
        o.reason = outcome_reason_from_string(j.at("reason").get<std::string>());
        if (j.contains("detail")) o.detail = j.at("detail").get<std::string>();
        return o;
    }
};

struct TrajectorySummary {
    std::uint64_t iterations = 0;
    std::uint64_t accepted = 0;
    std::uint64_t rejected_no_improvement = 0;
    std::uint64_t proposal_failed = 0;
    std::uint64_t budget_exhausted = 0;

    void count(OutcomeReason r) {
        ++iterations;
        switch (r) {
            case OutcomeReason::Accepted: ++accepted; break;
            case OutcomeReason::RejectedNoImprovement: ++rejected_no_improvement; break;
            case OutcomeReason::ProposalFailed: ++proposal_failed; break;
            case OutcomeReason::BudgetExhausted: ++budget_exhausted; break;
        }
    }

    json to_json() const {
        json j;
        j["iterations"] = iterations;
        j["accepted"] = accepted;
        j["rejected_no_improvement"] = rejected_no_improvement;
        j["proposal_failed"] = proposal_failed;
        j["budget_exhausted"] = budget_exhausted;
        return j;
    }

    static TrajectorySummary from_json(const json& j) {
        TrajectorySummary s;
        s.iterations = j.at("iterations").get<std::uint64_t>();
        s.accepted = j.at("accepted").get<std::uint64_t>();
        s.rejected_no_improvement = j.at("rejected_no_improvement").get<std::uint64_t>();
        s.proposal_failed = j.at("proposal_failed").get<std::uint64_t>();
        s.budget_exhausted = j.at("budget_exhausted").get<std::uint64_t>();
        return s;
    }
};

/// Final output of a run. MultiTask yields one specialist per example; the
/// other modes yield a single candidate. Serialization covers only the
/// deterministic fields, so results from equivalent runs compare
/// byte-for-byte.
struct OptimizationResult {
    Mode mode = Mode::SingleTask;
    std::optional<Candidate> best;                       // SingleTask / Generalization
    std::map<ExampleId, Candidate> best_per_example;     // MultiTask
    std::vector<std::pair<std::string, double>> final_scores;
    std::vector<std::pair<std::string, double>> val_scores;
    TrajectorySummary summary;
    std::uint64_t budget_consumed = 0;

    // in-memory extras, not serialized
    std::vector<IterationOutcome> trajectory;
    std::vector<double> best_aggregate_series;

    json to_json() const {
        json j;
        j["schema_version"] = kSchemaVersion;
        j["mode"] = to_string(mode);
        if (best) j["best"] = best->to_json();
        if (mode == Mode::MultiTask) {
            json per = json::array();
            for (const auto& [ex, cand] : best_per_example) per.push_back(json::array({ex, cand.to_json()}));
            j["best_per_example"] = per;
        }
        json fs = json::array();
        for (const auto& [key, v] : final_scores) fs.push_back(json::array({key, v}));
        j["final_scores"] = fs;
        if (mode == Mode::Generalization) {
            json vs = json::array();
            for (const auto& [key, v] : val_scores) vs.push_back(json::array({key, v}));
            j["val_scores"] = vs;
        }
        j["trajectory_summary"] = summary.to_json();
        j["budget_consumed"] = budget_consumed;
        return j;
    }
};

} // namespace textevo
