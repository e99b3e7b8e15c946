#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <textevo/engine_types.hpp>
#include <textevo/pareto.hpp>

#include <unistd.h>

namespace textevo {

/// Full serialized engine state. Loading a checkpoint and saving it again
/// reproduces the file byte-for-byte, which is what makes the resume path
/// testable against an uninterrupted run.
struct RunCheckpoint {
    int schema_version = kSchemaVersion;
    EngineConfig config;
    Mode mode = Mode::SingleTask;
    std::vector<Candidate> candidates;        // sorted by id
    std::vector<EvaluationRecord> records;    // sorted by (candidate, objective)
    std::vector<Example> examples;            // train and val, sorted by id
    ParetoState pareto;
    std::string rng_state;
    Budget budget;
    std::uint64_t iteration = 0;
    TrajectorySummary summary;
    std::vector<double> best_aggregate_series;
    std::string template_id;

    json to_json() const {
        json j;
        j["schema_version"] = schema_version;
        j["engine_config"] = config.to_json();
        j["mode"] = to_string(mode);
        json cands = json::array();
        for (const auto& c : candidates) cands.push_back(c.to_json());
        j["candidates"] = cands;
        json recs = json::array();
        for (const auto& r : records) recs.push_back(r.to_json());
        j["records"] = recs;
        json exs = json::array();
        for (const auto& e : examples) exs.push_back(e.to_json());
        j["examples"] = exs;
        j["pareto"] = pareto.to_json();
        j["rng_state"] = rng_state;
        j["budget"] = budget.to_json();
        j["iteration"] = iteration;
        j["trajectory_summary"] = summary.to_json();
        j["best_aggregate_series"] = best_aggregate_series;
        j["template_id"] = template_id;
        return j;
    }

    static RunCheckpoint from_json(const json& j) {
        RunCheckpoint c;
        c.schema_version = j.at("schema_version").get<int>();
        c.config = EngineConfig::from_json(j.at("engine_config"));
        c.mode = mode_from_string(j.at("mode").get<std::string>());
        for (const auto& jc : j.at("candidates")) c.candidates.push_back(Candidate::from_json(jc));
        for (const auto& jr : j.at("records")) c.records.push_back(EvaluationRecord::from_json(jr));
        for (const auto& je : j.at("examples")) c.examples.push_back(Example::from_json(je));
        c.pareto = ParetoState::from_json(j.at("pareto"));
        c.rng_state = j.at("rng_state").get<std::string>();
        c.budget = Budget::from_json(j.at("budget"));
        c.iteration = j.at("iteration").get<std::uint64_t>();
        c.summary = TrajectorySummary::from_json(j.at("trajectory_summary"));
        c.best_aggregate_series = j.at("best_aggregate_series").get<std::vector<double>>();
        c.template_id = j.at("template_id").get<std::string>();
        return c;
    }

    /// Structural invariants beyond what parsing already enforces.
    void validate() const {
        std::map<CandidateId, const Candidate*> by_id;
        for (const auto& c : candidates) {
            if (!by_id.emplace(c.id, &c).second)
                throw CorruptCheckpoint("duplicate candidate id " + std::to_string(c.id));
            if ((c.origin == Origin::Seed || c.origin == Origin::Bootstrap) && c.parent_id)
                throw CorruptCheckpoint("seed candidate with a parent");
        }
        for (const auto& c : candidates) {
            if (!c.parent_id) continue;
            auto it = by_id.find(*c.parent_id);
            if (it == by_id.end())
                throw CorruptCheckpoint("candidate " + std::to_string(c.id) + " references missing parent");
            if (it->second->created_at_iteration >= c.created_at_iteration)
                throw CorruptCheckpoint("candidate " + std::to_string(c.id) +
                                        " has a parent from a later iteration");
        }
        std::set<ExampleId> example_ids;
        for (const auto& e : examples)
            if (!example_ids.insert(e.id).second)
                throw CorruptCheckpoint("duplicate example id " + std::to_string(e.id));
        std::set<std::pair<CandidateId, ObjectiveId>> seen;
        for (const auto& r : records) {
            if (!by_id.contains(r.candidate_id))
                throw CorruptCheckpoint("record references missing candidate " +
                                        std::to_string(r.candidate_id));
            if (!seen.emplace(r.candidate_id, r.objective).second)
                throw CorruptCheckpoint("duplicate record for candidate " + std::to_string(r.candidate_id) +
                                        " objective " + r.objective.key());
        }
        for (const auto& [id, row] : pareto.scores)
            if (!by_id.contains(id))
                throw CorruptCheckpoint("pareto state references missing candidate " + std::to_string(id));
        if (!pareto.scores.empty()) {
            ParetoState recomputed = pareto;
            detail::recompute_frontier(recomputed);
            if (recomputed.nondominated != pareto.nondominated || recomputed.best_sets != pareto.best_sets ||
                recomputed.weights != pareto.weights)
                throw CorruptCheckpoint("pareto state is inconsistent with its score matrix");
        }
        if (budget.consumed > budget.max_evaluator_calls)
            throw CorruptCheckpoint("budget consumed exceeds the maximum");
    }
};

inline void atomic_write_file(const std::filesystem::path& path, const std::string& body) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw EngineError("cannot write " + tmp);
        out << body;
        if (!out.good()) throw EngineError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw EngineError("rename failed: " + path.string() + ": " + ec.message());
}

inline void save_checkpoint(const RunCheckpoint& ckpt, const std::filesystem::path& path) {
    atomic_write_file(path, ckpt.to_json().dump() + "\n");
}

inline RunCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptCheckpoint("checkpoint unreadable: " + path.string());
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw CorruptCheckpoint("checkpoint is not valid JSON: " + path.string());
    int version = -1;
    try {
        version = j.at("schema_version").get<int>();
    } catch (const json::exception&) {
        throw CorruptCheckpoint("checkpoint missing schema_version");
    }
    if (version != kSchemaVersion)
        throw MigrationError("checkpoint schema_version " + std::to_string(version) +
                             " is not supported by this build (expected " +
                             std::to_string(kSchemaVersion) + ")");
    RunCheckpoint ckpt;
    try {
        ckpt = RunCheckpoint::from_json(j);
    } catch (const std::exception& e) {
        throw CorruptCheckpoint(std::string("checkpoint malformed: ") + e.what());
    }
    ckpt.validate();
    return ckpt;
}

} // namespace textevo
