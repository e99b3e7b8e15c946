#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <textevo/errors.hpp>
#include <textevo/side_info.hpp>

namespace textevo {

inline constexpr int kSchemaVersion = 1;

using CandidateId = std::uint64_t;
using ExampleId = std::uint64_t;

enum class Origin { Seed, Bootstrap, Mutation, Refined };

inline std::string to_string(Origin o) {
    switch (o) {
        case Origin::Seed: return "seed";
        case Origin::Bootstrap: return "bootstrap";
        case Origin::Mutation: return "mutation";
        case Origin::Refined: return "refined";
    }
    throw ContractViolation("unknown Origin");
}

inline Origin origin_from_string(const std::string& s) {
    if (s == "seed") return Origin::Seed;
    if (s == "bootstrap") return Origin::Bootstrap;
    if (s == "mutation") return Origin::Mutation;
    if (s == "refined") return Origin::Refined;
    throw ContractViolation("unknown Origin '" + s + "'");
}

/// A text artifact plus lineage metadata; the unit of search.
struct Candidate {
    CandidateId id = 0;
    std::string text;
    std::optional<CandidateId> parent_id;
    Origin origin = Origin::Seed;
    std::uint64_t created_at_iteration = 0;

    bool operator==(const Candidate&) const = default;

    json to_json() const {
        json j;
        j["id"] = id;
        j["text"] = text;
        if (parent_id) j["parent_id"] = *parent_id;
        j["origin"] = to_string(origin);
        j["created_at_iteration"] = created_at_iteration;
        return j;
    }

    static Candidate from_json(const json& j) {
        Candidate c;
        c.id = j.at("id").get<CandidateId>();
        c.text = j.at("text").get<std::string>();
        if (j.contains("parent_id")) c.parent_id = j.at("parent_id").get<CandidateId>();
        c.origin = origin_from_string(j.at("origin").get<std::string>());
        c.created_at_iteration = j.at("created_at_iteration").get<std::uint64_t>();
        return c;
    }
};

enum class Split { Train, Val };

inline std::string to_string(Split s) { return s == Split::Train ? "train" : "val"; }

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    throw ContractViolation("unknown Split '" + s + "'");
}

/// An optimization problem instance: opaque payload handed to the evaluator.
struct Example {
    ExampleId id = 0;
    json payload;
    Split split = Split::Train;

    bool operator==(const Example&) const = default;

    json to_json() const {
        json j;
        j["id"] = id;
        j["payload"] = payload;
        j["split"] = to_string(split);
        return j;
    }

    static Example from_json(const json& j) {
        Example e;
        e.id = j.at("id").get<ExampleId>();
        e.payload = j.at("payload");
        e.split = split_from_string(j.at("split").get<std::string>());
        return e;
    }
};

enum class Mode { SingleTask, MultiTask, Generalization };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::SingleTask: return "single_task";
        case Mode::MultiTask: return "multi_task";
        case Mode::Generalization: return "generalization";
    }
    throw ContractViolation("unknown Mode");
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "single_task") return Mode::SingleTask;
    if (s == "multi_task") return Mode::MultiTask;
    if (s == "generalization") return Mode::Generalization;
    throw ContractViolation("unknown Mode '" + s + "'");
}

/// The active mode is a pure function of which inputs are present.
inline Mode derive_mode(bool has_dataset, bool has_valset) {
    if (has_valset && !has_dataset)
        throw ConfigError("valset provided without dataset");
    if (!has_dataset) return Mode::SingleTask;
    return has_valset ? Mode::Generalization : Mode::MultiTask;
}

/// Identifies one column of the Pareto score matrix: the bare scalar score,
/// one dataset example, or one named sub-score metric.
struct ObjectiveId {
    enum class Kind { Scalar, PerExample, PerMetric };

    Kind kind = Kind::Scalar;
    ExampleId example_id = 0;
    std::string metric;

    static ObjectiveId scalar() { return {}; }
    static ObjectiveId per_example(ExampleId id) { return {Kind::PerExample, id, {}}; }
    static ObjectiveId per_metric(std::string name) { return {Kind::PerMetric, 0, std::move(name)}; }

    bool operator==(const ObjectiveId&) const = default;
    auto operator<=>(const ObjectiveId&) const = default;

    std::string key() const {
        switch (kind) {
            case Kind::Scalar: return "scalar";
            case Kind::PerExample: return "ex:" + std::to_string(example_id);
            case Kind::PerMetric: return "metric:" + metric;
        }
        throw ContractViolation("unknown ObjectiveId kind");
    }

    static ObjectiveId parse_key(const std::string& key) {
        if (key == "scalar") return scalar();
        if (key.rfind("ex:", 0) == 0) return per_example(std::stoull(key.substr(3)));
        if (key.rfind("metric:", 0) == 0) return per_metric(key.substr(7));
        throw ContractViolation("unknown objective key '" + key + "'");
    }
};

/// Evidence for one (candidate, objective) pair.
struct EvaluationRecord {
    CandidateId candidate_id = 0;
    ObjectiveId objective;
    double score = 0.0;
    SideInfo side_info;
    std::uint32_t evaluator_calls = 1;
    std::chrono::milliseconds wall_time{0};
    bool from_cache = false;

    json to_json() const {
        json j;
        j["candidate_id"] = candidate_id;
        j["objective"] = objective.key();
        j["score"] = score;
        j["side_info"] = side_info.to_json();
        j["evaluator_calls"] = evaluator_calls;
        j["wall_time_ms"] = wall_time.count();
        j["from_cache"] = from_cache;
        return j;
    }

    static EvaluationRecord from_json(const json& j) {
        EvaluationRecord r;
        r.candidate_id = j.at("candidate_id").get<CandidateId>();
        r.objective = ObjectiveId::parse_key(j.at("objective").get<std::string>());
        r.score = j.at("score").get<double>();
        if (!std::isfinite(r.score)) throw ContractViolation("EvaluationRecord: non-finite score");
        r.side_info = SideInfo::from_json(j.at("side_info"));
        r.evaluator_calls = j.at("evaluator_calls").get<std::uint32_t>();
        r.wall_time = std::chrono::milliseconds(j.at("wall_time_ms").get<std::int64_t>());
        r.from_cache = j.at("from_cache").get<bool>();
        return r;
    }
};

/// Count of permitted non-cached evaluator invocations.
struct Budget {
    std::uint64_t max_evaluator_calls = 0;
    std::uint64_t consumed = 0;

    std::uint64_t remaining() const { return max_evaluator_calls - consumed; }
    bool exhausted() const { return consumed >= max_evaluator_calls; }

    void charge(std::uint64_t calls = 1) {
        if (consumed + calls > max_evaluator_calls)
            throw BudgetExhausted("budget overrun: " + std::to_string(consumed + calls) + " > " +
                                  std::to_string(max_evaluator_calls));
        consumed += calls;
    }

    json to_json() const {
        json j;
        j["max_evaluator_calls"] = max_evaluator_calls;
        j["consumed"] = consumed;
        return j;
    }

    static Budget from_json(const json& j) {
        Budget b;
        b.max_evaluator_calls = j.at("max_evaluator_calls").get<std::uint64_t>();
        b.consumed = j.at("consumed").get<std::uint64_t>();
        if (b.consumed > b.max_evaluator_calls) throw ContractViolation("Budget: consumed exceeds max");
        return b;
    }
};

/// Mean with value-sorted summation, so the result is exactly permutation
/// invariant despite floating-point rounding.
inline double mean(std::vector<double> values) {
    if (values.empty()) throw ContractViolation("mean: empty list");
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

/// Arithmetic mean of the record scores. All records must belong to the same
/// candidate; the list must be nonempty.
inline double aggregate_score(const std::vector<EvaluationRecord>& records) {
    if (records.empty()) throw ContractViolation("aggregate_score: empty record list");
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) {
        if (r.candidate_id != records.front().candidate_id)
            throw ContractViolation("aggregate_score: records span multiple candidates");
        scores.push_back(r.score);
    }
    return mean(std::move(scores));
}

} // namespace textevo
