#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <textevo/core.hpp>
#include <textevo/rng.hpp>

namespace textevo {

/// Strict Pareto dominance: a >= b componentwise with at least one strict
/// improvement. Higher is better on every component.
inline bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || a.size() != b.size())
        throw ContractViolation("dominates: score vectors must have equal positive length");
    bool strict = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) return false;
        if (a[i] > b[i]) strict = true;
    }
    return strict;
}

/// Per-objective score matrix plus the derived selection structures: the
/// nondominated set, the best-set for every objective, and the sampling
/// weight of each frontier member (how many objectives it tops).
struct ParetoState {
    std::vector<ObjectiveId> objectives;                // fixed once the first candidate lands
    std::map<CandidateId, std::vector<double>> scores;  // dense rows aligned to `objectives`
    std::set<CandidateId> nondominated;
    std::vector<std::set<CandidateId>> best_sets;       // indexed like `objectives`
    std::map<CandidateId, std::uint32_t> weights;       // entries exist for nondominated only

    bool empty() const { return scores.empty(); }

    json to_json() const {
        json j;
        json keys = json::array();
        for (const auto& o : objectives) keys.push_back(o.key());
        j["objectives"] = keys;
        json rows = json::array();
        for (const auto& [id, row] : scores) rows.push_back(json::array({id, json(row)}));
        j["scores"] = rows;
        j["nondominated"] = json(nondominated);
        json bests = json::array();
        for (const auto& bs : best_sets) bests.push_back(json(bs));
        j["best_sets"] = bests;
        json ws = json::array();
        for (const auto& [id, w] : weights) ws.push_back(json::array({id, w}));
        j["weights"] = ws;
        return j;
    }

    static ParetoState from_json(const json& j) {
        ParetoState s;
        for (const auto& k : j.at("objectives")) s.objectives.push_back(ObjectiveId::parse_key(k.get<std::string>()));
        for (const auto& row : j.at("scores")) {
            auto values = row.at(1).get<std::vector<double>>();
            if (values.size() != s.objectives.size())
                throw ContractViolation("ParetoState: row width mismatch");
            s.scores.emplace(row.at(0).get<CandidateId>(), std::move(values));
        }
        s.nondominated = j.at("nondominated").get<std::set<CandidateId>>();
        for (const auto& bs : j.at("best_sets")) s.best_sets.push_back(bs.get<std::set<CandidateId>>());
        for (const auto& w : j.at("weights")) s.weights.emplace(w.at(0).get<CandidateId>(), w.at(1).get<std::uint32_t>());
        return s;
    }
};

namespace detail {

/// Recomputes nondominated, best_sets and weights from the score matrix.
/// Ties on an objective use exact float equality: scores come from one
/// deterministic evaluator and reruns are cache hits.
inline void recompute_frontier(ParetoState& s) {
    s.nondominated.clear();
    for (const auto& [id, row] : s.scores) {
        bool dominated = false;
        for (const auto& [other_id, other_row] : s.scores) {
            if (other_id != id && dominates(other_row, row)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) s.nondominated.insert(id);
    }

    s.best_sets.assign(s.objectives.size(), {});
    for (std::size_t j = 0; j < s.objectives.size(); ++j) {
        double best = 0.0;
        bool first = true;
        for (CandidateId id : s.nondominated) {
            const double v = s.scores.at(id)[j];
            if (first || v > best) {
                best = v;
                first = false;
            }
        }
        if (first) continue;
        for (CandidateId id : s.nondominated)
            if (s.scores.at(id)[j] == best) s.best_sets[j].insert(id);
    }

    s.weights.clear();
    for (CandidateId id : s.nondominated) s.weights[id] = 0;
    for (const auto& bs : s.best_sets)
        for (CandidateId id : bs) ++s.weights[id];
}

} // namespace detail

/// Extracts the union of sub-score metric names over a full record set.
inline std::set<std::string> metric_names(const std::vector<EvaluationRecord>& records) {
    std::set<std::string> names;
    for (const auto& r : records)
        for (const auto& [entry_name, value] : r.side_info.entries())
            if (const auto* subs = std::get_if<SubScores>(&value))
                for (const auto& [metric, v] : *subs) names.insert(metric);
    return names;
}

/// Fixes the objective set from the first full evaluation: one column per
/// evaluation unit plus one per sub-score metric seen in any record.
inline std::vector<ObjectiveId> derive_objectives(const std::vector<EvaluationRecord>& first_full_records) {
    if (first_full_records.empty())
        throw ContractViolation("derive_objectives: empty record set");
    std::set<ObjectiveId> set;
    for (const auto& r : first_full_records) set.insert(r.objective);
    for (const auto& name : metric_names(first_full_records)) set.insert(ObjectiveId::per_metric(name));
    return {set.begin(), set.end()};
}

/// Builds one candidate's dense score row over a fixed objective set.
/// Unit columns take the record score. Metric columns take the mean of that
/// sub-score over the records carrying it, or `floor` when none does (a
/// floored failure record has no sub-scores but must still occupy a row).
inline std::vector<double> score_row(const std::vector<ObjectiveId>& objectives,
                                     const std::vector<EvaluationRecord>& records, double floor) {
    std::map<ObjectiveId, double> unit_scores;
    std::map<std::string, std::pair<double, std::size_t>> metric_sums;
    for (const auto& r : records) {
        if (r.objective.kind != ObjectiveId::Kind::PerMetric) unit_scores[r.objective] = r.score;
        for (const auto& [entry_name, value] : r.side_info.entries())
            if (const auto* subs = std::get_if<SubScores>(&value))
                for (const auto& [metric, v] : *subs) {
                    auto& [sum, count] = metric_sums[metric];
                    sum += v;
                    ++count;
                }
    }
    std::vector<double> row;
    row.reserve(objectives.size());
    for (const auto& o : objectives) {
        if (o.kind == ObjectiveId::Kind::PerMetric) {
            auto it = metric_sums.find(o.metric);
            row.push_back(it == metric_sums.end() ? floor
                                                  : it->second.first / static_cast<double>(it->second.second));
        } else {
            auto it = unit_scores.find(o);
            if (it == unit_scores.end())
                throw ContractViolation("score_row: records do not cover objective " + o.key());
            row.push_back(it->second);
        }
    }
    return row;
}

/// Adds one fully evaluated candidate and recomputes the frontier. The
/// records must cover the complete objective set for exactly one candidate.
/// Dominated candidates stay in the score matrix as history but leave the
/// selectable pool.
inline ParetoState update_frontier(const ParetoState& state, const std::vector<EvaluationRecord>& new_records,
                                   double floor = 0.0) {
    if (new_records.empty()) throw ContractViolation("update_frontier: empty record set");
    const CandidateId id = new_records.front().candidate_id;
    for (const auto& r : new_records)
        if (r.candidate_id != id)
            throw ContractViolation("update_frontier: records span multiple candidates");

    ParetoState next = state;
    if (next.objectives.empty()) next.objectives = derive_objectives(new_records);
    if (next.scores.contains(id)) throw ContractViolation("update_frontier: candidate already present");
    next.scores.emplace(id, score_row(next.objectives, new_records, floor));
    detail::recompute_frontier(next);
    return next;
}

/// Samples the next parent with probability proportional to how many
/// objectives it is best at. Deterministic given the rng state.
inline CandidateId select_parent(const ParetoState& state, Rng& rng) {
    std::uint64_t total = 0;
    for (const auto& [id, w] : state.weights) total += w;
    if (total == 0) throw EngineError("select_parent: no candidate with positive weight");
    std::uint64_t draw = rng.below(total);
    for (const auto& [id, w] : state.weights) {
        if (draw < w) return id;
        draw -= w;
    }
    throw EngineError("select_parent: unreachable");
}

/// Mean over all objective columns of one row.
inline double row_aggregate(const ParetoState& state, CandidateId id) {
    return mean(state.scores.at(id));
}

/// With a filter: the candidate maximizing that single objective. Without:
/// the candidate maximizing the mean over all objectives. Ties break toward
/// the lowest candidate id. Scans full history, so the seed is always
/// eligible and the result can never fall below it.
inline CandidateId best_candidate(const ParetoState& state, const std::optional<ObjectiveId>& filter = {}) {
    if (state.empty()) throw ContractViolation("best_candidate: empty state");
    std::optional<std::size_t> column;
    if (filter) {
        auto it = std::find(state.objectives.begin(), state.objectives.end(), *filter);
        if (it == state.objectives.end())
            throw ContractViolation("best_candidate: unknown objective " + filter->key());
        column = static_cast<std::size_t>(it - state.objectives.begin());
    }
    std::optional<CandidateId> best;
    double best_value = 0.0;
    for (const auto& [id, row] : state.scores) {
        const double v = column ? row[*column] : mean(row);
        if (!best || v > best_value) {
            best = id;
            best_value = v;
        }
    }
    return *best;
}

/// Tabular export: one row per candidate with per-objective scores, weight
/// and nondominated flag. Tab-separated, header first.
inline std::string frontier_table(const ParetoState& state) {
    std::ostringstream os;
    os << "id\tnondominated\tweight";
    for (const auto& o : state.objectives) os << '\t' << o.key();
    os << '\n';
    for (const auto& [id, row] : state.scores) {
        const bool nd = state.nondominated.contains(id);
        os << id << '\t' << (nd ? 1 : 0) << '\t' << (nd ? state.weights.at(id) : 0);
        for (double v : row) os << '\t' << json(v).dump();
        os << '\n';
    }
    return os.str();
}

} // namespace textevo
