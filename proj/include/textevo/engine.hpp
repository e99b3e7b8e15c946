#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <textevo/checkpoint.hpp>
#include <textevo/engine_types.hpp>
#include <textevo/eval_host.hpp>
#include <textevo/pareto.hpp>
#include <textevo/proposer.hpp>
#include <textevo/rng.hpp>

namespace textevo {

/// The budgeted optimization loop: select a parent by frontier frequency,
/// reflect on a minibatch, gate the proposal on strict minibatch improvement,
/// then evaluate accepted proposals on the full objective set and update the
/// frontier. Strictly sequential; evaluation fan-out happens inside the host.
class SearchEngine {
public:
    SearchEngine(EngineConfig config, std::optional<std::vector<Example>> dataset,
                 std::optional<std::vector<Example>> valset, Evaluator& evaluator, ProposerBackend& proposer,
                 EvaluationHost& host)
        : config_(std::move(config)),
          evaluator_(evaluator),
          proposer_(proposer),
          host_(host),
          rng_(config_.rng_seed) {
        config_.validate();
        mode_ = derive_mode(dataset.has_value(), valset.has_value());
        if (dataset) {
            if (dataset->empty()) throw ConfigError("dataset must be nonempty when provided");
            train_ = std::move(*dataset);
        }
        if (valset) {
            if (valset->empty()) throw ConfigError("valset must be nonempty when provided");
            val_ = std::move(*valset);
        }
        std::set<ExampleId> ids;
        for (auto& e : train_) {
            e.split = Split::Train;
            if (!ids.insert(e.id).second) throw ConfigError("duplicate example id");
        }
        for (auto& e : val_) {
            e.split = Split::Val;
            if (!ids.insert(e.id).second) throw ConfigError("duplicate example id");
        }
        auto by_id = [](const Example& a, const Example& b) { return a.id < b.id; };
        std::sort(train_.begin(), train_.end(), by_id);
        std::sort(val_.begin(), val_.end(), by_id);
        budget_.max_evaluator_calls = config_.max_evaluator_calls;
    }

    /// Reconstructs a previously checkpointed engine. The evaluator, proposer
    /// and cache are wired from the caller; everything else comes from the
    /// checkpoint.
    static SearchEngine from_checkpoint(const RunCheckpoint& ckpt, Evaluator& evaluator,
                                        ProposerBackend& proposer, EvaluationHost& host) {
        if (ckpt.template_id != kPromptTemplateId)
            throw MigrationError("checkpoint uses prompt template '" + ckpt.template_id +
                                 "', this build provides '" + kPromptTemplateId + "'");
        std::optional<std::vector<Example>> dataset;
        std::optional<std::vector<Example>> valset;
        std::vector<Example> train, val;
        for (const auto& e : ckpt.examples)
            (e.split == Split::Train ? train : val).push_back(e);
        if (ckpt.mode != Mode::SingleTask) dataset = train;
        if (ckpt.mode == Mode::Generalization) valset = val;

        SearchEngine engine(ckpt.config, std::move(dataset), std::move(valset), evaluator, proposer, host);
        if (engine.mode_ != ckpt.mode) throw CorruptCheckpoint("checkpoint mode does not match its inputs");
        for (const auto& c : ckpt.candidates) engine.candidates_.emplace(c.id, c);
        for (const auto& r : ckpt.records) engine.records_.emplace(std::make_pair(r.candidate_id, r.objective), r);
        engine.pareto_ = ckpt.pareto;
        engine.rng_.restore_state(ckpt.rng_state);
        engine.budget_ = ckpt.budget;
        engine.iteration_ = ckpt.iteration;
        engine.summary_ = ckpt.summary;
        engine.series_ = ckpt.best_aggregate_series;
        for (const auto& [id, row] : engine.pareto_.scores)
            engine.frontier_texts_.insert(engine.candidates_.at(id).text);
        return engine;
    }

    void set_trajectory_sink(std::function<void(const IterationOutcome&)> sink) { sink_ = std::move(sink); }
    void set_checkpoint_path(std::filesystem::path path) { checkpoint_path_ = std::move(path); }

    Mode mode() const { return mode_; }
    const Budget& budget() const { return budget_; }
    const ParetoState& pareto() const { return pareto_; }
    const std::map<CandidateId, Candidate>& candidates() const { return candidates_; }
    const std::map<std::pair<CandidateId, ObjectiveId>, EvaluationRecord>& records() const { return records_; }
    std::uint64_t iteration() const { return iteration_; }

    RunCheckpoint checkpoint() const {
        RunCheckpoint c;
        c.config = config_;
        c.mode = mode_;
        for (const auto& [id, cand] : candidates_) c.candidates.push_back(cand);
        for (const auto& [key, rec] : records_) c.records.push_back(rec);
        for (const auto& e : train_) c.examples.push_back(e);
        for (const auto& e : val_) c.examples.push_back(e);
        std::sort(c.examples.begin(), c.examples.end(),
                  [](const Example& a, const Example& b) { return a.id < b.id; });
        c.pareto = pareto_;
        c.rng_state = rng_.save_state();
        c.budget = budget_;
        c.iteration = iteration_;
        c.summary = summary_;
        c.best_aggregate_series = series_;
        c.template_id = kPromptTemplateId;
        return c;
    }

    /// Runs until the budget or the iteration cap is hit and reports the best
    /// candidate under the active mode's output semantics.
    OptimizationResult run() {
        if (config_.max_evaluator_calls == 0) {
            if (candidates_.empty()) make_seed_candidate();
            return build_result();
        }
        if (pareto_.empty()) startup();
        while (!budget_.exhausted() && iteration_ < config_.max_iterations) {
            const IterationOutcome outcome = iterate_once();
            trajectory_.push_back(outcome);
            summary_.count(outcome.reason);
            series_.push_back(best_unit_aggregate());
            if (sink_) sink_(outcome);
            if (checkpoint_path_ && iteration_ % config_.checkpoint_every == 0)
                save_checkpoint(checkpoint(), *checkpoint_path_);
            if (outcome.reason == OutcomeReason::BudgetExhausted) break;
        }
        if (checkpoint_path_) save_checkpoint(checkpoint(), *checkpoint_path_);
        return build_result();
    }

private:
    std::vector<const Example*> train_units() const {
        if (mode_ == Mode::SingleTask) return {nullptr};
        std::vector<const Example*> units;
        for (const auto& e : train_) units.push_back(&e);
        return units;
    }

    CandidateId next_candidate_id() const {
        return candidates_.empty() ? 0 : candidates_.rbegin()->first + 1;
    }

    Candidate& make_seed_candidate() {
        Candidate seed;
        seed.id = next_candidate_id();
        seed.created_at_iteration = 0;
        if (config_.seed_text) {
            seed.text = *config_.seed_text;
            seed.origin = Origin::Seed;
        } else {
            seed.text = bootstrap_seed_text();
            seed.origin = Origin::Bootstrap;
        }
        return candidates_.emplace(seed.id, std::move(seed)).first->second;
    }

    /// Seedless mode: ask the proposer for a first candidate from the
    /// objective alone. Transport retries happen inside propose(); whole-call
    /// retries cover empty responses.
    std::string bootstrap_seed_text() {
        if (config_.seed_text) throw EngineError("bootstrap invoked although a seed is present");
        ReflectionContext ctx;
        ctx.bootstrap = true;
        ctx.objective_text = config_.objective_text;
        ctx.background_text = config_.background_text;
        std::string failure;
        for (unsigned attempt = 0; attempt <= config_.bootstrap_retries; ++attempt) {
            try {
                return propose(ctx, proposer_, config_.proposer_retries).refined_text;
            } catch (const ProposerFailure& e) {
                failure = e.what();
            }
        }
        throw ConfigError("bootstrap failed after retries: " + failure);
    }

    void startup() {
        Candidate& seed = make_seed_candidate();
        std::vector<EvaluationRecord> seed_records;
        try {
            seed_records = full_evaluation(seed);
        } catch (const BudgetExhausted&) {
            throw ConfigError("budget cannot cover the initial full evaluation");
        }
        store_records(seed_records);
        pareto_ = update_frontier(pareto_, seed_records, config_.floor_score);
        frontier_texts_.insert(seed.text);
        if (mode_ == Mode::Generalization) try_val_evaluation(seed);
    }

    std::vector<EvaluationRecord> full_evaluation(const Candidate& candidate) {
        return host_.evaluate_full(candidate.id, candidate.text, train_units(), evaluator_, &budget_,
                                   config_.parallelism, config_.capture_stdio,
                                   std::chrono::milliseconds(config_.eval_timeout_ms));
    }

    void try_val_evaluation(const Candidate& candidate) {
        std::vector<const Example*> units;
        for (const auto& e : val_) units.push_back(&e);
        try {
            store_records(host_.evaluate_full(candidate.id, candidate.text, units, evaluator_, &budget_,
                                              config_.parallelism, config_.capture_stdio,
                                              std::chrono::milliseconds(config_.eval_timeout_ms)));
        } catch (const BudgetExhausted&) {
            // candidate simply stays ineligible for val-based selection
        }
    }

    void store_records(const std::vector<EvaluationRecord>& records) {
        for (const auto& r : records) records_.emplace(std::make_pair(r.candidate_id, r.objective), r);
    }

    std::vector<const Example*> draw_minibatch() {
        if (mode_ == Mode::SingleTask) return {nullptr};
        const std::size_t k = std::min<std::size_t>(config_.minibatch_size, train_.size());
        std::vector<std::size_t> indices(train_.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng_.below(indices.size() - i));
            std::swap(indices[i], indices[j]);
        }
        std::vector<const Example*> batch;
        for (std::size_t i = 0; i < k; ++i) batch.push_back(&train_[indices[i]]);
        return batch;
    }

    static std::string example_summary(const Example* example) {
        if (!example) return {};
        std::string payload = example->payload.dump();
        if (payload.size() > 80) payload = payload.substr(0, 77) + "...";
        return "Example " + std::to_string(example->id) + ": " + payload;
    }

    std::vector<MinibatchItem> parent_minibatch_items(CandidateId parent,
                                                      const std::vector<const Example*>& batch) const {
        std::vector<MinibatchItem> items;
        for (const Example* ex : batch) {
            const ObjectiveId obj = ex ? ObjectiveId::per_example(ex->id) : ObjectiveId::scalar();
            auto it = records_.find({parent, obj});
            if (it == records_.end())
                throw EngineError("parent " + std::to_string(parent) + " lacks a record for " + obj.key());
            items.push_back({example_summary(ex), it->second.score, it->second.side_info});
        }
        return items;
    }

    std::optional<std::string> frontier_digest(CandidateId exclude) const {
        if (config_.frontier_digest_texts == 0) return std::nullopt;
        std::vector<std::pair<std::uint32_t, CandidateId>> ranked;
        for (const auto& [id, w] : pareto_.weights)
            if (id != exclude && w > 0) ranked.emplace_back(w, id);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        if (ranked.empty()) return std::nullopt;
        std::string digest;
        const std::size_t limit = std::min<std::size_t>(ranked.size(), config_.frontier_digest_texts);
        for (std::size_t i = 0; i < limit; ++i) {
            const auto& [w, id] = ranked[i];
            std::string text = candidates_.at(id).text;
            if (text.size() > config_.frontier_digest_text_bytes)
                text = text.substr(0, config_.frontier_digest_text_bytes) + "...";
            digest += "candidate " + std::to_string(id) + " (best on " + std::to_string(w) +
                      " objectives): " + text + "\n";
        }
        return digest;
    }

    IterationOutcome iterate_once() {
        ++iteration_;
        IterationOutcome outcome;
        outcome.iteration = iteration_;

        const CandidateId parent_id = select_parent(pareto_, rng_);
        outcome.parent_id = parent_id;
        const std::vector<const Example*> batch = draw_minibatch();
        for (const Example* ex : batch)
            if (ex) outcome.minibatch_example_ids.push_back(ex->id);

        ReflectionContext ctx;
        ctx.parent_text = candidates_.at(parent_id).text;
        ctx.objective_text = config_.objective_text;
        ctx.background_text = config_.background_text;
        ctx.minibatch = parent_minibatch_items(parent_id, batch);
        ctx.frontier_digest = frontier_digest(parent_id);

        std::vector<double> parent_scores;
        for (const auto& item : ctx.minibatch) parent_scores.push_back(item.score);
        const double parent_aggregate = mean(std::move(parent_scores));

        auto note = [&outcome](const std::string& text) {
            outcome.detail += outcome.detail.empty() ? text : "; " + text;
        };

        std::string proposal_text;
        try {
            const ProposerResponse resp = propose(ctx, proposer_, config_.proposer_retries);
            proposal_text = resp.refined_text;
            if (resp.refiner_applied) note("refiner applied");
        } catch (const ProposerFailure& e) {
            outcome.reason = OutcomeReason::ProposalFailed;
            note(e.what());
            return outcome;
        }

        if (frontier_texts_.contains(proposal_text)) {
            outcome.reason = OutcomeReason::RejectedNoImprovement;
            note("duplicate of an accepted candidate");
            return outcome;
        }

        Candidate proposal;
        proposal.id = next_candidate_id();
        proposal.text = proposal_text;
        proposal.parent_id = parent_id;
        proposal.origin = Origin::Mutation;
        proposal.created_at_iteration = iteration_;

        std::vector<EvaluationRecord> minibatch_records;
        try {
            minibatch_records =
                host_.evaluate_full(proposal.id, proposal.text, batch, evaluator_, &budget_,
                                    config_.parallelism, config_.capture_stdio,
                                    std::chrono::milliseconds(config_.eval_timeout_ms));
        } catch (const BudgetExhausted& e) {
            outcome.reason = OutcomeReason::BudgetExhausted;
            note(e.what());
            return outcome;
        }
        candidates_.emplace(proposal.id, proposal);
        store_records(minibatch_records);
        outcome.proposal_id = proposal.id;

        const double proposal_aggregate = aggregate_score(minibatch_records);

        if (!(proposal_aggregate > parent_aggregate)) {
            outcome.reason = OutcomeReason::RejectedNoImprovement;
            return outcome;
        }

        std::vector<EvaluationRecord> full_records;
        try {
            full_records = full_evaluation(proposal);
        } catch (const BudgetExhausted& e) {
            outcome.reason = OutcomeReason::BudgetExhausted;
            note(e.what());
            return outcome;
        }
        store_records(full_records);
        pareto_ = update_frontier(pareto_, full_records, config_.floor_score);
        frontier_texts_.insert(proposal.text);
        if (mode_ == Mode::Generalization) try_val_evaluation(proposal);

        outcome.accepted = true;
        outcome.reason = OutcomeReason::Accepted;
        return outcome;
    }

    /// Mean over the unit (non-metric) columns of a frontier row: the mode's
    /// notion of "average score" over the dataset.
    double unit_aggregate(CandidateId id) const {
        const auto& row = pareto_.scores.at(id);
        std::vector<double> values;
        for (std::size_t j = 0; j < pareto_.objectives.size(); ++j)
            if (pareto_.objectives[j].kind != ObjectiveId::Kind::PerMetric) values.push_back(row[j]);
        return mean(std::move(values));
    }

    double best_unit_aggregate() const {
        double best = 0.0;
        bool first = true;
        for (const auto& [id, row] : pareto_.scores) {
            const double v = unit_aggregate(id);
            if (first || v > best) {
                best = v;
                first = false;
            }
        }
        return best;
    }

    CandidateId best_by_unit_aggregate() const {
        std::optional<CandidateId> best;
        double best_value = 0.0;
        for (const auto& [id, row] : pareto_.scores) {
            const double v = unit_aggregate(id);
            if (!best || v > best_value) {
                best = id;
                best_value = v;
            }
        }
        return *best;
    }

    /// Candidates holding a complete val record set, ranked by val mean.
    std::optional<CandidateId> best_by_val_aggregate() const {
        std::optional<CandidateId> best;
        double best_value = 0.0;
        for (const auto& [id, cand] : candidates_) {
            if (!pareto_.scores.contains(id)) continue;
            double sum = 0.0;
            bool complete = true;
            for (const auto& e : val_) {
                auto it = records_.find({id, ObjectiveId::per_example(e.id)});
                if (it == records_.end()) {
                    complete = false;
                    break;
                }
                sum += it->second.score;
            }
            if (!complete) continue;
            const double v = sum / static_cast<double>(val_.size());
            if (!best || v > best_value) {
                best = id;
                best_value = v;
            }
        }
        return best;
    }

    OptimizationResult build_result() const {
        OptimizationResult result;
        result.mode = mode_;
        result.summary = summary_;
        result.budget_consumed = budget_.consumed;
        result.trajectory = trajectory_;
        result.best_aggregate_series = series_;

        if (pareto_.empty()) {
            // budget 0: the seed is returned unevaluated
            if (!candidates_.empty()) result.best = candidates_.begin()->second;
            return result;
        }

        if (mode_ == Mode::MultiTask) {
            for (std::size_t j = 0; j < pareto_.objectives.size(); ++j) {
                const ObjectiveId& obj = pareto_.objectives[j];
                if (obj.kind != ObjectiveId::Kind::PerExample) continue;
                const CandidateId id = best_candidate(pareto_, obj);
                result.best_per_example.emplace(obj.example_id, candidates_.at(id));
                result.final_scores.emplace_back(obj.key(), pareto_.scores.at(id)[j]);
            }
            return result;
        }

        CandidateId best_id;
        if (mode_ == Mode::Generalization) {
            const auto val_best = best_by_val_aggregate();
            best_id = val_best ? *val_best : best_by_unit_aggregate();
            result.best = candidates_.at(best_id);
            for (const auto& e : val_) {
                auto it = records_.find({best_id, ObjectiveId::per_example(e.id)});
                if (it != records_.end())
                    result.val_scores.emplace_back(it->second.objective.key(), it->second.score);
            }
        } else {
            best_id = best_by_unit_aggregate();
            result.best = candidates_.at(best_id);
        }
        const auto& row = pareto_.scores.at(best_id);
        for (std::size_t j = 0; j < pareto_.objectives.size(); ++j)
            result.final_scores.emplace_back(pareto_.objectives[j].key(), row[j]);
        return result;
    }

    EngineConfig config_;
    Evaluator& evaluator_;
    ProposerBackend& proposer_;
    EvaluationHost& host_;
    Mode mode_ = Mode::SingleTask;
    std::vector<Example> train_;
    std::vector<Example> val_;
    Rng rng_;
    Budget budget_;
    std::uint64_t iteration_ = 0;
    std::map<CandidateId, Candidate> candidates_;
    std::map<std::pair<CandidateId, ObjectiveId>, EvaluationRecord> records_;
    ParetoState pareto_;
    std::set<std::string> frontier_texts_;
    TrajectorySummary summary_;
    std::vector<double> series_;
    std::vector<IterationOutcome> trajectory_;
    std::function<void(const IterationOutcome&)> sink_;
    std::optional<std::filesystem::path> checkpoint_path_;
};

} // namespace textevo
