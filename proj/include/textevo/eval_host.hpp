#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <textevo/cache.hpp>
#include <textevo/core.hpp>
#include <textevo/subprocess.hpp>

namespace textevo {

struct EvaluationRequest {
    std::string candidate_text;
    std::optional<Example> example;
    bool capture_stdio = true;
    std::chrono::milliseconds timeout{300000};
};

/// What an evaluator hands back. Captured stdio is only populated on the
/// subprocess path; in-process capture is best-effort and not provided here.
struct EvalOutcome {
    double score = 0.0;
    SideInfo side_info;
    std::string captured_stdout;
    std::string captured_stderr;
};

/// User-supplied scoring function. Identity and version participate in the
/// cache key, so bumping the version invalidates stale entries by
/// construction. Failures are signalled by throwing; the host floors them.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual std::string identity() const = 0;
    virtual std::string version() const = 0;
    virtual EvalOutcome run(const EvaluationRequest& req, const Example* example) = 0;
};

class FunctionEvaluator : public Evaluator {
public:
    using Fn = std::function<EvalOutcome(const std::string&, const Example*)>;

    FunctionEvaluator(std::string identity, std::string version, Fn fn)
        : identity_(std::move(identity)), version_(std::move(version)), fn_(std::move(fn)) {}

    std::string identity() const override { return identity_; }
    std::string version() const override { return version_; }
    EvalOutcome run(const EvaluationRequest& req, const Example* example) override {
        return fn_(req.candidate_text, example);
    }

private:
    std::string identity_;
    std::string version_;
    Fn fn_;
};

namespace detail {

/// Maps one user-level side_info value from the subprocess reply onto the
/// typed SideInfo primitive. Accepts both the shorthand forms (string,
/// number, object of numbers, array of objects) and the full tagged form.
inline SideInfoValue user_value_to_side_info(const nlohmann::ordered_json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.get<double>();
    if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
    if (v.is_object()) {
        if (v.contains("kind") && v.at("kind").is_string())
            return SideInfo::value_from_json(json::parse(v.dump()));
        if (v.contains("media_type") && v.at("media_type").is_string()) {
            ImageRef img;
            img.media_type = v.at("media_type").get<std::string>();
            if (v.contains("path")) img.path = v.at("path").get<std::string>();
            if (v.contains("data")) img.data = detail::base64_decode(v.at("data").get<std::string>());
            return img;
        }
        bool all_numbers = !v.empty();
        for (const auto& [k, sub] : v.items())
            if (!sub.is_number()) all_numbers = false;
        if (all_numbers) {
            SubScores subs;
            for (const auto& [k, sub] : v.items()) subs[k] = sub.get<double>();
            return subs;
        }
        return v.dump();
    }
    if (v.is_array()) {
        bool table_like = !v.empty();
        for (const auto& row : v)
            if (!row.is_object()) table_like = false;
        if (table_like) {
            std::vector<TableRow> rows;
            for (const auto& row : v) {
                TableRow r;
                for (const auto& [k, cell] : row.items())
                    r.emplace_back(k, cell.is_string() ? cell.get<std::string>() : cell.dump());
                rows.push_back(std::move(r));
            }
            return rows;
        }
        return v.dump();
    }
    return v.dump();
}

inline SideInfo side_info_from_user_json(const nlohmann::ordered_json& j) {
    SideInfo si;
    if (j.is_null()) return si;
    if (!j.is_object()) throw EvaluatorFailure("side_info must be an object");
    for (const auto& [name, value] : j.items())
        if (!si.contains(name)) si.add(name, user_value_to_side_info(value));
    return si;
}

} // namespace detail

/// Runs an evaluator program over the line-delimited protocol: one request
/// line on the child's stdin, one reply line {"score": ..., "side_info":
/// {...}} on its stdout. The reply is the last stdout line parsing as a JSON
/// object with a numeric "score"; everything else is non-protocol output and
/// is captured. Nonzero exit or a missing reply is an evaluator failure.
class SubprocessEvaluator : public Evaluator {
public:
    SubprocessEvaluator(std::vector<std::string> argv, std::string identity, std::string version)
        : argv_(std::move(argv)), identity_(std::move(identity)), version_(std::move(version)) {
        if (argv_.empty()) throw ConfigError("subprocess evaluator needs a program path");
    }

    std::string identity() const override { return identity_; }
    std::string version() const override { return version_; }

    EvalOutcome run(const EvaluationRequest& req, const Example* example) override {
        json request;
        request["schema_version"] = kSchemaVersion;
        request["candidate_text"] = req.candidate_text;
        request["example"] = example ? example->to_json() : json(nullptr);
        request["capture_stdio"] = req.capture_stdio;
        request["timeout_ms"] = req.timeout.count();

        const SubprocessResult res = run_subprocess(argv_, request.dump() + "\n", req.timeout);
        if (res.timed_out)
            throw EvaluatorFailure("timeout", res.stdout_data, res.stderr_data);

        std::vector<std::string> lines;
        {
            std::istringstream is(res.stdout_data);
            std::string line;
            while (std::getline(is, line)) lines.push_back(line);
        }
        std::optional<std::size_t> reply_index;
        nlohmann::ordered_json reply;
        for (std::size_t i = lines.size(); i-- > 0;) {
            auto j = nlohmann::ordered_json::parse(lines[i], nullptr, false);
            if (!j.is_discarded() && j.is_object() && j.contains("score") && j.at("score").is_number()) {
                reply_index = i;
                reply = std::move(j);
                break;
            }
        }
        std::string rest;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (reply_index && i == *reply_index) continue;
            rest += lines[i];
            rest += '\n';
        }

        if (res.signaled)
            throw EvaluatorFailure("evaluator killed by signal " + std::to_string(res.term_signal), rest,
                                   res.stderr_data);
        if (!reply_index)
            throw EvaluatorFailure("protocol violation: no reply line (exit status " +
                                       std::to_string(res.exit_code) + ")",
                                   rest, res.stderr_data);
        if (res.exit_code != 0)
            throw EvaluatorFailure("evaluator exited with status " + std::to_string(res.exit_code), rest,
                                   res.stderr_data);

        EvalOutcome out;
        out.score = reply.at("score").get<double>();
        if (reply.contains("side_info")) {
            try {
                out.side_info = detail::side_info_from_user_json(reply.at("side_info"));
            } catch (const std::exception& e) {
                throw EvaluatorFailure(std::string("malformed side_info: ") + e.what(), rest, res.stderr_data);
            }
        }
        out.captured_stdout = rest;
        out.captured_stderr = res.stderr_data;
        return out;
    }

private:
    std::vector<std::string> argv_;
    std::string identity_;
    std::string version_;
};

/// Executes evaluations behind the content-addressed cache, floors failures,
/// captures stdio into side information and accounts for the budget. Safe to
/// call concurrently for distinct requests.
class EvaluationHost {
public:
    explicit EvaluationHost(EvalCache& cache, double floor_score = 0.0,
                            std::size_t si_cap_bytes = 256 * 1024)
        : cache_(cache), floor_(floor_score), si_cap_(si_cap_bytes) {}

    double floor_score() const { return floor_; }
    std::uint64_t invocations() const { return invocations_.load(); }

    /// One evaluation. A cache hit returns the stored evidence rebound to the
    /// requesting candidate with from_cache=true and charges nothing; a miss
    /// executes the evaluator, charges one call, and persists the record
    /// before returning.
    EvaluationRecord evaluate(CandidateId candidate_id, const EvaluationRequest& req, Evaluator& evaluator,
                              Budget* budget = nullptr) {
        const Example* example = req.example ? &*req.example : nullptr;
        const ObjectiveId objective =
            example ? ObjectiveId::per_example(example->id) : ObjectiveId::scalar();
        const std::string digest =
            cache_key_digest(req.candidate_text, example, evaluator.identity(), evaluator.version());

        if (auto cached = cache_.lookup(digest)) {
            EvaluationRecord r = *cached;
            r.candidate_id = candidate_id;
            r.objective = objective;
            r.from_cache = true;
            return r;
        }

        if (budget) {
            std::lock_guard lock(budget_mu_);
            if (budget->exhausted())
                throw BudgetExhausted("no budget left for evaluation");
            budget->charge();
        }
        invocations_.fetch_add(1);

        EvaluationRecord record;
        record.candidate_id = candidate_id;
        record.objective = objective;
        record.evaluator_calls = 1;
        record.from_cache = false;

        const auto t0 = std::chrono::steady_clock::now();
        std::string captured_out, captured_err;
        try {
            EvalOutcome out = evaluator.run(req, example);
            captured_out = std::move(out.captured_stdout);
            captured_err = std::move(out.captured_stderr);
            if (!std::isfinite(out.score)) {
                record.score = floor_;
                record.side_info.add("Error", std::string("non-finite score from evaluator"));
            } else {
                record.score = out.score;
                record.side_info = std::move(out.side_info);
            }
        } catch (const SpawnFailure&) {
            // never floored: the evaluator was not actually invoked
            std::lock_guard lock(budget_mu_);
            if (budget) --budget->consumed;
            invocations_.fetch_sub(1);
            throw;
        } catch (const EvaluatorFailure& e) {
            record.score = floor_;
            record.side_info.add("Error", std::string(e.what()));
            captured_out = e.stdout_text;
            captured_err = e.stderr_text;
        } catch (const std::exception& e) {
            record.score = floor_;
            record.side_info.add("Error", std::string(e.what()));
        }
        record.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - t0);

        if (req.capture_stdio) {
            if (!captured_out.empty()) record.side_info.set("stdout", captured_out);
            if (!captured_err.empty()) record.side_info.set("stderr", captured_err);
        }
        record.side_info = cap_side_info(std::move(record.side_info), si_cap_);

        cache_.store(digest, record);
        return record;
    }

    /// Evaluates one candidate on every unit (nullptr = the bare scalar).
    /// Atomic against the budget: refuses before dispatch when the remaining
    /// budget cannot cover every uncached unit. Output is ordered by
    /// objective id regardless of completion order or parallelism.
    std::vector<EvaluationRecord> evaluate_full(CandidateId candidate_id, const std::string& candidate_text,
                                                std::vector<const Example*> units, Evaluator& evaluator,
                                                Budget* budget, unsigned parallelism = 1,
                                                bool capture_stdio = true,
                                                std::chrono::milliseconds timeout = std::chrono::milliseconds(300000)) {
        if (units.empty()) throw ContractViolation("evaluate_full: empty objective set");
        std::sort(units.begin(), units.end(), [](const Example* a, const Example* b) {
            const ObjectiveId oa = a ? ObjectiveId::per_example(a->id) : ObjectiveId::scalar();
            const ObjectiveId ob = b ? ObjectiveId::per_example(b->id) : ObjectiveId::scalar();
            return oa < ob;
        });

        if (budget) {
            std::uint64_t uncached = 0;
            for (const Example* ex : units) {
                const std::string digest =
                    cache_key_digest(candidate_text, ex, evaluator.identity(), evaluator.version());
                if (!cache_.contains(digest)) ++uncached;
            }
            std::lock_guard lock(budget_mu_);
            if (budget->remaining() < uncached)
                throw BudgetExhausted("full evaluation needs " + std::to_string(uncached) +
                                      " uncached calls, only " + std::to_string(budget->remaining()) +
                                      " left");
        }

        std::vector<EvaluationRecord> results(units.size());
        std::vector<std::exception_ptr> failures(units.size());
        std::atomic<std::size_t> next{0};
        const unsigned workers = std::max(1u, std::min<unsigned>(parallelism, units.size()));

        auto work = [&] {
            for (std::size_t i = next.fetch_add(1); i < units.size(); i = next.fetch_add(1)) {
                try {
                    EvaluationRequest req;
                    req.candidate_text = candidate_text;
                    if (units[i]) req.example = *units[i];
                    req.capture_stdio = capture_stdio;
                    req.timeout = timeout;
                    results[i] = evaluate(candidate_id, req, evaluator, budget);
                } catch (...) {
                    failures[i] = std::current_exception();
                }
            }
        };

        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> threads;
            for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work);
            for (auto& t : threads) t.join();
        }
        for (const auto& f : failures)
            if (f) std::rethrow_exception(f);
        return results;
    }

private:
    EvalCache& cache_;
    double floor_;
    std::size_t si_cap_;
    std::atomic<std::uint64_t> invocations_{0};
    std::mutex budget_mu_;
};

} // namespace textevo
