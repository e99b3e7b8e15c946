#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <textevo/eval_host.hpp>
#include <textevo/rng.hpp>

namespace textevo::domains {

enum class StringScorer { CharCount, PrefixMatchLen, EditSimilarity };

inline std::string to_string(StringScorer s) {
    switch (s) {
        case StringScorer::CharCount: return "char_count";
        case StringScorer::PrefixMatchLen: return "prefix_match_len";
        case StringScorer::EditSimilarity: return "edit_similarity";
    }
    throw ContractViolation("unknown StringScorer");
}

inline StringScorer string_scorer_from_string(const std::string& s) {
    if (s == "char_count") return StringScorer::CharCount;
    if (s == "prefix_match_len") return StringScorer::PrefixMatchLen;
    if (s == "edit_similarity") return StringScorer::EditSimilarity;
    throw ConfigError("unknown string scorer '" + s + "'");
}

/// A deterministic toy task: reproduce (or approach) a target string under
/// one of three scorers. char_count normalizes by the target's own count of
/// the counted character, so the target is always a maximal candidate.
struct StringTask {
    std::string target;
    StringScorer scorer = StringScorer::PrefixMatchLen;
    char count_char = 'a';

    void validate() const {
        if (target.empty()) throw ConfigError("string task target must be nonempty");
        if (scorer == StringScorer::CharCount &&
            std::count(target.begin(), target.end(), count_char) == 0)
            throw ConfigError("char_count target must contain the counted character");
    }

    json to_payload() const {
        json j;
        j["scorer"] = to_string(scorer);
        j["target"] = target;
        if (scorer == StringScorer::CharCount) j["char"] = std::string(1, count_char);
        return j;
    }

    static StringTask from_payload(const json& payload) {
        StringTask task;
        task.target = payload.at("target").get<std::string>();
        task.scorer = string_scorer_from_string(payload.at("scorer").get<std::string>());
        if (payload.contains("char")) {
            const auto s = payload.at("char").get<std::string>();
            if (s.size() != 1) throw ConfigError("string task 'char' must be a single character");
            task.count_char = s[0];
        }
        task.validate();
        return task;
    }
};

inline std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Scores a candidate against a task and reports the first mismatch position
/// plus a short per-position diff, which is what gives a proposer something
/// actionable to act on.
inline std::pair<double, SideInfo> score_string(const std::string& candidate, const StringTask& task) {
    task.validate();
    const std::string& target = task.target;

    std::size_t match_len = 0;
    while (match_len < candidate.size() && match_len < target.size() &&
           candidate[match_len] == target[match_len])
        ++match_len;
    const bool exact = candidate == target;
    const double first_mismatch = exact ? -1.0 : static_cast<double>(match_len);

    double score = 0.0;
    switch (task.scorer) {
        case StringScorer::PrefixMatchLen:
            score = static_cast<double>(match_len) / static_cast<double>(target.size());
            break;
        case StringScorer::CharCount: {
            const auto cap = static_cast<std::size_t>(
                std::count(target.begin(), target.end(), task.count_char));
            const auto have = static_cast<std::size_t>(
                std::count(candidate.begin(), candidate.end(), task.count_char));
            score = static_cast<double>(std::min(have, cap)) / static_cast<double>(cap);
            break;
        }
        case StringScorer::EditSimilarity: {
            const std::size_t denom = std::max(candidate.size(), target.size());
            score = 1.0 - static_cast<double>(levenshtein(candidate, target)) / static_cast<double>(denom);
            break;
        }
    }

    std::string expected_char;
    if (!exact && match_len < target.size()) expected_char = std::string(1, target[match_len]);

    SideInfo si;
    si.add("first_mismatch", first_mismatch);
    si.add("expected", expected_char);  // empty means "truncate here"
    si.add("match_len", static_cast<double>(match_len));
    si.add("target_len", static_cast<double>(target.size()));
    {
        std::vector<TableRow> rows;
        const std::size_t span = std::max(candidate.size(), target.size());
        for (std::size_t i = 0; i < span && rows.size() < 5; ++i) {
            const std::string expected = i < target.size() ? std::string(1, target[i]) : std::string();
            const std::string actual = i < candidate.size() ? std::string(1, candidate[i]) : std::string();
            if (expected != actual)
                rows.push_back({{"pos", std::to_string(i)}, {"expected", expected}, {"actual", actual}});
        }
        si.add("diff", rows);
    }
    return {score, si};
}

/// Evaluator over string tasks. When an example is present its payload
/// defines the task; otherwise the fixed default task applies (single-task
/// runs). The default task is folded into the version string so differently
/// configured evaluators never share cache entries.
class StringTaskEvaluator : public Evaluator {
public:
    StringTaskEvaluator() = default;
    explicit StringTaskEvaluator(StringTask default_task) : default_task_(std::move(default_task)) {
        default_task_->validate();
    }

    std::string identity() const override { return "string-task"; }
    std::string version() const override {
        return default_task_ ? "1;" + default_task_->to_payload().dump() : "1";
    }

    EvalOutcome run(const EvaluationRequest& req, const Example* example) override {
        StringTask task;
        if (example) {
            task = StringTask::from_payload(example->payload);
        } else if (default_task_) {
            task = *default_task_;
        } else {
            throw EvaluatorFailure("string-task evaluator needs an example or a default task");
        }
        EvalOutcome out;
        auto [score, si] = score_string(req.candidate_text, task);
        out.score = score;
        out.side_info = std::move(si);
        return out;
    }

private:
    std::optional<StringTask> default_task_;
};

/// k related prefix-match tasks sharing a common prefix, deterministic given
/// (k, seed). Example ids run 0..k-1.
inline std::vector<Example> make_multitask_suite(std::size_t k, std::uint64_t seed = 0) {
    if (k < 2) throw ConfigError("multitask suite needs k >= 2");
    Rng rng(seed);
    std::vector<std::string> suffixes;
    while (suffixes.size() < k) {
        std::string suffix;
        for (int i = 0; i < 4; ++i) suffix.push_back(static_cast<char>('a' + rng.below(26)));
        if (std::find(suffixes.begin(), suffixes.end(), suffix) == suffixes.end())
            suffixes.push_back(suffix);
    }
    std::vector<Example> examples;
    for (std::size_t i = 0; i < k; ++i) {
        StringTask task;
        task.target = "probe-" + suffixes[i];
        task.scorer = StringScorer::PrefixMatchLen;
        Example e;
        e.id = i;
        e.payload = task.to_payload();
        e.split = Split::Train;
        examples.push_back(std::move(e));
    }
    return examples;
}

/// k train plus m val tasks drawn from the same family; val targets never
/// appear in train. Val example ids continue after the train ids.
inline std::pair<std::vector<Example>, std::vector<Example>> make_generalization_suite(std::size_t k,
                                                                                       std::size_t m,
                                                                                       std::uint64_t seed = 0) {
    if (m < 1) throw ConfigError("generalization suite needs m >= 1");
    auto all = make_multitask_suite(k + m, seed);
    std::vector<Example> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<Example> val(all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    for (auto& e : val) e.split = Split::Val;
    return {std::move(train), std::move(val)};
}

} // namespace textevo::domains
