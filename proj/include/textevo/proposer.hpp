#pragma once

#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <textevo/core.hpp>
#include <textevo/refine.hpp>

namespace textevo {

inline constexpr const char* kPromptTemplateId = "reflection-v1";

/// Everything the proposer sees about one minibatch element.
struct MinibatchItem {
    std::string example_summary;  // empty for the bare scalar objective
    double score = 0.0;
    SideInfo side_info;
};

/// Input to one reflection step.
struct ReflectionContext {
    std::string parent_text;
    std::optional<std::string> objective_text;
    std::optional<std::string> background_text;
    std::vector<MinibatchItem> minibatch;  // nonempty except in bootstrap calls
    std::optional<std::string> frontier_digest;
    bool bootstrap = false;
};

struct ProposerResponse {
    std::string raw_text;
    std::string refined_text;
    bool refiner_applied = false;
};

namespace detail {

inline std::string render_number(double v) { return json(v).dump(); }

inline std::string render_side_info_value(const SideInfoValue& value) {
    if (const auto* s = std::get_if<std::string>(&value)) return *s;
    if (const auto* d = std::get_if<double>(&value)) return render_number(*d);
    if (const auto* rows = std::get_if<std::vector<TableRow>>(&value)) {
        std::ostringstream os;
        for (std::size_t i = 0; i < rows->size(); ++i) {
            if (i) os << '\n';
            os << "  - ";
            const auto& row = (*rows)[i];
            for (std::size_t k = 0; k < row.size(); ++k) {
                if (k) os << ", ";
                os << row[k].first << '=' << row[k].second;
            }
        }
        return os.str();
    }
    if (const auto* subs = std::get_if<SubScores>(&value)) {
        std::ostringstream os;
        bool first = true;
        for (const auto& [name, v] : *subs) {
            if (!first) os << ", ";
            os << name << '=' << render_number(v);
            first = false;
        }
        return os.str();
    }
    if (const auto* img = std::get_if<ImageRef>(&value))
        return "[image attachment: " + img->media_type + "]";
    return {};
}

} // namespace detail

/// Deterministic reflection prompt: fixed section order, sections omitted
/// when absent, side information rendered in insertion order, scores with
/// full round-trip precision. Image entries become attachment placeholders;
/// the actual payloads travel separately for multimodal backends.
inline std::string render_reflection_prompt(const ReflectionContext& ctx) {
    std::ostringstream os;
    if (ctx.objective_text && !ctx.objective_text->empty())
        os << "# Objective\n" << *ctx.objective_text << "\n\n";
    if (ctx.background_text && !ctx.background_text->empty())
        os << "# Background\n" << *ctx.background_text << "\n\n";
    if (ctx.bootstrap) {
        os << "# Task\n"
           << "Write an initial artifact that addresses the objective above.\n\n"
           << "# Instructions\n"
           << "Respond with only the artifact, inside a single fenced code block.\n";
        return os.str();
    }
    os << "# Current artifact\n" << ctx.parent_text << "\n\n";
    if (!ctx.minibatch.empty()) {
        os << "# Evaluation feedback\n";
        for (std::size_t i = 0; i < ctx.minibatch.size(); ++i) {
            const auto& item = ctx.minibatch[i];
            os << "## " << (item.example_summary.empty() ? "Evaluation" : item.example_summary)
               << " (score: " << detail::render_number(item.score) << ")\n";
            for (const auto& [name, value] : item.side_info.entries())
                os << "- " << name << ": " << detail::render_side_info_value(value) << '\n';
            os << '\n';
        }
    }
    if (ctx.frontier_digest && !ctx.frontier_digest->empty())
        os << "# Other strong candidates\n" << *ctx.frontier_digest << "\n\n";
    os << "# Instructions\n"
       << "Diagnose why the artifact scored as it did, then improve it. "
       << "Respond with only the improved artifact, inside a single fenced code block.\n";
    return os.str();
}

/// Collects the image payloads referenced by the minibatch side information.
inline std::vector<ImageRef> prompt_attachments(const ReflectionContext& ctx) {
    std::vector<ImageRef> attachments;
    for (const auto& item : ctx.minibatch)
        for (const auto& [name, value] : item.side_info.entries())
            if (const auto* img = std::get_if<ImageRef>(&value)) attachments.push_back(*img);
    return attachments;
}

/// A proposer backend turns a rendered prompt (plus the structured context,
/// which scripted test backends consume directly) into raw model text.
/// Transport problems raise TransportFailure and are retried by propose().
class ProposerBackend {
public:
    virtual ~ProposerBackend() = default;
    virtual bool supports_attachments() const { return false; }
    virtual std::string complete(const ReflectionContext& ctx, const std::string& prompt) = 0;
};

/// Deterministic backend driven by a plain function; the workhorse of the
/// offline tests and the bench domains.
class ScriptedBackend : public ProposerBackend {
public:
    using Fn = std::function<std::string(const ReflectionContext&)>;

    explicit ScriptedBackend(Fn fn) : fn_(std::move(fn)) {}

    std::string complete(const ReflectionContext& ctx, const std::string&) override { return fn_(ctx); }

private:
    Fn fn_;
};

/// Replays a recorded request/response log. Each call must match the next
/// recorded prompt byte-for-byte; divergence is a transport failure.
class ReplayBackend : public ProposerBackend {
public:
    explicit ReplayBackend(const std::string& log_path) {
        std::ifstream in(log_path, std::ios::binary);
        if (!in) throw ConfigError("replay log unreadable: " + log_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("prompt") || !j.contains("response"))
                throw ConfigError("replay log malformed: " + log_path);
            entries_.push_back({j.at("prompt").get<std::string>(), j.at("response").get<std::string>()});
        }
    }

    std::string complete(const ReflectionContext&, const std::string& prompt) override {
        if (entries_.empty()) throw TransportFailure("replay log exhausted");
        auto [recorded_prompt, response] = entries_.front();
        if (recorded_prompt != prompt)
            throw TransportFailure("replay log diverged from the live prompt");
        entries_.pop_front();
        return response;
    }

    std::size_t remaining() const { return entries_.size(); }

private:
    std::deque<std::pair<std::string, std::string>> entries_;
};

/// Mirrors every request/response pair of an inner backend to a JSONL log so
/// a run can later be replayed without the backend. The log is opened on the
/// first call, so merely constructing the backend (config validation) leaves
/// no file behind.
class RecordingBackend : public ProposerBackend {
public:
    RecordingBackend(std::unique_ptr<ProposerBackend> inner, std::string log_path)
        : inner_(std::move(inner)), log_path_(std::move(log_path)) {}

    bool supports_attachments() const override { return inner_->supports_attachments(); }

    std::string complete(const ReflectionContext& ctx, const std::string& prompt) override {
        const std::string response = inner_->complete(ctx, prompt);
        if (!log_.is_open()) {
            log_.open(log_path_, std::ios::binary | std::ios::app);
            if (!log_) throw ConfigError("record log unwritable: " + log_path_);
        }
        json j;
        j["prompt"] = prompt;
        j["response"] = response;
        log_ << j.dump() << '\n';
        log_.flush();
        return response;
    }

private:
    std::unique_ptr<ProposerBackend> inner_;
    std::string log_path_;
    std::ofstream log_;
};

/// One reflection step: render, call the backend (with retries on transport
/// failure), refine. An empty refined text is a proposer failure.
inline ProposerResponse propose(const ReflectionContext& ctx, ProposerBackend& backend, unsigned retries = 2) {
    const std::string prompt = render_reflection_prompt(ctx);
    std::string raw;
    for (unsigned attempt = 0;; ++attempt) {
        try {
            raw = backend.complete(ctx, prompt);
            break;
        } catch (const TransportFailure& e) {
            if (attempt >= retries)
                throw ProposerFailure(std::string("transport failed after retries: ") + e.what());
        }
    }
    ProposerResponse resp;
    resp.raw_text = raw;
    resp.refined_text = refine(raw);
    resp.refiner_applied = resp.refined_text != raw;
    if (resp.refined_text.empty()) throw ProposerFailure("proposer returned an empty artifact");
    return resp;
}

namespace scripted {

/// Reads the lowest-scoring minibatch item's "first_mismatch" position and
/// "expected" character and applies the one-character fix to the parent.
/// Pairs with the string-task evaluators to drive fully offline runs.
inline ScriptedBackend::Fn prefix_fixer() {
    return [](const ReflectionContext& ctx) -> std::string {
        if (ctx.minibatch.empty()) return ctx.parent_text;
        const MinibatchItem* worst = &ctx.minibatch.front();
        for (const auto& item : ctx.minibatch)
            if (item.score < worst->score) worst = &item;
        const auto* mismatch = worst->side_info.find("first_mismatch");
        const auto* expected = worst->side_info.find("expected");
        const auto* pos = mismatch ? std::get_if<double>(mismatch) : nullptr;
        const auto* ch = expected ? std::get_if<std::string>(expected) : nullptr;
        if (!pos || *pos < 0 || !ch) return ctx.parent_text;
        const auto cut = std::min<std::size_t>(static_cast<std::size_t>(*pos), ctx.parent_text.size());
        return ctx.parent_text.substr(0, cut) + *ch;  // empty expected truncates
    };
}

/// Emits a fixed sequence of texts, then repeats the last one.
inline ScriptedBackend::Fn fixed_sequence(std::vector<std::string> texts) {
    auto index = std::make_shared<std::size_t>(0);
    return [texts = std::move(texts), index](const ReflectionContext&) -> std::string {
        if (texts.empty()) return {};
        const std::string& out = texts[std::min(*index, texts.size() - 1)];
        ++*index;
        return out;
    };
}

/// Appends a literal to the parent on every call.
inline ScriptedBackend::Fn append_literal(std::string suffix) {
    return [suffix = std::move(suffix)](const ReflectionContext& ctx) { return ctx.parent_text + suffix; };
}

} // namespace scripted

} // namespace textevo
