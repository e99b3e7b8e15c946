#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace textevo {

namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

inline std::string_view trim_view(std::string_view s) {
    while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.front())))) s.remove_prefix(1);
    while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.back())))) s.remove_suffix(1);
    return s;
}

inline bool iequals_prefix(std::string_view text, std::string_view prefix) {
    if (text.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(text[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    return true;
}

inline bool is_fence_line(std::string_view line) {
    return trim_view(line).substr(0, 3) == "```";
}

// Conversational framing recognized at the head and tail of a response.
inline constexpr std::array<std::string_view, 6> kLeadingFraming = {
    "here is", "here's", "sure", "certainly", "of course", "below is"};
inline constexpr std::array<std::string_view, 4> kTrailingFraming = {
    "let me know", "hope this helps", "i hope this", "feel free"};

inline bool matches_any(std::string_view line, const auto& prefixes) {
    const std::string_view t = trim_view(line);
    if (t.empty()) return true;  // blank lines are strippable at either end
    for (std::string_view p : prefixes)
        if (iequals_prefix(t, p)) return true;
    return false;
}

struct FencedBlock {
    std::string body;
};

/// Complete fenced blocks, parsed line-wise: the first subsequent fence line
/// closes an open block, so a body never contains a fence line itself.
inline std::vector<FencedBlock> parse_fenced_blocks(const std::vector<std::string>& lines) {
    std::vector<FencedBlock> blocks;
    std::size_t i = 0;
    while (i < lines.size()) {
        if (!is_fence_line(lines[i])) {
            ++i;
            continue;
        }
        std::size_t close = i + 1;
        while (close < lines.size() && !is_fence_line(lines[close])) ++close;
        if (close >= lines.size()) break;  // unclosed trailing fence
        std::string body;
        for (std::size_t k = i + 1; k < close; ++k) {
            if (k > i + 1) body += '\n';
            body += lines[k];
        }
        blocks.push_back({std::move(body)});
        i = close + 1;
    }
    return blocks;
}

inline std::string strip_framing(const std::string& text) {
    auto lines = split_lines(text);
    std::size_t lo = 0;
    std::size_t hi = lines.size();
    while (lo < hi && matches_any(lines[lo], kLeadingFraming)) ++lo;
    while (hi > lo && matches_any(lines[hi - 1], kTrailingFraming)) --hi;
    std::string out;
    for (std::size_t i = lo; i < hi; ++i) {
        if (i > lo) out += '\n';
        out += lines[i];
    }
    return out;
}

} // namespace detail

/// Repairs common generation artifacts before evaluation. If the text holds
/// one or more complete fenced code blocks, the longest block's body wins
/// (language tag stripped); otherwise leading/trailing conversational
/// framing lines are removed. Total and idempotent.
inline std::string refine(const std::string& raw_text) {
    const auto lines = detail::split_lines(raw_text);
    const auto blocks = detail::parse_fenced_blocks(lines);
    std::string text;
    if (blocks.empty()) {
        text = raw_text;
    } else {
        const auto longest = std::max_element(
            blocks.begin(), blocks.end(),
            [](const auto& a, const auto& b) { return a.body.size() < b.body.size(); });
        text = longest->body;
    }
    text = detail::strip_framing(text);
    const std::string_view trimmed = detail::trim_view(text);
    return std::string(trimmed);
}

} // namespace textevo
