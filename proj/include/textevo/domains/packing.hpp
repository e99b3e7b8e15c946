#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <textevo/eval_host.hpp>
#include <textevo/png.hpp>

namespace textevo::domains {

struct Circle {
    double x = 0.0;
    double y = 0.0;
    double r = 0.0;
};

/// Circles to be placed in the unit square.
struct Packing {
    std::vector<Circle> circles;
};

inline constexpr double kPackingTol = 1e-9;

/// Text format: a header line "n=<k>", then k lines "x y r" as decimal
/// literals. Blank lines are allowed anywhere; anything else is a parse
/// error.
inline Packing parse_packing(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
                line.pop_back();
            std::size_t start = 0;
            while (start < line.size() && (line[start] == ' ' || line[start] == '\t')) ++start;
            line = line.substr(start);
            if (!line.empty()) lines.push_back(line);
        }
    }
    if (lines.empty()) throw EvaluatorFailure("packing parse error: empty input");
    if (lines.front().rfind("n=", 0) != 0)
        throw EvaluatorFailure("packing parse error: expected header 'n=<count>'");
    std::size_t count = 0;
    try {
        std::size_t used = 0;
        count = std::stoul(lines.front().substr(2), &used);
        if (used != lines.front().size() - 2) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
        throw EvaluatorFailure("packing parse error: bad circle count in header");
    }
    if (count > 100000) throw EvaluatorFailure("packing parse error: implausible circle count");
    if (lines.size() - 1 != count)
        throw EvaluatorFailure("packing parse error: header declares " + std::to_string(count) +
                               " circles, found " + std::to_string(lines.size() - 1) + " data lines");

    Packing packing;
    packing.circles.reserve(count);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::istringstream ls(lines[i]);
        Circle c;
        std::string extra;
        if (!(ls >> c.x >> c.y >> c.r) || (ls >> extra))
            throw EvaluatorFailure("packing parse error: line " + std::to_string(i + 1) +
                                   " is not 'x y r'");
        if (!std::isfinite(c.x) || !std::isfinite(c.y) || !std::isfinite(c.r))
            throw EvaluatorFailure("packing parse error: non-finite value on line " + std::to_string(i + 1));
        if (c.r <= 0.0)
            throw EvaluatorFailure("packing parse error: radius must be positive on line " +
                                   std::to_string(i + 1));
        packing.circles.push_back(c);
    }
    return packing;
}

inline std::string format_packing(const Packing& packing) {
    std::ostringstream os;
    os << "n=" << packing.circles.size() << '\n';
    for (const auto& c : packing.circles)
        os << json(c.x).dump() << ' ' << json(c.y).dump() << ' ' << json(c.r).dump() << '\n';
    return os.str();
}

struct OverlapViolation {
    std::size_t i = 0;
    std::size_t j = 0;
    double depth = 0.0;  // r_i + r_j - dist, positive means overlap
};

struct BoundaryViolation {
    std::size_t i = 0;
    double excess = 0.0;  // r - min(x, 1-x, y, 1-y), positive means outside
};

struct PackingReport {
    double sum_radii = 0.0;
    double total_overlap = 0.0;
    double total_boundary_excess = 0.0;
    bool valid = true;
    std::vector<OverlapViolation> overlaps;
    std::vector<BoundaryViolation> boundary;
};

/// Checks r_i <= min(x_i, 1-x_i, y_i, 1-y_i) per circle and
/// r_i + r_j <= dist(c_i, c_j) per pair, within the tolerance.
inline PackingReport analyze_packing(const Packing& packing, double tol = kPackingTol) {
    PackingReport report;
    const auto& cs = packing.circles;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        report.sum_radii += cs[i].r;
        const double margin = std::min(std::min(cs[i].x, 1.0 - cs[i].x), std::min(cs[i].y, 1.0 - cs[i].y));
        const double excess = cs[i].r - margin;
        if (excess > tol) {
            report.boundary.push_back({i, excess});
            report.total_boundary_excess += excess;
            report.valid = false;
        }
    }
    for (std::size_t i = 0; i < cs.size(); ++i) {
        for (std::size_t j = i + 1; j < cs.size(); ++j) {
            const double dist = std::hypot(cs[i].x - cs[j].x, cs[i].y - cs[j].y);
            const double depth = cs[i].r + cs[j].r - dist;
            if (depth > tol) {
                report.overlaps.push_back({i, j, depth});
                report.total_overlap += depth;
                report.valid = false;
            }
        }
    }
    return report;
}

/// 512x512 grayscale raster: white background, black circle outlines.
/// Deterministic pixels, so the encoded bytes are stable for tests.
inline std::string render_packing_png(const Packing& packing) {
    constexpr std::uint32_t kSize = 512;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(kSize) * kSize, 255);
    const double band = 0.75 / kSize;
    for (const auto& c : packing.circles) {
        const double lo_x = c.x - c.r - 2.0 * band;
        const double hi_x = c.x + c.r + 2.0 * band;
        const double lo_y = c.y - c.r - 2.0 * band;
        const double hi_y = c.y + c.r + 2.0 * band;
        const auto px_lo = static_cast<long>(std::floor(lo_x * kSize));
        const auto px_hi = static_cast<long>(std::ceil(hi_x * kSize));
        const auto py_lo = static_cast<long>(std::floor(lo_y * kSize));
        const auto py_hi = static_cast<long>(std::ceil(hi_y * kSize));
        for (long py = std::max(0L, py_lo); py <= std::min<long>(kSize - 1, py_hi); ++py) {
            for (long px = std::max(0L, px_lo); px <= std::min<long>(kSize - 1, px_hi); ++px) {
                const double cx = (px + 0.5) / kSize;
                const double cy = (py + 0.5) / kSize;
                const double d = std::hypot(cx - c.x, cy - c.y);
                if (std::abs(d - c.r) <= band)
                    pixels[static_cast<std::size_t>(kSize - 1 - py) * kSize + static_cast<std::size_t>(px)] = 0;
            }
        }
    }
    return encode_png_gray8(pixels, kSize, kSize);
}

/// Scores a serialized packing: the sum of radii when valid, otherwise the
/// sum minus penalty * (total overlap depth + total boundary excess) so that
/// infeasible packings still see a gradient toward feasibility. Side
/// information carries the violations, the circle table and a rendered
/// image.
inline std::pair<double, SideInfo> score_packing(const std::string& candidate_text,
                                                 std::size_t expected_circles = 26, double penalty = 10.0) {
    const Packing packing = parse_packing(candidate_text);
    if (expected_circles != 0 && packing.circles.size() != expected_circles)
        throw EvaluatorFailure("packing has " + std::to_string(packing.circles.size()) +
                               " circles, expected " + std::to_string(expected_circles));
    const PackingReport report = analyze_packing(packing);
    const double score =
        report.valid ? report.sum_radii
                     : report.sum_radii - penalty * (report.total_overlap + report.total_boundary_excess);

    SideInfo si;
    si.add("valid", static_cast<double>(report.valid ? 1 : 0));
    si.add("sum_radii", report.sum_radii);
    si.add("scores", SubScores{{"sum_radii", report.sum_radii},
                               {"feasibility", -(report.total_overlap + report.total_boundary_excess)}});
    {
        std::vector<TableRow> rows;
        for (const auto& v : report.overlaps)
            rows.push_back({{"i", std::to_string(v.i)},
                            {"j", std::to_string(v.j)},
                            {"depth", json(v.depth).dump()}});
        si.add("overlaps", rows);
    }
    {
        std::vector<TableRow> rows;
        for (const auto& v : report.boundary)
            rows.push_back({{"i", std::to_string(v.i)}, {"excess", json(v.excess).dump()}});
        si.add("boundary_violations", rows);
    }
    {
        std::vector<TableRow> rows;
        for (std::size_t i = 0; i < packing.circles.size(); ++i) {
            const auto& c = packing.circles[i];
            rows.push_back({{"i", std::to_string(i)},
                            {"x", json(c.x).dump()},
                            {"y", json(c.y).dump()},
                            {"r", json(c.r).dump()}});
        }
        si.add("circles", rows);
    }
    si.add("image", ImageRef{"image/png", {}, render_packing_png(packing)});
    return {score, si};
}

/// Single-task evaluator over serialized packings. The expected circle count
/// and penalty are part of the cache version string, so reconfiguring the
/// evaluator never reuses stale entries.
class PackingEvaluator : public Evaluator {
public:
    explicit PackingEvaluator(std::size_t expected_circles = 26, double penalty = 10.0)
        : expected_(expected_circles), penalty_(penalty) {}

    std::string identity() const override { return "circle-packing"; }
    std::string version() const override {
        return "1;n=" + std::to_string(expected_) + ";penalty=" + json(penalty_).dump();
    }

    EvalOutcome run(const EvaluationRequest& req, const Example*) override {
        EvalOutcome out;
        auto [score, si] = score_packing(req.candidate_text, expected_, penalty_);
        out.score = score;
        out.side_info = std::move(si);
        return out;
    }

private:
    std::size_t expected_;
    double penalty_;
};

} // namespace textevo::domains
