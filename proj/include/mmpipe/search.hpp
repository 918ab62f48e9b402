#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmpipe/core.hpp"
#include "mmpipe/errors.hpp"
#include "mmpipe/resolution.hpp"

namespace mmpipe {

// Test-time resolution search space: every (min_pixels, max_pixels) pair from
// the two axes. Defaults are {4,16,32,64} and {1280,2048,2560,3072,4096,8192}
// grid cells of 28x28 pixels, 24 configurations in total.
struct ResolutionGrid {
    std::vector<std::uint64_t> min_values = {4 * kPatchPixels * kPatchPixels,
                                             16 * kPatchPixels * kPatchPixels,
                                             32 * kPatchPixels * kPatchPixels,
                                             64 * kPatchPixels * kPatchPixels};
    std::vector<std::uint64_t> max_values = {1280 * kPatchPixels * kPatchPixels,
                                             2048 * kPatchPixels * kPatchPixels,
                                             2560 * kPatchPixels * kPatchPixels,
                                             3072 * kPatchPixels * kPatchPixels,
                                             4096 * kPatchPixels * kPatchPixels,
                                             8192 * kPatchPixels * kPatchPixels};
};

struct GridPoint {
    std::uint64_t min_pixels = 0;
    std::uint64_t max_pixels = 0;

    bool operator==(const GridPoint&) const = default;
};

// Canonical surface order: max_pixels ascending, then min_pixels ascending.
struct GridPointLess {
    bool operator()(const GridPoint& a, const GridPoint& b) const {
        if (a.max_pixels != b.max_pixels) return a.max_pixels < b.max_pixels;
        return a.min_pixels < b.min_pixels;
    }
};

/// Cartesian product of the grid axes, ordered by (max ascending, min
/// ascending). Axis values are deduplicated and sorted first.
inline std::vector<GridPoint> enumerate_grid(const ResolutionGrid& grid) {
    if (grid.min_values.empty()) throw ValidationError("grid min_pixels axis is empty");
    if (grid.max_values.empty()) throw ValidationError("grid max_pixels axis is empty");
    std::vector<std::uint64_t> mins = grid.min_values;
    std::vector<std::uint64_t> maxs = grid.max_values;
    std::sort(mins.begin(), mins.end());
    mins.erase(std::unique(mins.begin(), mins.end()), mins.end());
    std::sort(maxs.begin(), maxs.end());
    maxs.erase(std::unique(maxs.begin(), maxs.end()), maxs.end());
    for (std::uint64_t v : mins)
        if (v == 0) throw ValidationError("grid values must be positive");
    if (mins.back() > maxs.front())
        throw ValidationError("grid min_pixels value " + std::to_string(mins.back()) +
                              " exceeds max_pixels value " + std::to_string(maxs.front()));

    std::vector<GridPoint> points;
    points.reserve(mins.size() * maxs.size());
    for (std::uint64_t mx : maxs)
        for (std::uint64_t mn : mins) points.push_back(GridPoint{mn, mx});
    return points;
}

// What one configuration does to the eval manifest: image counts and visual
// token mass after smart_resize. Images with no feasible grid shape count
// toward infeasible_images and contribute zero tokens.
struct ResizeSummary {
    std::uint64_t sample_count = 0;
    std::uint64_t image_count = 0;
    std::uint64_t infeasible_images = 0;
    std::uint64_t total_visual_tokens = 0;
    double mean_visual_tokens = 0.0;  // over all images, infeasible as zero
};

inline ResizeSummary summarize_resize(const std::vector<SampleRecord>& manifest,
                                      const GridPoint& config) {
    ResizeSummary s;
    s.sample_count = manifest.size();
    for (const SampleRecord& rec : manifest) {
        for (const ImageSpec& img : rec.images) {
            ++s.image_count;
            try {
                s.total_visual_tokens +=
                    smart_resize(img, config.min_pixels, config.max_pixels).visual_tokens;
            } catch (const ResizeInfeasibleError&) {
                ++s.infeasible_images;
            }
        }
    }
    if (s.image_count > 0)
        s.mean_visual_tokens =
            static_cast<double>(s.total_visual_tokens) / static_cast<double>(s.image_count);
    return s;
}

// One invocation per configuration; nullopt marks a failed evaluation, which
// becomes a hole in the surface rather than an aborted search.
using Scorer = std::function<std::optional<double>(const GridPoint&, const ResizeSummary&)>;

struct SearchResult {
    GridPoint best;
    double best_score = 0.0;
    std::map<GridPoint, double, GridPointLess> surface;
    std::map<GridPoint, ResizeSummary, GridPointLess> summaries;
    std::vector<GridPoint> holes;
};

/// Evaluate every grid configuration and return the argmax. Ties prefer the
/// cheaper configuration: smaller max_pixels first, then larger min_pixels.
inline SearchResult run_search(const ResolutionGrid& grid,
                               const std::vector<SampleRecord>& eval_manifest,
                               const Scorer& scorer) {
    SearchResult result;
    bool have_best = false;
    for (const GridPoint& config : enumerate_grid(grid)) {
        const ResizeSummary summary = summarize_resize(eval_manifest, config);
        result.summaries.emplace(config, summary);
        const std::optional<double> score = scorer(config, summary);
        if (!score) {
            result.holes.push_back(config);
            continue;
        }
        result.surface.emplace(config, *score);
        const bool better =
            !have_best || *score > result.best_score ||
            (*score == result.best_score &&
             (config.max_pixels < result.best.max_pixels ||
              (config.max_pixels == result.best.max_pixels &&
               config.min_pixels > result.best.min_pixels)));
        if (better) {
            result.best = config;
            result.best_score = *score;
            have_best = true;
        }
    }
    if (!have_best)
        throw ValidationError("scorer failed on every configuration: the surface is all holes");
    return result;
}

// --- box-plot style reporting -------------------------------------------

struct BoxRow {
    std::uint64_t max_pixels = 0;
    std::size_t n = 0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

struct BoxTable {
    std::vector<BoxRow> rows;
    std::vector<std::string> warnings;
};

/// Quantile by linear interpolation between closest ranks (the same scheme as
/// numpy's default): h = (n-1)p, value = s[floor(h)] + frac(h) * step.
inline double quantile_linear(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw ValidationError("quantile of empty set");
    if (sorted.size() == 1) return sorted[0];
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Per-max_pixels summary of the score surface across min_pixels settings:
/// min, quartiles, median, max. Columns with no surviving scores are omitted
/// with a warning.
inline BoxTable surface_report(const SearchResult& result) {
    if (result.surface.empty() && result.holes.empty())
        throw ValidationError("surface is empty");

    std::map<std::uint64_t, std::vector<double>> columns;
    for (const auto& [config, score] : result.surface) columns[config.max_pixels].push_back(score);
    for (const GridPoint& hole : result.holes)
        columns.try_emplace(hole.max_pixels);  // keep the column visible even if all holes

    BoxTable table;
    for (auto& [max_pixels, scores] : columns) {
        if (scores.empty()) {
            table.warnings.push_back("max_pixels " + std::to_string(max_pixels) +
                                     ": no scores (all holes), column omitted");
            continue;
        }
        std::sort(scores.begin(), scores.end());
        BoxRow row;
        row.max_pixels = max_pixels;
        row.n = scores.size();
        row.min = scores.front();
        row.q1 = quantile_linear(scores, 0.25);
        row.median = quantile_linear(scores, 0.50);
        row.q3 = quantile_linear(scores, 0.75);
        row.max = scores.back();
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace mmpipe
