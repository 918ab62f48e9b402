#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "mmpipe/errors.hpp"

namespace mmpipe {

// One visual token covers a 28x28 pixel cell (14 px patch, 2x2 merge), so
// pixel budgets are naturally written as N*28*28.
inline constexpr std::uint64_t kPatchPixels = 28;

// Raw image dimensions, before any grid quantization.
struct ImageSpec {
    std::uint64_t width = 0;
    std::uint64_t height = 0;

    bool operator==(const ImageSpec&) const = default;
};

// Dimensions quantized to the patch grid plus the resulting token count.
struct ResizedImage {
    std::uint64_t width = 0;
    std::uint64_t height = 0;
    std::uint64_t visual_tokens = 0;

    bool operator==(const ResizedImage&) const = default;
};

/// Token count of an image already on the patch grid. Rejects off-grid input.
inline std::uint64_t visual_tokens(std::uint64_t width, std::uint64_t height,
                                   std::uint64_t patch = kPatchPixels) {
    if (patch == 0) throw ValidationError("patch size must be positive");
    if (width < patch || height < patch || width % patch != 0 || height % patch != 0) {
        throw ValidationError("dimensions " + std::to_string(width) + "x" + std::to_string(height) +
                              " are not positive multiples of the " + std::to_string(patch) +
                              "-pixel grid");
    }
    return (width / patch) * (height / patch);
}

namespace detail {

inline std::uint64_t round_to_grid(double x, std::uint64_t patch) {
    double units = std::floor(x / static_cast<double>(patch) + 0.5);
    return static_cast<std::uint64_t>(std::max(0.0, units)) * patch;
}
inline std::uint64_t floor_to_grid(double x, std::uint64_t patch) {
    double units = std::floor(x / static_cast<double>(patch));
    return static_cast<std::uint64_t>(std::max(0.0, units)) * patch;
}
inline std::uint64_t ceil_to_grid(double x, std::uint64_t patch) {
    double units = std::ceil(x / static_cast<double>(patch));
    return static_cast<std::uint64_t>(std::max(0.0, units)) * patch;
}

}  // namespace detail

/// Quantize an image to the patch grid while keeping its area inside
/// [min_pixels, max_pixels] and approximately preserving aspect ratio.
///
/// Policy: round each dimension to the nearest grid multiple first; if the
/// result overshoots max_pixels, rescale by sqrt(max_pixels/(w*h)) and floor
/// to the grid; if it undershoots min_pixels, rescale by sqrt(min_pixels/(w*h))
/// and ceil to the grid. Images whose quantized shape still violates the
/// window, or whose aspect ratio would be distorted by more than 2x, are
/// reported infeasible instead of being silently deformed.
inline ResizedImage smart_resize(const ImageSpec& img, std::uint64_t min_pixels,
                                 std::uint64_t max_pixels, std::uint64_t patch = kPatchPixels) {
    if (img.width < 1 || img.height < 1)
        throw ValidationError("image dimensions must be >= 1, got " + std::to_string(img.width) +
                              "x" + std::to_string(img.height));
    if (patch == 0) throw ValidationError("patch size must be positive");
    if (min_pixels > max_pixels)
        throw ValidationError("min_pixels " + std::to_string(min_pixels) + " exceeds max_pixels " +
                              std::to_string(max_pixels));
    if (max_pixels < patch * patch)
        throw ValidationError("max_pixels " + std::to_string(max_pixels) +
                              " is below one grid cell (" + std::to_string(patch * patch) + ")");

    const double w = static_cast<double>(img.width);
    const double h = static_cast<double>(img.height);

    std::uint64_t out_w = std::max(patch, detail::round_to_grid(w, patch));
    std::uint64_t out_h = std::max(patch, detail::round_to_grid(h, patch));

    const double area = w * h;
    if (out_w * out_h > max_pixels) {
        const double scale = std::sqrt(static_cast<double>(max_pixels) / area);
        out_w = std::max(patch, detail::floor_to_grid(w * scale, patch));
        out_h = std::max(patch, detail::floor_to_grid(h * scale, patch));
    } else if (out_w * out_h < min_pixels) {
        const double scale = std::sqrt(static_cast<double>(min_pixels) / area);
        out_w = std::max(patch, detail::ceil_to_grid(w * scale, patch));
        out_h = std::max(patch, detail::ceil_to_grid(h * scale, patch));
    }

    const std::uint64_t out_area = out_w * out_h;
    if (out_area > max_pixels || out_area < min_pixels) {
        // The nearest window that would accept this image keeps the satisfied
        // bound and moves the violated one to the achieved area.
        const std::uint64_t near_min = std::min(min_pixels, out_area);
        const std::uint64_t near_max = std::max(max_pixels, out_area);
        throw ResizeInfeasibleError(
            "no " + std::to_string(patch) + "-grid shape for " + std::to_string(img.width) + "x" +
            std::to_string(img.height) + " fits pixel window [" + std::to_string(min_pixels) +
            ", " + std::to_string(max_pixels) + "]; nearest feasible window is [" +
            std::to_string(near_min) + ", " + std::to_string(near_max) + "]");
    }

    // Thin images are where quantization goes wrong: a clamped or coarsely
    // rounded short edge can reshape the image entirely. Reject anything
    // distorted beyond 2x, and anything drifting past the per-dimension
    // grid-rounding allowance, instead of silently deforming it.
    const double ratio_in = w / h;
    const double ratio_out = static_cast<double>(out_w) / static_cast<double>(out_h);
    const double distortion = std::max(ratio_in / ratio_out, ratio_out / ratio_in);
    const double drift = std::abs(ratio_out - ratio_in);
    const double drift_allowance = static_cast<double>(patch) *
                                   (static_cast<double>(out_w) + static_cast<double>(out_h)) /
                                   (static_cast<double>(out_h) * static_cast<double>(out_h));
    if (distortion > 2.0 || drift > drift_allowance + 1e-9) {
        throw ResizeInfeasibleError(
            "resizing " + std::to_string(img.width) + "x" + std::to_string(img.height) +
            " into pixel window [" + std::to_string(min_pixels) + ", " + std::to_string(max_pixels) +
            "] would distort aspect ratio " + std::to_string(ratio_in) + " -> " +
            std::to_string(ratio_out) + " (beyond the grid-rounding allowance)");
    }

    return ResizedImage{out_w, out_h, (out_w / patch) * (out_h / patch)};
}

}  // namespace mmpipe
