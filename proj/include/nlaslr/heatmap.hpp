#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "nlaslr/error.hpp"
#include "nlaslr/tensor.hpp"

namespace nlaslr {

/// One keypoint in heatmap pixel units: x is the column index, y the row index.
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool valid = true;
};

struct KeypointFrame {
    std::vector<Keypoint> points;
};

/// Rendering grid. Paper-scale defaults are 112 x 112 with sigma 4; desk
/// configurations shrink the grid and scale sigma by height / 112.
struct HeatmapGrid {
    std::size_t height = 112;
    std::size_t width = 112;
    double sigma = 4.0;
    /// Pixels farther than this from the keypoint are left at 0. Off by default.
    std::optional<double> cutoff_radius;

    static HeatmapGrid scaled(std::size_t height, std::size_t width) {
        return {height, width, 4.0 * static_cast<double>(height) / 112.0, std::nullopt};
    }
};

namespace detail {

inline void check_grid(const HeatmapGrid& grid) {
    if (!(grid.sigma > 0.0)) throw Error(ErrorKind::Parameter, "heatmap sigma must be positive");
    if (grid.height == 0 || grid.width == 0) throw Error(ErrorKind::Parameter, "heatmap grid must be non-empty");
}

/// Writes one frame into `out` (H x W x K, already zeroed).
template <typename T>
void render_into(const KeypointFrame& frame, const HeatmapGrid& grid, T* out) {
    const std::size_t K = frame.points.size();
    const double inv_two_var = 1.0 / (2.0 * grid.sigma * grid.sigma);
    const double cutoff2 = grid.cutoff_radius ? *grid.cutoff_radius * *grid.cutoff_radius : -1.0;
    for (std::size_t k = 0; k < K; ++k) {
        const Keypoint& p = frame.points[k];
        if (!p.valid) continue;
        if (!(p.x >= 0.0 && p.x < static_cast<double>(grid.width) && p.y >= 0.0 && p.y < static_cast<double>(grid.height)))
            throw Error(ErrorKind::Parameter, "keypoint " + std::to_string(k) + " lies outside the heatmap grid");
        for (std::size_t j = 0; j < grid.height; ++j) {
            const double dy = static_cast<double>(j) - p.y;
            for (std::size_t i = 0; i < grid.width; ++i) {
                const double dx = static_cast<double>(i) - p.x;
                const double d2 = dx * dx + dy * dy;
                if (cutoff2 >= 0.0 && d2 > cutoff2) continue;
                out[(j * grid.width + i) * K + k] = static_cast<T>(std::exp(-d2 * inv_two_var));
            }
        }
    }
}

}  // namespace detail

/// H x W x K heatmap with value exp(-((i - x)^2 + (j - y)^2) / (2 sigma^2))
/// at column i, row j. Invalid keypoints give an all-zero channel.
template <typename T = double>
Tensor<T> rasterize_frame(const KeypointFrame& frame, const HeatmapGrid& grid) {
    detail::check_grid(grid);
    Tensor<T> out({grid.height, grid.width, frame.points.size()});
    detail::render_into(frame, grid, out.data());
    return out;
}

/// T x H x W x K stack of rasterized frames.
template <typename T = double>
Tensor<T> stack_sequence(std::span<const KeypointFrame> frames, const HeatmapGrid& grid) {
    detail::check_grid(grid);
    if (frames.empty()) throw Error(ErrorKind::EmptySequence, "cannot stack zero keypoint frames");
    const std::size_t K = frames.front().points.size();
    for (std::size_t t = 0; t < frames.size(); ++t)
        if (frames[t].points.size() != K)
            throw Error(ErrorKind::Shape, "frame " + std::to_string(t) + " has " + std::to_string(frames[t].points.size()) +
                                              " keypoints, expected " + std::to_string(K));
    Tensor<T> out({frames.size(), grid.height, grid.width, K});
    const std::size_t stride = grid.height * grid.width * K;
    for (std::size_t t = 0; t < frames.size(); ++t) detail::render_into(frames[t], grid, out.data() + t * stride);
    return out;
}

}  // namespace nlaslr
