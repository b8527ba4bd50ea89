#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>

#include "nlaslr/error.hpp"
#include "nlaslr/heatmap.hpp"
#include "nlaslr/random.hpp"
#include "nlaslr/synthdata.hpp"
#include "nlaslr/tensor.hpp"

namespace nlaslr {

/// Frame ranges [begin, begin + length) of the long clip and of the short
/// clip, both in raw-sample frame indices.
struct TemporalWindow {
    std::size_t long_begin = 0, long_length = 0;
    std::size_t short_begin = 0, short_length = 0;
};

namespace detail {

inline void check_clip_length(std::size_t raw_length, std::size_t long_length) {
    if (long_length == 0 || long_length % 2 != 0)
        throw Error(ErrorKind::Config, "long clip length must be a positive even number, got " + std::to_string(long_length));
    if (raw_length < long_length)
        throw Error(ErrorKind::Length, "sample has " + std::to_string(raw_length) + " frames, long clip needs " +
                                           std::to_string(long_length));
}

inline TemporalWindow centred_short(std::size_t long_begin, std::size_t long_length) {
    const std::size_t s = long_length / 2;
    return {long_begin, long_length, long_begin + (long_length - s) / 2, s};
}

}  // namespace detail

/// Training crop: uniform long window, then a uniform short window inside it.
inline TemporalWindow random_temporal_window(std::size_t raw_length, std::size_t long_length, Rng& rng) {
    detail::check_clip_length(raw_length, long_length);
    const std::size_t s = long_length / 2;
    TemporalWindow w;
    w.long_length = long_length;
    w.short_length = s;
    w.long_begin = std::uniform_int_distribution<std::size_t>(0, raw_length - long_length)(rng);
    w.short_begin = w.long_begin + std::uniform_int_distribution<std::size_t>(0, long_length - s)(rng);
    return w;
}

/// Evaluation crop: long window centred in the sample, short centred in the long.
inline TemporalWindow center_temporal_window(std::size_t raw_length, std::size_t long_length) {
    detail::check_clip_length(raw_length, long_length);
    return detail::centred_short((raw_length - long_length) / 2, long_length);
}

/// Start, middle and end long windows for 3-crop inference.
inline std::array<TemporalWindow, 3> three_crop_windows(std::size_t raw_length, std::size_t long_length) {
    detail::check_clip_length(raw_length, long_length);
    const std::size_t last = raw_length - long_length;
    return {detail::centred_short(0, long_length), detail::centred_short(last / 2, long_length),
            detail::centred_short(last, long_length)};
}

/// Square crop rectangle in normalized image coordinates.
struct CropBox {
    double x0 = 0.0, y0 = 0.0, width = 1.0, height = 1.0;

    double area() const { return width * height; }
    static CropBox full() { return {}; }
};

/// Samples a square box whose area fraction is uniform in [lo, hi].
inline CropBox sample_crop_box(std::array<double, 2> scale_range, Rng& rng) {
    const auto [lo, hi] = scale_range;
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) throw Error(ErrorKind::Config, "scale range must satisfy 0 < lo <= hi <= 1");
    const double side = std::sqrt(uniform(rng, lo, hi));
    return {uniform(rng, 0.0, 1.0 - side), uniform(rng, 0.0, 1.0 - side), side, side};
}

/// Maps a pixel coordinate (column x, row y) of an H x W image into the
/// coordinates of the same image after cropping to `box` and resizing back.
inline std::array<double, 2> map_through_crop(const CropBox& box, double x, double y, std::size_t height, std::size_t width) {
    const double W = static_cast<double>(width), H = static_cast<double>(height);
    return {(x + 0.5 - box.x0 * W) / box.width - 0.5, (y + 0.5 - box.y0 * H) / box.height - 0.5};
}

/// Crops every frame of a T x H x W x C clip to `box` (scaled to this clip's
/// resolution) and resizes back to H x W by bilinear interpolation.
template <typename T>
Tensor<T> crop_resize(const Tensor<T>& clip, const CropBox& box) {
    require_shape(clip.rank() == 4, "crop_resize expects T x H x W x C");
    const std::size_t F = clip.dim(0), H = clip.dim(1), W = clip.dim(2), C = clip.dim(3);
    const double px0 = box.x0 * static_cast<double>(W), pw = box.width * static_cast<double>(W);
    const double py0 = box.y0 * static_cast<double>(H), ph = box.height * static_cast<double>(H);
    if (pw < 2.0 || ph < 2.0) throw Error(ErrorKind::Crop, "crop rectangle smaller than 2 px");

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t n, double origin, double extent) {
        std::vector<Tap> out(n);
        for (std::size_t u = 0; u < n; ++u) {
            double src = origin + (static_cast<double>(u) + 0.5) * extent / static_cast<double>(n) - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(n - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            out[u] = {lo, std::min(lo + 1, n - 1), src - static_cast<double>(lo)};
        }
        return out;
    };
    const auto xs = taps(W, px0, pw), ys = taps(H, py0, ph);

    Tensor<T> out(clip.shape());
    for (std::size_t f = 0; f < F; ++f) {
        const T* src = clip.data() + f * H * W * C;
        T* dst = out.data() + f * H * W * C;
        for (std::size_t r = 0; r < H; ++r) {
            const Tap& ty = ys[r];
            for (std::size_t c = 0; c < W; ++c) {
                const Tap& tx = xs[c];
                const T* p00 = src + (ty.lo * W + tx.lo) * C;
                const T* p01 = src + (ty.lo * W + tx.hi) * C;
                const T* p10 = src + (ty.hi * W + tx.lo) * C;
                const T* p11 = src + (ty.hi * W + tx.hi) * C;
                T* q = dst + (r * W + c) * C;
                for (std::size_t ch = 0; ch < C; ++ch) {
                    const double top = (1.0 - tx.frac) * p00[ch] + tx.frac * p01[ch];
                    const double bottom = (1.0 - tx.frac) * p10[ch] + tx.frac * p11[ch];
                    q[ch] = static_cast<T>((1.0 - ty.frac) * top + ty.frac * bottom);
                }
            }
        }
    }
    return out;
}

/// Applies one crop box to both modalities, each at its own resolution.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> spatial_crop_pair(const Tensor<T>& video, const Tensor<T>& heatmaps, const CropBox& box) {
    return {crop_resize(video, box), crop_resize(heatmaps, box)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> spatial_crop_pair(const Tensor<T>& video, const Tensor<T>& heatmaps,
                                                  std::array<double, 2> scale_range, Rng& rng) {
    return spatial_crop_pair(video, heatmaps, sample_crop_box(scale_range, rng));
}

/// Network inputs of one sample: long and short clips of both modalities.
template <typename T>
struct ClipInputs {
    Tensor<T> video_long, heat_long, video_short, heat_short;
};

namespace detail {

template <typename T>
Tensor<T> slice_frames(const Tensor<T>& clip, std::size_t begin, std::size_t length) {
    Shape shape = clip.shape();
    const std::size_t frame = clip.size() / shape[0];
    shape[0] = length;
    Tensor<T> out(shape);
    std::copy_n(clip.data() + begin * frame, length * frame, out.data());
    return out;
}

}  // namespace detail

/// Cuts the temporal window from a raw sample, renders heatmaps and applies
/// the optional spatial crop identically to video and heatmaps.
template <typename T>
ClipInputs<T> make_clip_inputs(const RawSample& sample, const HeatmapGrid& grid, const TemporalWindow& window,
                               const std::optional<CropBox>& box = std::nullopt) {
    if (window.long_begin + window.long_length > sample.length())
        throw Error(ErrorKind::Length, "temporal window exceeds sample " + sample.id);
    Tensor<T> video = detail::slice_frames(sample.video, window.long_begin, window.long_length).template cast<T>();
    Tensor<T> heat = stack_sequence<T>(
        std::span<const KeypointFrame>(sample.keypoints).subspan(window.long_begin, window.long_length), grid);
    if (box) std::tie(video, heat) = spatial_crop_pair(video, heat, *box);
    const std::size_t offset = window.short_begin - window.long_begin;
    ClipInputs<T> out;
    out.video_short = detail::slice_frames(video, offset, window.short_length);
    out.heat_short = detail::slice_frames(heat, offset, window.short_length);
    out.video_long = std::move(video);
    out.heat_long = std::move(heat);
    return out;
}

}  // namespace nlaslr
