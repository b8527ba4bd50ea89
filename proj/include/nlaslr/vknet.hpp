#pragma once

#include <json.hpp>

#include <array>
#include <bitset>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nlaslr/conv.hpp"
#include "nlaslr/error.hpp"
#include "nlaslr/params.hpp"

namespace nlaslr {

using Extent3 = std::array<std::size_t, 3>;

struct BlockSpec {
    std::size_t channels = 8;
    std::size_t kernel = 3;
    Extent3 stride{1, 1, 1};
    /// Non-overlapping average-pooling window applied after the activation.
    Extent3 pool{1, 1, 1};
    /// Spatial 1xkxk conv followed by temporal kx1x1 conv instead of one kxkxk conv.
    bool separable = false;
};

/// Which lateral connections exist and after which of blocks 1-4.
struct LateralConfig {
    bool video_to_keypoint = true;
    bool keypoint_to_video = true;
    bool long_to_short_video = true;
    bool short_to_long_video = true;
    bool long_to_short_keypoint = true;
    bool short_to_long_keypoint = true;
    std::array<bool, 4> after_block{true, true, true, true};

    static LateralConfig none() {
        return {false, false, false, false, false, false, {true, true, true, true}};
    }
};

struct VKNetConfig {
    std::array<BlockSpec, 5> blocks{};
    LateralConfig laterals;
    std::size_t long_frames = 16;
    std::size_t video_height = 32, video_width = 32, video_channels = 3;
    std::size_t heatmap_height = 16, heatmap_width = 16, keypoints = 8;
    /// Conv weight init: "he_uniform" draws from +-sqrt(6 / fan_in);
    /// "fan_in_uniform" from +-sqrt(1 / fan_in). Biases always use the latter.
    std::string init = "he_uniform";

    /// Channels (8,16,16,32,32); block 1 convolves with spatial stride 2 and
    /// blocks 1-3 halve T, H and W by pooling.
    static VKNetConfig desk() {
        VKNetConfig c;
        const std::size_t ch[5] = {8, 16, 16, 32, 32};
        for (std::size_t b = 0; b < 5; ++b) {
            c.blocks[b].channels = ch[b];
            if (b < 3) c.blocks[b].pool = {2, 2, 2};
        }
        c.blocks[0].stride = {1, 2, 2};
        return c;
    }

    /// Minimal network for gradient checks: 4-frame 4x4 video, 2x2 heatmaps.
    static VKNetConfig tiny() {
        VKNetConfig c;
        for (auto& b : c.blocks) b.channels = 2;
        c.long_frames = 4;
        c.video_height = c.video_width = 4;
        c.video_channels = 2;
        c.heatmap_height = c.heatmap_width = 2;
        c.keypoints = 2;
        return c;
    }

    std::size_t stream_dim() const { return blocks[4].channels; }
    std::size_t feature_dim() const { return 4 * stream_dim(); }
};

inline void to_json(nlohmann::json& j, const BlockSpec& b) {
    j = {{"channels", b.channels}, {"kernel", b.kernel}, {"stride", b.stride}, {"pool", b.pool}, {"separable", b.separable}};
}
inline void from_json(const nlohmann::json& j, BlockSpec& b) {
    b.channels = j.at("channels").get<std::size_t>();
    b.kernel = j.value("kernel", std::size_t{3});
    b.stride = j.value("stride", Extent3{1, 1, 1});
    b.pool = j.value("pool", Extent3{1, 1, 1});
    b.separable = j.value("separable", false);
}
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LateralConfig, video_to_keypoint, keypoint_to_video, long_to_short_video,
                                                short_to_long_video, long_to_short_keypoint, short_to_long_keypoint,
                                                after_block)
inline void to_json(nlohmann::json& j, const VKNetConfig& c) {
    j = {{"blocks", c.blocks},           {"laterals", c.laterals},         {"long_frames", c.long_frames},
         {"video_height", c.video_height}, {"video_width", c.video_width},   {"video_channels", c.video_channels},
         {"heatmap_height", c.heatmap_height}, {"heatmap_width", c.heatmap_width}, {"keypoints", c.keypoints}, {"init", c.init}};
}
inline void from_json(const nlohmann::json& j, VKNetConfig& c) {
    c = VKNetConfig::desk();
    if (j.contains("blocks")) {
        if (j.at("blocks").size() != 5) throw Error(ErrorKind::Config, "VKNet needs exactly 5 blocks");
        for (std::size_t b = 0; b < 5; ++b) c.blocks[b] = j.at("blocks")[b].get<BlockSpec>();
    }
    c.laterals = j.value("laterals", c.laterals);
    c.long_frames = j.value("long_frames", c.long_frames);
    c.video_height = j.value("video_height", c.video_height);
    c.video_width = j.value("video_width", c.video_width);
    c.video_channels = j.value("video_channels", c.video_channels);
    c.heatmap_height = j.value("heatmap_height", c.heatmap_height);
    c.heatmap_width = j.value("heatmap_width", c.heatmap_width);
    c.keypoints = j.value("keypoints", c.keypoints);
    c.init = j.value("init", c.init);
}

/// Encoder streams in the fixed order: V64, K64, V32, K32.
enum Stream : std::size_t { VideoLong = 0, KeypointLong = 1, VideoShort = 2, KeypointShort = 3 };
inline constexpr std::array<const char*, 4> kStreamNames{"video_long", "keypoint_long", "video_short", "keypoint_short"};

template <typename T>
struct FeatureBundle {
    Var<T> f64_v, f64_k, f32_v, f32_k;
    Var<T> f64, f32, f;
};

/// Batched network input; every tensor is B x T x H x W x C.
template <typename T>
struct VKNetInput {
    Tensor<T> video_long, heat_long, video_short, heat_short;
};

template <typename T>
class VKNet {
   public:
    VKNet(const VKNetConfig& config, ParameterSet<T>& params, Rng& rng, const std::string& prefix = "vknet")
        : config_(config) {
        validate();
        weight_gain_ = config.init == "he_uniform" ? std::sqrt(6.0) : 1.0;
        const std::size_t in_channels[4] = {config.video_channels, config.keypoints, config.video_channels,
                                            config.keypoints};
        for (std::size_t s = 0; s < 4; ++s) {
            std::size_t cin = in_channels[s];
            for (std::size_t b = 0; b < 5; ++b) {
                const BlockSpec& spec = config.blocks[b];
                const std::string base = prefix + "/" + kStreamNames[s] + "/block" + std::to_string(b + 1);
                BlockParams& bp = blocks_[s][b];
                if (spec.separable) {
                    bp.w = conv_weight(params, base + "/spatial", {1, spec.kernel, spec.kernel, cin, spec.channels}, rng);
                    bp.b = conv_bias(params, base + "/spatial", spec.channels, spec.kernel * spec.kernel * cin, rng);
                    bp.w2 = conv_weight(params, base + "/temporal", {spec.kernel, 1, 1, spec.channels, spec.channels}, rng);
                    bp.b2 = conv_bias(params, base + "/temporal", spec.channels, spec.kernel * spec.channels, rng);
                } else {
                    bp.w = conv_weight(params, base + "/conv", {spec.kernel, spec.kernel, spec.kernel, cin, spec.channels}, rng);
                    bp.b = conv_bias(params, base + "/conv", spec.channels, spec.kernel * spec.kernel * spec.kernel * cin, rng);
                }
                cin = spec.channels;
            }
        }
        for (std::size_t b = 0; b < 4; ++b) {
            if (!config.laterals.after_block[b]) continue;
            const std::size_t c = config.blocks[b].channels;
            for (const LateralSpec& l : lateral_specs()) {
                if (!l.enabled(config.laterals)) continue;
                const std::string base = prefix + "/lateral" + std::to_string(b + 1) + "/" + l.name;
                LateralParams lp{l, {}, {}};
                lp.w = conv_weight(params, base, {l.kernel[0], l.kernel[1], l.kernel[2], c, c}, rng);
                lp.b = conv_bias(params, base, c, l.kernel[0] * l.kernel[1] * l.kernel[2] * c, rng);
                laterals_[b].push_back(std::move(lp));
            }
        }
    }

    const VKNetConfig& config() const { return config_; }

    /// Output extents (T, H, W) of every block of one stream.
    std::array<Extent3, 5> stream_extents(std::size_t stream) const { return trace_extents(config_, stream); }

    /// Full four-stream forward pass.
    FeatureBundle<T> forward(const VKNetInput<T>& in) const {
        auto gap = run({Var<T>::constant(in.video_long), Var<T>::constant(in.heat_long), Var<T>::constant(in.video_short),
                        Var<T>::constant(in.heat_short)},
                       std::bitset<4>("1111"));
        return bundle(gap);
    }

    /// Same as forward() but inputs are graph nodes (used by gradient checks).
    FeatureBundle<T> forward(const std::array<Var<T>, 4>& in) const { return bundle(run(in, std::bitset<4>("1111"))); }

    /// Runs only the selected streams; laterals touching an inactive stream
    /// are skipped. Returns the GAP feature of every active stream.
    std::array<Var<T>, 4> run(const std::array<Var<T>, 4>& inputs, std::bitset<4> active) const {
        std::array<Var<T>, 4> x = inputs;
        for (std::size_t s = 0; s < 4; ++s)
            if (active[s]) check_input(s, x[s]);
        for (std::size_t b = 0; b < 5; ++b) {
            std::array<Var<T>, 4> y;
            for (std::size_t s = 0; s < 4; ++s)
                if (active[s]) y[s] = block(s, b, x[s]);
            if (b < 4) {
                std::array<std::vector<Var<T>>, 4> incoming;
                for (std::size_t s = 0; s < 4; ++s)
                    if (active[s]) incoming[s].push_back(y[s]);
                for (const LateralParams& lp : laterals_[b]) {
                    if (!active[lp.spec.from] || !active[lp.spec.to]) continue;
                    incoming[lp.spec.to].push_back(apply_lateral(lp, y[lp.spec.from], y[lp.spec.to].shape()));
                }
                for (std::size_t s = 0; s < 4; ++s)
                    if (active[s]) y[s] = incoming[s].size() == 1 ? y[s] : sum<T>(std::span<const Var<T>>(incoming[s]));
            }
            x = y;
        }
        for (std::size_t s = 0; s < 4; ++s)
            if (active[s]) x[s] = global_average_pool(x[s]);
        return x;
    }

   private:
    struct BlockParams {
        Var<T> w, b, w2, b2;
    };
    struct LateralSpec {
        const char* name;
        std::size_t from, to;
        Extent3 kernel, stride, padding;
        bool transposed;
        bool LateralConfig::*flag;
        bool enabled(const LateralConfig& c) const { return c.*flag; }
    };
    struct LateralParams {
        LateralSpec spec;
        Var<T> w, b;
    };

    static const std::array<LateralSpec, 8>& lateral_specs() {
        // Spatial matching: 3x3 stride-2 conv per frame (video -> keypoint),
        // its transpose (keypoint -> video). Temporal matching: kernel-3
        // stride-2 conv per position (long -> short), its transpose back.
        static const std::array<LateralSpec, 8> specs{{
            {"video_to_keypoint_long", VideoLong, KeypointLong, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, false, &LateralConfig::video_to_keypoint},
            {"keypoint_to_video_long", KeypointLong, VideoLong, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, true, &LateralConfig::keypoint_to_video},
            {"video_to_keypoint_short", VideoShort, KeypointShort, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, false, &LateralConfig::video_to_keypoint},
            {"keypoint_to_video_short", KeypointShort, VideoShort, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, true, &LateralConfig::keypoint_to_video},
            {"video_long_to_short", VideoLong, VideoShort, {3, 1, 1}, {2, 1, 1}, {1, 0, 0}, false, &LateralConfig::long_to_short_video},
            {"video_short_to_long", VideoShort, VideoLong, {3, 1, 1}, {2, 1, 1}, {1, 0, 0}, true, &LateralConfig::short_to_long_video},
            {"keypoint_long_to_short", KeypointLong, KeypointShort, {3, 1, 1}, {2, 1, 1}, {1, 0, 0}, false, &LateralConfig::long_to_short_keypoint},
            {"keypoint_short_to_long", KeypointShort, KeypointLong, {3, 1, 1}, {2, 1, 1}, {1, 0, 0}, true, &LateralConfig::short_to_long_keypoint},
        }};
        return specs;
    }

    static Extent3 input_extent(const VKNetConfig& c, std::size_t stream) {
        const std::size_t t = stream >= 2 ? c.long_frames / 2 : c.long_frames;
        return stream % 2 == 0 ? Extent3{t, c.video_height, c.video_width} : Extent3{t, c.heatmap_height, c.heatmap_width};
    }

    static ConvGeometry block_geometry(const BlockSpec& spec) {
        const std::size_t p = spec.kernel / 2;
        return {{spec.kernel, spec.kernel, spec.kernel}, spec.stride, {p, p, p}};
    }

    static std::array<Extent3, 5> trace_extents(const VKNetConfig& c, std::size_t stream) {
        std::array<Extent3, 5> out{};
        Extent3 e = input_extent(c, stream);
        for (std::size_t b = 0; b < 5; ++b) {
            const BlockSpec& spec = c.blocks[b];
            if (spec.kernel % 2 == 0 || spec.channels == 0)
                throw Error(ErrorKind::Config, "block " + std::to_string(b + 1) + " needs an odd kernel and channels > 0");
            try {
                e = block_geometry(spec).output_extent(e);
            } catch (const Error&) {
                throw Error(ErrorKind::Config, std::string(kStreamNames[stream]) + " block " + std::to_string(b + 1) +
                                                   ": input too small for its kernel");
            }
            for (int a = 0; a < 3; ++a) {
                if (spec.pool[a] == 0 || e[a] % spec.pool[a] != 0)
                    throw Error(ErrorKind::Config, std::string(kStreamNames[stream]) + " block " + std::to_string(b + 1) +
                                                       ": extent " + std::to_string(e[a]) + " not divisible by pool");
                e[a] /= spec.pool[a];
            }
            out[b] = e;
        }
        return out;
    }

    /// Output padding that makes a transposed lateral land exactly on `target`.
    static std::optional<Extent3> output_padding(const LateralSpec& l, const Extent3& from, const Extent3& target) {
        Extent3 op{};
        for (int a = 0; a < 3; ++a) {
            const std::size_t base = (from[a] - 1) * l.stride[a] + l.kernel[a];
            if (base < 2 * l.padding[a]) return std::nullopt;
            const std::size_t produced = base - 2 * l.padding[a];
            if (target[a] < produced || target[a] - produced >= l.stride[a]) return std::nullopt;
            op[a] = target[a] - produced;
        }
        return op;
    }

    void validate() const {
        if (config_.init != "he_uniform" && config_.init != "fan_in_uniform")
            throw Error(ErrorKind::Config, "init must be he_uniform or fan_in_uniform");
        if (config_.long_frames == 0 || config_.long_frames % 2 != 0)
            throw Error(ErrorKind::Config, "long_frames must be a positive even number");
        std::array<std::array<Extent3, 5>, 4> ext;
        for (std::size_t s = 0; s < 4; ++s) ext[s] = trace_extents(config_, s);
        for (std::size_t b = 0; b < 4; ++b) {
            if (!config_.laterals.after_block[b]) continue;
            for (const LateralSpec& l : lateral_specs()) {
                if (!l.enabled(config_.laterals)) continue;
                const Extent3& from = ext[l.from][b];
                const Extent3& to = ext[l.to][b];
                bool ok;
                if (l.transposed) {
                    ok = output_padding(l, from, to).has_value();
                } else {
                    ConvGeometry g{l.kernel, l.stride, l.padding};
                    ok = true;
                    for (int a = 0; a < 3; ++a) ok = ok && from[a] + 2 * l.padding[a] >= l.kernel[a];
                    ok = ok && g.output_extent(from) == to;
                }
                if (!ok)
                    throw Error(ErrorKind::Config, std::string("lateral ") + l.name + " after block " + std::to_string(b + 1) +
                                                       " joins incompatible extents");
            }
        }
    }

    Var<T> conv_weight(ParameterSet<T>& params, const std::string& name, Shape shape, Rng& rng) const {
        std::size_t fan_in = 1;
        for (std::size_t a = 0; a < 4; ++a) fan_in *= shape[a];
        return params.create(name + ".weight", std::move(shape), weight_gain_ * std::sqrt(1.0 / static_cast<double>(fan_in)), rng);
    }
    static Var<T> conv_bias(ParameterSet<T>& params, const std::string& name, std::size_t channels, std::size_t fan_in,
                            Rng& rng) {
        return params.create(name + ".bias", {channels}, std::sqrt(1.0 / static_cast<double>(fan_in)), rng);
    }

    void check_input(std::size_t stream, const Var<T>& x) const {
        const Extent3 e = input_extent(config_, stream);
        const std::size_t c = stream % 2 == 0 ? config_.video_channels : config_.keypoints;
        const auto& s = x.shape();
        if (s.size() != 5 || s[1] != e[0] || s[2] != e[1] || s[3] != e[2] || s[4] != c)
            throw Error(ErrorKind::Shape, std::string(kStreamNames[stream]) + " input " + to_string(s) + " does not match " +
                                              to_string(Shape{0, e[0], e[1], e[2], c}) + " (batch free)");
    }

    Var<T> block(std::size_t stream, std::size_t b, const Var<T>& x) const {
        const BlockSpec& spec = config_.blocks[b];
        const BlockParams& bp = blocks_[stream][b];
        Var<T> y;
        if (spec.separable) {
            const std::size_t p = spec.kernel / 2;
            y = relu(conv3d(x, bp.w, bp.b, ConvGeometry{{1, spec.kernel, spec.kernel}, {1, spec.stride[1], spec.stride[2]}, {0, p, p}}));
            y = relu(conv3d(y, bp.w2, bp.b2, ConvGeometry{{spec.kernel, 1, 1}, {spec.stride[0], 1, 1}, {p, 0, 0}}));
        } else {
            y = relu(conv3d(x, bp.w, bp.b, block_geometry(spec)));
        }
        if (spec.pool != Extent3{1, 1, 1}) y = avg_pool3d(y, spec.pool);
        return y;
    }

    Var<T> apply_lateral(const LateralParams& lp, const Var<T>& from, const Shape& target) const {
        const ConvGeometry g{lp.spec.kernel, lp.spec.stride, lp.spec.padding};
        if (!lp.spec.transposed) return conv3d(from, lp.w, lp.b, g);
        const auto& fs = from.shape();
        const auto op = output_padding(lp.spec, {fs[1], fs[2], fs[3]}, {target[1], target[2], target[3]});
        return conv_transpose3d(from, lp.w, lp.b, g, *op);
    }

    static FeatureBundle<T> bundle(const std::array<Var<T>, 4>& gap) {
        FeatureBundle<T> fb;
        fb.f64_v = gap[VideoLong];
        fb.f64_k = gap[KeypointLong];
        fb.f32_v = gap[VideoShort];
        fb.f32_k = gap[KeypointShort];
        fb.f64 = concat<T>({fb.f64_v, fb.f64_k});
        fb.f32 = concat<T>({fb.f32_v, fb.f32_k});
        fb.f = concat<T>({fb.f32, fb.f64});
        return fb;
    }

    VKNetConfig config_;
    double weight_gain_ = 1.0;
    std::array<std::array<BlockParams, 5>, 4> blocks_;
    std::array<std::vector<LateralParams>, 4> laterals_;
};

/// Stacks per-sample clips (each T x H x W x C) into one batch tensor.
template <typename T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& items) {
    require_shape(!items.empty(), "cannot batch zero clips");
    Shape shape{items.size()};
    for (std::size_t d : items[0]->shape()) shape.push_back(d);
    Tensor<T> out(shape);
    const std::size_t n = items[0]->size();
    for (std::size_t i = 0; i < items.size(); ++i) {
        require_shape(items[i]->shape() == items[0]->shape(), "batch items differ in shape");
        std::copy_n(items[i]->data(), n, out.data() + i * n);
    }
    return out;
}

}  // namespace nlaslr
