#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nlaslr/error.hpp"
#include "nlaslr/glosslex.hpp"
#include "nlaslr/heatmap.hpp"
#include "nlaslr/random.hpp"
#include "nlaslr/rawtensor.hpp"

namespace nlaslr {

/// Parameters of a synthetic sign dataset. Classes 0 .. 2*vs_s_pairs-1 form
/// the VS-S pairs (2p, 2p+1), the next 2*vs_d_pairs classes the VS-D pairs,
/// and the remainder are non-VISign classes.
struct SynthSpec {
    std::size_t num_classes = 20;
    std::size_t vs_s_pairs = 4;
    std::size_t vs_d_pairs = 4;
    std::size_t train_per_class = 10;
    std::size_t dev_per_class = 2;
    std::size_t test_per_class = 10;
    std::size_t raw_length = 24;
    std::size_t clip_length = 16;
    std::size_t video_height = 32;
    std::size_t video_width = 32;
    std::size_t heatmap_height = 16;
    std::size_t heatmap_width = 16;
    double heatmap_sigma = 1.0;
    std::size_t keypoints = 8;
    std::size_t embedding_dim = 300;
    double vs_s_cosine = 0.8;
    double vs_d_cosine = 0.1;
    double embedding_noise = 0.05;
    /// Upper bound on the trajectory distance between the two classes of a
    /// VISign pair (normalized image units).
    double confusability = 0.02;
    /// Lower bound on the trajectory distance between unrelated classes.
    double min_group_distance = 0.08;
    double sample_jitter = 0.02;
    double keypoint_noise = 0.004;
    double pixel_noise = 0.02;
    std::uint64_t seed = 7;

    void validate() const {
        auto fail = [](const std::string& m) { return Error(ErrorKind::Spec, m); };
        if (num_classes < 2) throw fail("need at least 2 classes");
        if (2 * (vs_s_pairs + vs_d_pairs) > num_classes) throw fail("VISign pairs need more classes than available");
        if (clip_length == 0 || clip_length % 2 != 0) throw fail("clip_length must be a positive even number");
        if (raw_length < clip_length) throw fail("raw_length must be at least clip_length");
        if (!video_height || !video_width || !heatmap_height || !heatmap_width || !keypoints) throw fail("empty extent");
        if (!(heatmap_sigma > 0.0)) throw fail("heatmap_sigma must be positive");
        if (std::abs(vs_s_cosine) > 1.0 || std::abs(vs_d_cosine) > 1.0) throw fail("cosine targets must lie in [-1, 1]");
        if (vs_s_pairs && vs_s_cosine < 0.5) throw fail("VS-S pairs need cosine >= 0.5");
        if (vs_d_pairs && vs_d_cosine >= 0.5) throw fail("VS-D pairs need cosine < 0.5");
        if (embedding_dim < num_classes) throw fail("embedding_dim must be at least num_classes to realise the target Gram matrix");
        if (confusability < 0.0 || min_group_distance <= confusability) throw fail("need 0 <= confusability < min_group_distance");
        if (train_per_class == 0) throw fail("train_per_class must be positive");
    }

    HeatmapGrid heatmap_grid() const { return {heatmap_height, heatmap_width, heatmap_sigma, std::nullopt}; }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthSpec, num_classes, vs_s_pairs, vs_d_pairs, train_per_class,
                                                dev_per_class, test_per_class, raw_length, clip_length, video_height,
                                                video_width, heatmap_height, heatmap_width, heatmap_sigma, keypoints,
                                                embedding_dim, vs_s_cosine, vs_d_cosine, embedding_noise, confusability,
                                                min_group_distance, sample_jitter, keypoint_noise, pixel_noise, seed)

enum class VisignCategory { VsS, VsD, NonVs };

inline const char* to_string(VisignCategory c) {
    switch (c) {
        case VisignCategory::VsS: return "vs_s";
        case VisignCategory::VsD: return "vs_d";
        case VisignCategory::NonVs: return "non_vs";
    }
    return "non_vs";
}

inline VisignCategory parse_category(const std::string& s) {
    if (s == "vs_s") return VisignCategory::VsS;
    if (s == "vs_d") return VisignCategory::VsD;
    if (s == "non_vs") return VisignCategory::NonVs;
    throw Error(ErrorKind::Parse, "unknown VISign category '" + s + "'");
}

struct ClassInfo {
    std::size_t index = 0;
    std::string gloss;
    VisignCategory category = VisignCategory::NonVs;
    std::optional<std::size_t> partner;
};

/// One raw clip: T x H x W x 3 video in [0, 1] plus per-frame keypoints in
/// heatmap pixel units.
struct RawSample {
    std::string id;
    std::size_t label = 0;
    Tensor<float> video;
    std::vector<KeypointFrame> keypoints;

    std::size_t length() const { return keypoints.size(); }
};

struct Dataset {
    SynthSpec spec;
    GlossLexicon lexicon;
    std::vector<ClassInfo> classes;
    std::vector<RawSample> train, dev, test;

    const std::vector<RawSample>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "dev") return dev;
        if (name == "test") return test;
        throw Error(ErrorKind::Config, "unknown split '" + name + "'");
    }
};

// ---------------------------------------------------------------------------
// Motion programs

struct KeypointMotion {
    double cx = 0.5, cy = 0.5;
    double ax = 0.1, ay = 0.1;
    double cycles = 1.0;
    double phase_x = 0.0, phase_y = 0.0;
};

/// Class-level description of a sign: keypoint trajectories plus the
/// background texture of the rendered video.
struct MotionProgram {
    std::vector<KeypointMotion> keypoints;
    std::array<double, 3> background{0.5, 0.5, 0.5};
    double grating_fx = 1.0, grating_fy = 1.0, grating_phase = 0.0;

    /// Normalized (x, y) of keypoint k at (possibly fractional) frame t.
    std::array<double, 2> position(std::size_t k, double t, std::size_t raw_length, double amplitude = 1.0) const {
        const auto& m = keypoints[k];
        const double w = 2.0 * std::numbers::pi * m.cycles * t / static_cast<double>(raw_length);
        return {m.cx + amplitude * m.ax * std::sin(w + m.phase_x), m.cy + amplitude * m.ay * std::sin(w + m.phase_y)};
    }
};

/// Mean over frames and keypoints of the Chebyshev distance between two programs' trajectories.
inline double trajectory_distance(const MotionProgram& a, const MotionProgram& b, std::size_t raw_length) {
    double total = 0.0;
    const std::size_t K = a.keypoints.size();
    for (std::size_t t = 0; t < raw_length; ++t)
        for (std::size_t k = 0; k < K; ++k) {
            const auto pa = a.position(k, static_cast<double>(t), raw_length);
            const auto pb = b.position(k, static_cast<double>(t), raw_length);
            total += std::max(std::abs(pa[0] - pb[0]), std::abs(pa[1] - pb[1]));
        }
    return total / static_cast<double>(raw_length * K);
}

namespace detail {

inline MotionProgram random_program(std::size_t keypoints, Rng& rng) {
    MotionProgram p;
    p.keypoints.resize(keypoints);
    for (auto& m : p.keypoints) {
        m.cx = uniform(rng, 0.3, 0.7);
        m.cy = uniform(rng, 0.3, 0.7);
        m.ax = uniform(rng, 0.05, 0.15);
        m.ay = uniform(rng, 0.05, 0.15);
        m.cycles = 1.0 + static_cast<double>(rng() % 2);
        m.phase_x = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        m.phase_y = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    }
    for (auto& c : p.background) c = uniform(rng, 0.2, 0.8);
    p.grating_fx = uniform(rng, 0.5, 2.5);
    p.grating_fy = uniform(rng, 0.5, 2.5);
    p.grating_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    return p;
}

/// The two members of a VISign pair: `base` moved by +h and -h (h = half the
/// confusability) along a random sign pattern over keypoint centres and
/// background colour, so partners sit exactly `confusability` apart.
inline std::array<MotionProgram, 2> pair_programs(const MotionProgram& base, double confusability, Rng& rng) {
    std::array<MotionProgram, 2> out{base, base};
    const double h = 0.5 * confusability;
    auto shift = [&](double& a, double& b) {
        const double s = uniform(rng, 0.0, 1.0) < 0.5 ? -h : h;
        a += s;
        b -= s;
    };
    for (std::size_t k = 0; k < base.keypoints.size(); ++k) {
        shift(out[0].keypoints[k].cx, out[1].keypoints[k].cx);
        shift(out[0].keypoints[k].cy, out[1].keypoints[k].cy);
    }
    for (std::size_t c = 0; c < 3; ++c) shift(out[0].background[c], out[1].background[c]);
    return out;
}

inline std::array<double, 3> keypoint_colour(std::size_t k, std::size_t count) {
    // HSV hue wheel with S = 0.9, V = 1.
    const double h = 6.0 * static_cast<double>(k) / static_cast<double>(count);
    const double s = 0.9;
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = 1.0 - s, q = 1.0 - s * f, t = 1.0 - s * (1.0 - f);
    switch (sector) {
        case 0: return {1.0, t, p};
        case 1: return {q, 1.0, p};
        case 2: return {p, 1.0, t};
        case 3: return {p, q, 1.0};
        case 4: return {t, p, 1.0};
        default: return {1.0, p, q};
    }
}

}  // namespace detail

/// Realises the target cosine matrix of the spec (1 on the diagonal, the
/// pair cosines on VISign pairs, 0 elsewhere) by factorising it as a Gram
/// matrix, rotating into embedding_dim dimensions, then adding small noise.
inline Eigen::MatrixXd synthesize_embeddings(const SynthSpec& spec, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(spec.num_classes);
    Eigen::MatrixXd target = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t p = 0; p < spec.vs_s_pairs + spec.vs_d_pairs; ++p) {
        const double c = p < spec.vs_s_pairs ? spec.vs_s_cosine : spec.vs_d_cosine;
        const auto a = static_cast<Eigen::Index>(2 * p);
        target(a, a + 1) = target(a + 1, a) = c;
    }
    if ((target.array().abs() > 1.0).any()) throw Error(ErrorKind::Spec, "cosine target outside [-1, 1]");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(target);
    if (eig.eigenvalues().minCoeff() < -1e-9) throw Error(ErrorKind::Spec, "target cosine matrix is not positive semidefinite");
    const Eigen::MatrixXd factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    const auto d = static_cast<Eigen::Index>(spec.embedding_dim);
    Eigen::MatrixXd gaussian(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) gaussian(i, j) = normal(rng);
    const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian).householderQ();
    Eigen::MatrixXd e = factor * rotation.topRows(n);
    const double noise_scale = spec.embedding_noise / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) e(i, j) += noise_scale * normal(rng);
        e.row(i) *= uniform(rng, 0.5, 2.0);
    }
    for (std::size_t p = 0; p < spec.vs_s_pairs + spec.vs_d_pairs; ++p) {
        const auto a = static_cast<Eigen::Index>(2 * p);
        const double realised = e.row(a).dot(e.row(a + 1)) / (e.row(a).norm() * e.row(a + 1).norm());
        if (std::abs(realised - target(a, a + 1)) > 0.05)
            throw Error(ErrorKind::Spec, "embedding noise too large to honour pair cosine " + std::to_string(target(a, a + 1)));
    }
    return e;
}

/// Class table implied by the spec's pair layout.
inline std::vector<ClassInfo> class_table(const SynthSpec& spec) {
    std::vector<ClassInfo> classes(spec.num_classes);
    for (std::size_t i = 0; i < spec.num_classes; ++i) {
        char token[32];
        std::snprintf(token, sizeof token, "gloss%02zu", i);
        classes[i].index = i;
        classes[i].gloss = token;
        const std::size_t pair = i / 2;
        if (pair < spec.vs_s_pairs + spec.vs_d_pairs) {
            classes[i].category = pair < spec.vs_s_pairs ? VisignCategory::VsS : VisignCategory::VsD;
            classes[i].partner = i ^ 1u;
        }
    }
    return classes;
}

/// Motion programs per class: both members of a VISign pair derive from one
/// shared program; distinct groups are kept apart by rejection sampling.
inline std::vector<MotionProgram> class_programs(const SynthSpec& spec, Rng& rng) {
    const std::size_t pairs = spec.vs_s_pairs + spec.vs_d_pairs;
    const std::size_t groups = spec.num_classes - pairs;
    std::vector<MotionProgram> group_programs;
    for (std::size_t g = 0; g < groups; ++g) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000) throw Error(ErrorKind::Spec, "cannot place motion programs min_group_distance apart");
            MotionProgram candidate = detail::random_program(spec.keypoints, rng);
            const bool far = std::all_of(group_programs.begin(), group_programs.end(), [&](const MotionProgram& other) {
                return trajectory_distance(candidate, other, spec.raw_length) >=
                       spec.min_group_distance + spec.confusability;
            });
            if (far) {
                group_programs.push_back(std::move(candidate));
                break;
            }
        }
    }
    std::vector<MotionProgram> programs(spec.num_classes);
    for (std::size_t p = 0; p < pairs; ++p) {
        auto members = detail::pair_programs(group_programs[p], spec.confusability, rng);
        programs[2 * p] = std::move(members[0]);
        programs[2 * p + 1] = std::move(members[1]);
    }
    for (std::size_t i = 2 * pairs; i < spec.num_classes; ++i) programs[i] = group_programs[i - pairs];
    return programs;
}

/// Renders one sample of a class program with per-sample jitter and noise.
inline RawSample render_sample(const SynthSpec& spec, const MotionProgram& program, std::size_t label, std::string id,
                               Rng& rng) {
    const std::size_t T = spec.raw_length, H = spec.video_height, W = spec.video_width, K = spec.keypoints;
    RawSample s;
    s.id = std::move(id);
    s.label = label;
    s.video = Tensor<float>({T, H, W, 3});
    s.keypoints.resize(T);

    const double ox = uniform(rng, -spec.sample_jitter, spec.sample_jitter);
    const double oy = uniform(rng, -spec.sample_jitter, spec.sample_jitter);
    const double shift = uniform(rng, -1.0, 1.0);
    const double amplitude = uniform(rng, 0.9, 1.1);
    const double radius = 0.07 * static_cast<double>(W);

    std::vector<std::array<double, 2>> pos(K);
    for (std::size_t t = 0; t < T; ++t) {
        auto& frame = s.keypoints[t];
        frame.points.resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            auto p = program.position(k, static_cast<double>(t) + shift, T, amplitude);
            p[0] = std::clamp(p[0] + ox + normal(rng, 0.0, spec.keypoint_noise), 0.02, 0.98);
            p[1] = std::clamp(p[1] + oy + normal(rng, 0.0, spec.keypoint_noise), 0.02, 0.98);
            pos[k] = p;
            frame.points[k] = Keypoint{p[0] * static_cast<double>(spec.heatmap_width) - 0.5,
                                       p[1] * static_cast<double>(spec.heatmap_height) - 0.5, true};
            frame.points[k].x = std::clamp(frame.points[k].x, 0.0, static_cast<double>(spec.heatmap_width) - 1e-3);
            frame.points[k].y = std::clamp(frame.points[k].y, 0.0, static_cast<double>(spec.heatmap_height) - 1e-3);
        }
        const double drift = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(T);
        for (std::size_t r = 0; r < H; ++r) {
            const double v = (static_cast<double>(r) + 0.5) / static_cast<double>(H);
            for (std::size_t c = 0; c < W; ++c) {
                const double u = (static_cast<double>(c) + 0.5) / static_cast<double>(W);
                const double shade =
                    0.55 + 0.25 * std::sin(2.0 * std::numbers::pi * (program.grating_fx * u + program.grating_fy * v) +
                                           program.grating_phase + drift);
                std::array<double, 3> px{program.background[0] * shade, program.background[1] * shade,
                                         program.background[2] * shade};
                for (std::size_t k = 0; k < K; ++k) {
                    const double dx = static_cast<double>(c) - (pos[k][0] * static_cast<double>(W) - 0.5);
                    const double dy = static_cast<double>(r) - (pos[k][1] * static_cast<double>(H) - 0.5);
                    const double alpha = std::clamp(radius + 0.5 - std::sqrt(dx * dx + dy * dy), 0.0, 1.0);
                    if (alpha <= 0.0) continue;
                    const auto colour = detail::keypoint_colour(k, K);
                    for (int ch = 0; ch < 3; ++ch) px[ch] = (1.0 - alpha) * px[ch] + alpha * colour[ch];
                }
                float* out = s.video.data() + ((t * H + r) * W + c) * 3;
                for (int ch = 0; ch < 3; ++ch)
                    out[ch] = static_cast<float>(std::clamp(px[ch] + normal(rng, 0.0, spec.pixel_noise), 0.0, 1.0));
            }
        }
    }
    return s;
}

/// Generates the lexicon and the three splits. Deterministic in spec.seed;
/// each sample draws from its own substream.
inline Dataset generate_dataset(const SynthSpec& spec) {
    spec.validate();
    Rng embed_rng = substream(spec.seed, 1);
    Rng program_rng = substream(spec.seed, 2);
    auto classes = class_table(spec);
    std::vector<std::string> tokens;
    for (const auto& c : classes) tokens.push_back(c.gloss);
    Dataset data{spec, GlossLexicon(tokens, synthesize_embeddings(spec, embed_rng)), classes, {}, {}, {}};
    const auto programs = class_programs(spec, program_rng);

    struct SplitPlan {
        const char* name;
        std::size_t per_class;
        std::vector<RawSample>* out;
        std::uint64_t stream;
    };
    const SplitPlan plans[] = {{"train", spec.train_per_class, &data.train, 10},
                               {"dev", spec.dev_per_class, &data.dev, 11},
                               {"test", spec.test_per_class, &data.test, 12}};
    for (const auto& plan : plans) {
        for (std::size_t c = 0; c < spec.num_classes; ++c)
            for (std::size_t i = 0; i < plan.per_class; ++i) {
                char id[64];
                std::snprintf(id, sizeof id, "%s_%03zu_%03zu", plan.name, c, i);
                Rng rng = substream(spec.seed, plan.stream, c * 100003 + i);
                plan.out->push_back(render_sample(spec, programs[c], c, id, rng));
            }
    }
    return data;
}

// ---------------------------------------------------------------------------
// On-disk layout: manifest.json, lexicon.vec and samples/<id>.{video,kp}.bin

inline Tensor<float> keypoints_to_tensor(const std::vector<KeypointFrame>& frames) {
    const std::size_t T = frames.size(), K = T ? frames[0].points.size() : 0;
    Tensor<float> t({T, K, 3});
    for (std::size_t f = 0; f < T; ++f)
        for (std::size_t k = 0; k < K; ++k) {
            const auto& p = frames[f].points[k];
            float* dst = t.data() + (f * K + k) * 3;
            dst[0] = static_cast<float>(p.x);
            dst[1] = static_cast<float>(p.y);
            dst[2] = p.valid ? 1.0f : 0.0f;
        }
    return t;
}

inline std::vector<KeypointFrame> keypoints_from_tensor(const Tensor<float>& t) {
    if (t.rank() != 3 || t.dim(2) != 3) throw Error(ErrorKind::Data, "keypoint tensor must be T x K x 3");
    std::vector<KeypointFrame> frames(t.dim(0));
    const std::size_t K = t.dim(1);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        frames[f].points.resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            const float* src = t.data() + (f * K + k) * 3;
            frames[f].points[k] = Keypoint{src[0], src[1], src[2] != 0.0f};
        }
    }
    return frames;
}

inline void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "samples");
    save_word_vectors((dir / "lexicon.vec").string(), data.lexicon);

    nlohmann::json manifest;
    manifest["format"] = "nlaslr-dataset";
    manifest["version"] = 1;
    manifest["spec"] = data.spec;
    manifest["lexicon"] = "lexicon.vec";
    manifest["heatmap"] = {{"height", data.spec.heatmap_height}, {"width", data.spec.heatmap_width}, {"sigma", data.spec.heatmap_sigma}};
    for (const auto& c : data.classes) {
        nlohmann::json entry{{"index", c.index}, {"gloss", c.gloss}, {"category", to_string(c.category)}};
        entry["partner"] = c.partner ? nlohmann::json(*c.partner) : nlohmann::json(nullptr);
        manifest["classes"].push_back(entry);
    }
    for (const char* name : {"train", "dev", "test"}) {
        manifest["splits"][name] = nlohmann::json::array();
        for (const auto& s : data.split(name)) {
            const std::string video = "samples/" + s.id + ".video.bin";
            const std::string kp = "samples/" + s.id + ".kp.bin";
            save_raw_tensor((dir / video).string(), s.video);
            save_raw_tensor((dir / kp).string(), keypoints_to_tensor(s.keypoints));
            manifest["splits"][name].push_back(
                {{"id", s.id}, {"label", s.label}, {"gloss", data.classes[s.label].gloss}, {"video", video}, {"keypoints", kp}});
        }
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error(ErrorKind::Data, "cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error(ErrorKind::Data, "no manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
        if (manifest.at("format") != "nlaslr-dataset") throw Error(ErrorKind::Data, "not a dataset manifest");
        SynthSpec spec = manifest.at("spec").get<SynthSpec>();
        GlossLexicon lexicon = load_word_vectors((dir / manifest.at("lexicon").get<std::string>()).string());
        std::vector<ClassInfo> classes;
        std::vector<std::string> vocabulary;
        for (const auto& c : manifest.at("classes")) {
            ClassInfo info{c.at("index").get<std::size_t>(), c.at("gloss").get<std::string>(),
                           parse_category(c.at("category").get<std::string>()), std::nullopt};
            if (!c.at("partner").is_null()) info.partner = c.at("partner").get<std::size_t>();
            vocabulary.push_back(info.gloss);
            classes.push_back(std::move(info));
        }
        Dataset data{spec, lexicon.select(vocabulary), classes, {}, {}, {}};
        for (const char* name : {"train", "dev", "test"}) {
            auto& split = name == std::string("train") ? data.train : name == std::string("dev") ? data.dev : data.test;
            for (const auto& s : manifest.at("splits").at(name)) {
                RawSample sample;
                sample.id = s.at("id").get<std::string>();
                sample.label = s.at("label").get<std::size_t>();
                if (sample.label >= classes.size()) throw Error(ErrorKind::Data, "label out of range for " + sample.id);
                if (data.lexicon.gloss(sample.label) != s.at("gloss").get<std::string>())
                    throw Error(ErrorKind::Data, "gloss/label mismatch for " + sample.id);
                sample.video = load_raw_tensor((dir / s.at("video").get<std::string>()).string());
                sample.keypoints = keypoints_from_tensor(load_raw_tensor((dir / s.at("keypoints").get<std::string>()).string()));
                if (sample.video.rank() != 4 || sample.video.dim(0) != sample.keypoints.size())
                    throw Error(ErrorKind::Data, "video and keypoints disagree in length for " + sample.id);
                split.push_back(std::move(sample));
            }
        }
        return data;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, (dir / "manifest.json").string() + ": " + e.what());
    }
}

}  // namespace nlaslr
