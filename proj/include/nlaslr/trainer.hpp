#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "nlaslr/augment.hpp"
#include "nlaslr/eval.hpp"
#include "nlaslr/glosslex.hpp"
#include "nlaslr/heads.hpp"
#include "nlaslr/model.hpp"
#include "nlaslr/params.hpp"
#include "nlaslr/random.hpp"
#include "nlaslr/synthdata.hpp"

namespace nlaslr {

// ---------------------------------------------------------------------------
// Schedules, evaluated once per epoch m of M.

inline double cosine_factor(std::size_t m, std::size_t M) {
    if (M == 0) throw Error(ErrorKind::Config, "schedule needs at least one epoch");
    if (m == 0) return 1.0;
    if (m >= M) return 0.0;
    return (std::cos(std::numbers::pi * static_cast<double>(m) / static_cast<double>(M)) + 1.0) / 2.0;
}

inline double mu_schedule(std::size_t m, std::size_t M, double mu_base = 0.99) {
    if (m == 0) return mu_base;
    return 1.0 - (1.0 - mu_base) * cosine_factor(m, M);
}

inline double gamma_schedule(std::size_t m, std::size_t M) { return cosine_factor(m, M); }

inline double cosine_lr(std::size_t m, std::size_t M, double eta0) { return eta0 * cosine_factor(m, M); }

// ---------------------------------------------------------------------------
// Configuration

enum class Smoothing { None, Vanilla, LanguageAware };

inline Smoothing parse_smoothing(const std::string& s) {
    if (s == "none") return Smoothing::None;
    if (s == "vanilla") return Smoothing::Vanilla;
    if (s == "language_aware") return Smoothing::LanguageAware;
    throw Error(ErrorKind::Config, "label_smoothing must be none, vanilla or language_aware");
}

struct TrainConfig {
    std::string precision = "float32";
    VKNetConfig vknet = VKNetConfig::desk();
    HeadsConfig heads;
    std::size_t epochs = 40;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double weight_decay = 1e-3;
    double mu_base = 0.99;
    std::string label_smoothing = "language_aware";
    double epsilon = 0.2;
    double tau = 0.5;
    bool imm = true;
    bool intra_mixup = true;
    double mixup_alpha = 0.8;
    bool spatial_crop = true;
    std::array<double, 2> scale_range{0.7, 1.0};
    bool temporal_jitter = true;
    /// "eval": centre-crop accuracy on the train split after each epoch;
    /// "running": accuracy of the training forward passes (cheaper).
    std::string train_top1 = "eval";
    std::uint64_t seed = 0;

    void validate() const {
        auto fail = [](const std::string& m) { return Error(ErrorKind::Config, m); };
        if (precision != "float32" && precision != "float64") throw fail("precision must be float32 or float64");
        if (epochs == 0) throw fail("epochs must be positive");
        if (batch_size == 0) throw fail("batch_size must be positive");
        if (!(lr > 0.0) || weight_decay < 0.0) throw fail("lr must be positive and weight_decay non-negative");
        if (!(mu_base >= 0.0 && mu_base <= 1.0)) throw fail("mu_base must lie in [0, 1]");
        parse_smoothing(label_smoothing);
        if (!(epsilon >= 0.0 && epsilon < 1.0)) throw fail("epsilon must lie in [0, 1)");
        if (!(tau > 0.0)) throw fail("tau must be positive");
        if (!(mixup_alpha > 0.0)) throw fail("mixup_alpha must be positive");
        if (!(scale_range[0] > 0.0 && scale_range[0] <= scale_range[1] && scale_range[1] <= 1.0))
            throw fail("scale_range must satisfy 0 < lo <= hi <= 1");
        if (train_top1 != "eval" && train_top1 != "running") throw fail("train_top1 must be eval or running");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"precision", c.precision},     {"vknet", c.vknet},
         {"heads", c.heads},             {"epochs", c.epochs},
         {"batch_size", c.batch_size},   {"lr", c.lr},
         {"weight_decay", c.weight_decay}, {"mu_base", c.mu_base},
         {"label_smoothing", c.label_smoothing}, {"epsilon", c.epsilon},
         {"tau", c.tau},                 {"imm", c.imm},
         {"intra_mixup", c.intra_mixup}, {"mixup_alpha", c.mixup_alpha},
         {"spatial_crop", c.spatial_crop}, {"scale_range", c.scale_range},
         {"temporal_jitter", c.temporal_jitter}, {"train_top1", c.train_top1},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    static const std::set<std::string> known{"precision", "vknet",      "heads",        "epochs",      "batch_size",
                                             "lr",        "weight_decay", "mu_base",    "label_smoothing", "epsilon",
                                             "tau",       "imm",        "intra_mixup",  "mixup_alpha", "spatial_crop",
                                             "scale_range", "temporal_jitter", "train_top1", "seed"};
    if (!j.is_object()) throw Error(ErrorKind::Config, "training config must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw Error(ErrorKind::Config, "unknown training config key '" + key + "'");
    c = TrainConfig{};
    c.precision = j.value("precision", c.precision);
    if (j.contains("vknet")) c.vknet = j.at("vknet").get<VKNetConfig>();
    c.heads = j.value("heads", c.heads);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.mu_base = j.value("mu_base", c.mu_base);
    c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.tau = j.value("tau", c.tau);
    c.imm = j.value("imm", c.imm);
    c.intra_mixup = j.value("intra_mixup", c.intra_mixup);
    c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);
    c.spatial_crop = j.value("spatial_crop", c.spatial_crop);
    c.scale_range = j.value("scale_range", c.scale_range);
    c.temporal_jitter = j.value("temporal_jitter", c.temporal_jitter);
    c.train_top1 = j.value("train_top1", c.train_top1);
    c.seed = j.value("seed", c.seed);
}

inline TrainConfig parse_train_config(const std::string& text, const std::string& source = "<config>") {
    try {
        TrainConfig c = nlohmann::json::parse(text).get<TrainConfig>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, source + ": " + e.what());
    }
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_train_config(buf.str(), path);
}

/// Model configuration implied by a training config and the dataset.
inline ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& data) {
    ModelConfig m;
    m.vknet = cfg.vknet;
    m.vknet.video_height = data.spec.video_height;
    m.vknet.video_width = data.spec.video_width;
    m.vknet.video_channels = 3;
    m.vknet.heatmap_height = data.spec.heatmap_height;
    m.vknet.heatmap_width = data.spec.heatmap_width;
    m.vknet.keypoints = data.spec.keypoints;
    m.heads = cfg.heads;
    if (!cfg.imm) m.heads.imm_features.clear();
    m.num_classes = data.lexicon.size();
    m.embedding_dim = data.lexicon.dim();
    m.heatmap_sigma = data.spec.heatmap_sigma;
    m.glosses = data.lexicon.glosses();
    return m;
}

// ---------------------------------------------------------------------------
// One iteration

struct StepLosses {
    double total = 0.0, cls = 0.0, imm = 0.0;
};

/// gradients of sum_heads (L_CLS + gamma L_IMM) -> Adam on every parameter
/// -> theta1 <- mu theta1 + (1 - mu) theta2 for each head with IMM.
template <typename T>
StepLosses train_step(Model<T>& model, const VKNetInput<T>& batch, const Tensor<T>& cls_targets, const Tensor<T>& imm_targets,
                      const Var<T>& gloss_embeddings, double gamma, double mu, double lr, const AdamConfig& adam,
                      FeatureBundle<T>* features_out = nullptr) {
    model.params().zero_grad();
    const FeatureBundle<T> fb = model.forward(batch);
    std::vector<Var<T>> totals;
    StepLosses out;
    for (const auto& head : model.heads()) {
        const HeadLoss<T> l = head.loss(select_feature(fb, head.feature), cls_targets, gloss_embeddings, imm_targets, gamma);
        totals.push_back(l.total);
        out.cls += static_cast<double>(l.cls.value()[0]);
        if (head.imm) out.imm += static_cast<double>(l.imm.value()[0]);
    }
    const Var<T> loss = sum<T>(std::span<const Var<T>>(totals));
    out.total = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(out.total)) throw Error(ErrorKind::Numerical, "non-finite loss");
    backward(loss);
    adam_step(model.params(), lr, adam);
    for (auto& head : model.heads()) integrate_classifiers(head, mu);
    if (features_out) *features_out = fb;
    return out;
}

/// x <- lambda x + (1 - lambda) x[perm] along the leading (batch) axis.
template <typename T>
void mix_batch(Tensor<T>& x, const std::vector<std::size_t>& perm, double lambda) {
    const Tensor<T> src = x;
    const std::size_t B = x.dim(0), n = x.size() / B;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t k = 0; k < n; ++k)
            x[i * n + k] = static_cast<T>(lambda * static_cast<double>(src[i * n + k]) +
                                          (1.0 - lambda) * static_cast<double>(src[perm[i] * n + k]));
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0, gamma = 0.0, mu = 0.0;
    double loss_total = 0.0, loss_cls = 0.0, loss_imm = 0.0;
    double train_top1 = 0.0;
};

inline std::string format_number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string metrics_csv_header() { return "epoch,lr,gamma,mu,loss_total,loss_cls,loss_imm,train_top1"; }

inline std::string metrics_csv_row(const EpochMetrics& m) {
    return std::to_string(m.epoch) + "," + format_number(m.lr) + "," + format_number(m.gamma) + "," + format_number(m.mu) +
           "," + format_number(m.loss_total) + "," + format_number(m.loss_cls) + "," + format_number(m.loss_imm) + "," +
           format_number(m.train_top1);
}

/// Drives training over a dataset. All randomness after construction comes
/// from one generator seeded by the config seed.
template <typename T>
class Trainer {
   public:
    Trainer(const TrainConfig& config, const Dataset& data)
        : config_(config), data_(data), model_(model_config_for(config, data), config.seed), rng_(substream(config.seed, 200)) {
        config_.validate();
        if (data.train.empty()) throw Error(ErrorKind::Data, "training split is empty");
        for (const auto& s : data.train)
            if (s.length() < config.vknet.long_frames)
                throw Error(ErrorKind::Length, "sample " + s.id + " is shorter than the long clip");
        gloss_embeddings_ = Var<T>::constant(data.lexicon.embedding_tensor<T>());
        adam_.weight_decay = config.weight_decay;
        const std::size_t N = data.lexicon.size();
        const Smoothing mode = parse_smoothing(config.label_smoothing);
        for (std::size_t c = 0; c < N; ++c) {
            SoftLabel y;
            if (mode == Smoothing::LanguageAware) {
                y = language_aware_soft_label(data.lexicon, c, config.epsilon, config.tau);
            } else if (mode == Smoothing::Vanilla) {
                y = vanilla_soft_label(N, c, config.epsilon);
            } else {
                y = vanilla_soft_label(N, c, 0.0);
            }
            class_labels_.push_back(std::move(y.probs));
        }
    }

    Model<T>& model() { return model_; }
    const TrainConfig& config() const { return config_; }
    std::size_t global_step() const { return global_step_; }

    EpochMetrics run_epoch(std::size_t m) {
        const std::size_t M = config_.epochs;
        EpochMetrics em{m, cosine_lr(m, M, config_.lr), gamma_schedule(m, M), mu_schedule(m, M, config_.mu_base), 0, 0, 0, 0};
        std::vector<std::size_t> order(data_.train.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng_);
        std::size_t batches = 0, hits = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size, ++batches) {
            const std::size_t end = std::min(order.size(), begin + config_.batch_size);
            std::vector<std::size_t> labels;
            std::vector<ClipInputs<T>> clips;
            for (std::size_t i = begin; i < end; ++i) {
                const RawSample& s = data_.train[order[i]];
                const TemporalWindow w = config_.temporal_jitter ? random_temporal_window(s.length(), config_.vknet.long_frames, rng_)
                                                                 : center_temporal_window(s.length(), config_.vknet.long_frames);
                std::optional<CropBox> box;
                if (config_.spatial_crop) box = sample_crop_box(config_.scale_range, rng_);
                clips.push_back(make_clip_inputs<T>(s, model_.config().heatmap_grid(), w, box));
                labels.push_back(s.label);
            }
            VKNetInput<T> input = batch_inputs(clips);
            Tensor<T> cls = class_targets(labels);
            Tensor<T> imm;
            std::vector<std::size_t> dominant = labels;
            if (config_.intra_mixup && labels.size() >= 2) {
                const double lambda = beta_sample(rng_, config_.mixup_alpha, config_.mixup_alpha);
                std::vector<std::size_t> perm(labels.size());
                std::iota(perm.begin(), perm.end(), 0);
                std::shuffle(perm.begin(), perm.end(), rng_);
                for (auto* t : {&input.video_long, &input.heat_long, &input.video_short, &input.heat_short, &cls})
                    mix_batch(*t, perm, lambda);
                if (config_.imm) imm = imm_targets<T>(labels, class_labels_.size(), &perm, lambda);
                if (lambda < 0.5)
                    for (std::size_t i = 0; i < labels.size(); ++i) dominant[i] = labels[perm[i]];
            } else if (config_.imm) {
                imm = imm_targets<T>(labels, class_labels_.size());
            }
            FeatureBundle<T> fb;
            StepLosses l;
            try {
                l = train_step(model_, input, cls, imm, gloss_embeddings_, em.gamma, em.mu, em.lr, adam_, &fb);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Numerical) throw;
                throw Error(ErrorKind::Numerical, std::string(e.what()) + " at epoch " + std::to_string(m) + ", batch " +
                                                      std::to_string(batches) + " (samples " + batch_ids(order, begin, end) + ")");
            }
            ++global_step_;
            em.loss_total += l.total;
            em.loss_cls += l.cls;
            em.loss_imm += l.imm;
            if (config_.train_top1 == "running") {
                const Tensor<T> p = model_.predict_from(fb);
                const std::size_t N = p.dim(1);
                for (std::size_t i = 0; i < dominant.size(); ++i) {
                    std::vector<double> row(p.data() + i * N, p.data() + (i + 1) * N);
                    hits += in_top_k(row, dominant[i], 1);
                }
            }
        }
        em.loss_total /= static_cast<double>(batches);
        em.loss_cls /= static_cast<double>(batches);
        em.loss_imm /= static_cast<double>(batches);
        em.train_top1 = config_.train_top1 == "running" ? static_cast<double>(hits) / static_cast<double>(order.size())
                                                        : train_accuracy();
        ++epochs_done_;
        return em;
    }

    /// Centre-crop per-instance top-1 on the training split.
    double train_accuracy() const {
        const auto preds = predict(model_, data_.train, CropMode::Single);
        std::vector<std::size_t> labels;
        for (const auto& s : data_.train) labels.push_back(s.label);
        return per_instance_accuracy(preds, labels, 1);
    }

    std::vector<EpochMetrics> train(const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
        std::vector<EpochMetrics> all;
        for (std::size_t m = epochs_done_; m < config_.epochs; ++m) {
            all.push_back(run_epoch(m));
            if (on_epoch) on_epoch(all.back());
        }
        return all;
    }

    nlohmann::json checkpoint_meta() const {
        return {{"format", "nlaslr-model"},    {"model", model_.config()}, {"train", config_},
                {"epoch", epochs_done_},        {"global_step", global_step_}, {"inference_only", false}};
    }

    void save_checkpoint_file(const std::string& path) const {
        save_checkpoint(path, model_.params(), checkpoint_meta(), true);
    }

    const std::vector<std::vector<double>>& class_labels() const { return class_labels_; }

   private:
    Tensor<T> class_targets(const std::vector<std::size_t>& labels) const {
        const std::size_t N = class_labels_.size();
        Tensor<T> out({labels.size(), N});
        for (std::size_t i = 0; i < labels.size(); ++i)
            for (std::size_t c = 0; c < N; ++c) out[i * N + c] = static_cast<T>(class_labels_[labels[i]][c]);
        return out;
    }

    std::string batch_ids(const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) const {
        std::string ids;
        for (std::size_t i = begin; i < end; ++i) ids += (i > begin ? "," : "") + data_.train[order[i]].id;
        return ids;
    }

    TrainConfig config_;
    const Dataset& data_;
    Model<T> model_;
    Rng rng_;
    Var<T> gloss_embeddings_;
    AdamConfig adam_;
    std::vector<std::vector<double>> class_labels_;
    std::size_t global_step_ = 0;
    std::size_t epochs_done_ = 0;
};

/// Full training run writing checkpoint.bin, metrics.csv and config.json to `out`.
template <typename T>
std::vector<EpochMetrics> run_training(const TrainConfig& config, const Dataset& data, const std::filesystem::path& out,
                                       const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
    std::filesystem::create_directories(out);
    Trainer<T> trainer(config, data);
    std::ofstream csv(out / "metrics.csv");
    if (!csv) throw Error(ErrorKind::Data, "cannot write metrics in " + out.string());
    csv << metrics_csv_header() << '\n';
    const auto metrics = trainer.train([&](const EpochMetrics& m) {
        csv << metrics_csv_row(m) << '\n';
        csv.flush();
        if (on_epoch) on_epoch(m);
    });
    trainer.save_checkpoint_file((out / "checkpoint.bin").string());
    std::ofstream(out / "config.json") << nlohmann::json(config).dump(2) << '\n';
    return metrics;
}

}  // namespace nlaslr
