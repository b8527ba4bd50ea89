#pragma once

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

#include "nlaslr/augment.hpp"
#include "nlaslr/heads.hpp"
#include "nlaslr/params.hpp"
#include "nlaslr/vknet.hpp"

namespace nlaslr {

struct ModelConfig {
    VKNetConfig vknet = VKNetConfig::desk();
    HeadsConfig heads;
    std::size_t num_classes = 0;
    std::size_t embedding_dim = 0;
    double heatmap_sigma = 1.0;
    std::vector<std::string> glosses;

    HeatmapGrid heatmap_grid() const { return {vknet.heatmap_height, vknet.heatmap_width, heatmap_sigma, std::nullopt}; }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"vknet", c.vknet},
         {"heads", c.heads},
         {"num_classes", c.num_classes},
         {"embedding_dim", c.embedding_dim},
         {"heatmap_sigma", c.heatmap_sigma},
         {"glosses", c.glosses}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.vknet = j.at("vknet").get<VKNetConfig>();
    c.heads = j.value("heads", HeadsConfig{});
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    c.heatmap_sigma = j.value("heatmap_sigma", 1.0);
    c.glosses = j.value("glosses", std::vector<std::string>{});
}

/// VKNet plus one head per configured feature, sharing one parameter set.
template <typename T>
class Model {
   public:
    Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
        if (config.num_classes < 2) throw Error(ErrorKind::Config, "model needs at least 2 classes");
        if (config.heads.features.empty()) throw Error(ErrorKind::Config, "model needs at least one head");
        Rng rng = substream(seed, 100);
        net_ = std::make_unique<VKNet<T>>(config.vknet, params_, rng);
        for (const auto& name : config.heads.features) {
            const FeatureId id = parse_feature(name);
            for (const auto& h : heads_)
                if (h.feature == id) throw Error(ErrorKind::Config, "duplicate head " + name);
            const bool imm = std::find(config.heads.imm_features.begin(), config.heads.imm_features.end(), name) !=
                             config.heads.imm_features.end();
            heads_.emplace_back(id, imm, feature_dim(config.vknet, id), config.num_classes, config.embedding_dim, params_, rng);
        }
        for (const auto& name : config.heads.imm_features)
            if (std::find(config.heads.features.begin(), config.heads.features.end(), name) == config.heads.features.end())
                throw Error(ErrorKind::Config, "IMM head " + name + " is not among the heads");
        if (!config.heads.inference_head.empty()) inference_index_ = head_index(parse_feature(config.heads.inference_head));
    }

    const ModelConfig& config() const { return config_; }
    ParameterSet<T>& params() { return params_; }
    const ParameterSet<T>& params() const { return params_; }
    const VKNet<T>& net() const { return *net_; }
    std::vector<Head<T>>& heads() { return heads_; }
    const std::vector<Head<T>>& heads() const { return heads_; }

    std::size_t head_index(FeatureId id) const {
        for (std::size_t i = 0; i < heads_.size(); ++i)
            if (heads_[i].feature == id) return i;
        throw Error(ErrorKind::Config, std::string("no head on feature ") + to_string(id));
    }

    FeatureBundle<T> forward(const VKNetInput<T>& in) const { return net_->forward(in); }

    /// B x N class probabilities: mean of the FC1 softmax outputs, or the
    /// single configured inference head.
    Tensor<T> predict(const VKNetInput<T>& in) const { return predict_from(forward(in)); }

    Tensor<T> predict_from(const FeatureBundle<T>& fb) const {
        if (inference_index_) return heads_[*inference_index_].predict(select_feature(fb, heads_[*inference_index_].feature).value());
        Tensor<T> mean;
        for (const auto& h : heads_) {
            Tensor<T> p = h.predict(select_feature(fb, h.feature).value());
            if (mean.empty()) {
                mean = std::move(p);
            } else {
                detail::add_into(mean, p);
            }
        }
        const T inv = T{1} / static_cast<T>(heads_.size());
        for (auto& v : mean.values()) v *= inv;
        return mean;
    }

   private:
    ModelConfig config_;
    ParameterSet<T> params_;
    std::unique_ptr<VKNet<T>> net_;
    std::vector<Head<T>> heads_;
    std::optional<std::size_t> inference_index_;
};

/// Batched inputs for the given samples cut at the given windows, no spatial crop.
template <typename T>
VKNetInput<T> batch_inputs(const std::vector<ClipInputs<T>>& clips) {
    std::vector<const Tensor<T>*> vl, hl, vs, hs;
    for (const auto& c : clips) {
        vl.push_back(&c.video_long);
        hl.push_back(&c.heat_long);
        vs.push_back(&c.video_short);
        hs.push_back(&c.heat_short);
    }
    return {stack_batch(vl), stack_batch(hl), stack_batch(vs), stack_batch(hs)};
}

/// Rebuilds a model from a checkpoint. Training-only parameters (FC2, gloss
/// map) are restored when present and may be absent.
template <typename T>
std::unique_ptr<Model<T>> model_from_checkpoint(const CheckpointFile& file) {
    if (file.meta.value("format", std::string()) != "nlaslr-model") throw Error(ErrorKind::Data, "checkpoint does not hold a model");
    ModelConfig config;
    try {
        config = file.meta.at("model").get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Data, std::string("corrupt model metadata: ") + e.what());
    }
    auto model = std::make_unique<Model<T>>(config, 0);
    restore_parameters(model->params(), file, [](const std::string& n) { return !is_training_only_parameter(n); });
    return model;
}

/// Writes `file` minus its training-only parameters and optimizer state.
inline void export_inference_checkpoint(const CheckpointFile& file, const std::string& out) {
    auto write = [&](auto tag) {
        using T = decltype(tag);
        const auto model = model_from_checkpoint<T>(file);
        nlohmann::json meta = file.meta;
        meta["inference_only"] = true;
        save_checkpoint(out, model->params(), meta, false, [](const std::string& n) { return !is_training_only_parameter(n); });
    };
    if (file.value_bytes == 8) {
        write(double{});
    } else {
        write(float{});
    }
}

}  // namespace nlaslr
