#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nlaslr/autograd.hpp"
#include "nlaslr/error.hpp"
#include "nlaslr/glosslex.hpp"
#include "nlaslr/params.hpp"
#include "nlaslr/vknet.hpp"

namespace nlaslr {

/// The seven bundle features a head can consume.
enum class FeatureId { F, F64, F32, F64V, F64K, F32V, F32K };
inline constexpr std::array<FeatureId, 7> kAllFeatures{FeatureId::F,    FeatureId::F64,  FeatureId::F32, FeatureId::F64V,
                                                       FeatureId::F64K, FeatureId::F32V, FeatureId::F32K};

inline const char* to_string(FeatureId id) {
    switch (id) {
        case FeatureId::F: return "f";
        case FeatureId::F64: return "f64";
        case FeatureId::F32: return "f32";
        case FeatureId::F64V: return "f64_v";
        case FeatureId::F64K: return "f64_k";
        case FeatureId::F32V: return "f32_v";
        case FeatureId::F32K: return "f32_k";
    }
    return "f";
}

inline FeatureId parse_feature(const std::string& s) {
    for (FeatureId id : kAllFeatures)
        if (s == to_string(id)) return id;
    throw Error(ErrorKind::Config, "unknown feature '" + s + "'");
}

template <typename T>
const Var<T>& select_feature(const FeatureBundle<T>& fb, FeatureId id) {
    switch (id) {
        case FeatureId::F: return fb.f;
        case FeatureId::F64: return fb.f64;
        case FeatureId::F32: return fb.f32;
        case FeatureId::F64V: return fb.f64_v;
        case FeatureId::F64K: return fb.f64_k;
        case FeatureId::F32V: return fb.f32_v;
        case FeatureId::F32K: return fb.f32_k;
    }
    return fb.f;
}

inline std::size_t feature_dim(const VKNetConfig& c, FeatureId id) {
    switch (id) {
        case FeatureId::F: return 4 * c.stream_dim();
        case FeatureId::F64:
        case FeatureId::F32: return 2 * c.stream_dim();
        default: return c.stream_dim();
    }
}

struct HeadsConfig {
    std::vector<std::string> features{"f", "f64", "f32", "f64_v", "f64_k", "f32_v", "f32_k"};
    /// Heads that also train the inter-modality mixup branch.
    std::vector<std::string> imm_features{"f", "f64", "f32", "f64_v", "f64_k", "f32_v", "f32_k"};
    /// Feature whose FC1 alone serves predictions; empty means the mean of all heads.
    std::string inference_head;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HeadsConfig, features, imm_features, inference_head)

/// IMM target of the n-th blended row for ground truth b.
inline SoftLabel imm_label(std::size_t num_classes, std::size_t b, std::size_t n) {
    if (num_classes == 0) throw Error(ErrorKind::InvalidVocabulary, "empty vocabulary");
    if (b >= num_classes || n >= num_classes) throw Error(ErrorKind::Parameter, "imm_label index out of range");
    SoftLabel out{std::vector<double>(num_classes, 0.0), b};
    if (n == b) {
        out.probs[b] = 1.0;
    } else {
        out.probs[b] = 0.5;
        out.probs[n] = 0.5;
    }
    return out;
}

/// (B*N) x N targets for a batch. With mixup, row (i, n) is
/// lambda * y^n(b_i) + (1 - lambda) * y^n(b_perm[i]).
template <typename T>
Tensor<T> imm_targets(const std::vector<std::size_t>& labels, std::size_t num_classes,
                      const std::vector<std::size_t>* permutation = nullptr, double lambda = 1.0) {
    if (num_classes == 0) throw Error(ErrorKind::InvalidVocabulary, "empty vocabulary");
    const std::size_t B = labels.size(), N = num_classes;
    Tensor<T> out({B * N, N});
    auto accumulate = [&](std::size_t row, std::size_t b, std::size_t n, double w) {
        const SoftLabel y = imm_label(N, b, n);
        for (std::size_t c = 0; c < N; ++c) out[row * N + c] += static_cast<T>(w * y.probs[c]);
    };
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t n = 0; n < N; ++n) {
            if (!permutation || lambda == 1.0) {
                accumulate(i * N + n, labels[i], n, 1.0);
            } else {
                accumulate(i * N + n, labels[i], n, lambda);
                accumulate(i * N + n, labels[(*permutation)[i]], n, 1.0 - lambda);
            }
        }
    return out;
}

template <typename T>
struct HeadLoss {
    Var<T> cls, imm, total;
};

/// One head: FC1 (language-aware branch), FC2 and the gloss mapping
/// (inter-modality mixup branch).
template <typename T>
struct Head {
    FeatureId feature = FeatureId::F;
    bool imm = true;
    std::string prefix;
    Var<T> fc1_w, fc1_b, fc2_w, fc2_b, map_w, map_b;

    Head(FeatureId id, bool use_imm, std::size_t dim, std::size_t num_classes, std::size_t embed_dim,
         ParameterSet<T>& params, Rng& rng, const std::string& root = "heads")
        : feature(id), imm(use_imm), prefix(root + "/" + to_string(id)) {
        const double fc_bound = std::sqrt(1.0 / static_cast<double>(dim));
        fc1_w = params.create(prefix + "/fc1.weight", {dim, num_classes}, fc_bound, rng);
        fc1_b = params.create(prefix + "/fc1.bias", {num_classes}, fc_bound, rng);
        if (!imm) return;
        fc2_w = params.create(prefix + "/fc2.weight", {dim, num_classes}, fc_bound, rng);
        fc2_b = params.create(prefix + "/fc2.bias", {num_classes}, fc_bound, rng);
        const double map_bound = std::sqrt(1.0 / static_cast<double>(embed_dim));
        map_w = params.create(prefix + "/gloss_map.weight", {embed_dim, dim}, map_bound, rng);
        map_b = params.create(prefix + "/gloss_map.bias", {dim}, map_bound, rng);
    }

    Var<T> logits(const Var<T>& f) const { return linear(f, fc1_w, fc1_b); }

    /// F[b*N + n] = f[b] + gloss_map(E)[n].
    Var<T> inter_modality_features(const Var<T>& f, const Var<T>& gloss_embeddings) const {
        require_shape(imm, "head " + prefix + " has no inter-modality branch");
        return broadcast_add_rows(f, linear(gloss_embeddings, map_w, map_b));
    }

    /// Mean over rows of the FC2 cross-entropies; with B = 1 this is the single-row IMM loss.
    Var<T> imm_loss(const Var<T>& F, const Tensor<T>& targets) const {
        return soft_cross_entropy(linear(F, fc2_w, fc2_b), targets);
    }

    HeadLoss<T> loss(const Var<T>& f, const Tensor<T>& cls_targets, const Var<T>& gloss_embeddings,
                     const Tensor<T>& imm_targets, double gamma) const {
        HeadLoss<T> out;
        out.cls = soft_cross_entropy(logits(f), cls_targets);
        if (!imm) {
            out.total = out.cls;
            return out;
        }
        out.imm = imm_loss(inter_modality_features(f, gloss_embeddings), imm_targets);
        out.total = add(out.cls, scale(out.imm, static_cast<T>(gamma)));
        return out;
    }

    Tensor<T> predict(const Tensor<T>& f) const {
        return softmax_rows(linear(Var<T>::constant(f), Var<T>::constant(fc1_w.value()), Var<T>::constant(fc1_b.value())).value());
    }
};

/// Head integration in place: theta1 <- mu * theta1 + (1 - mu) * theta2.
template <typename T>
void integrate_classifiers(Tensor<T>& theta1, const Tensor<T>& theta2, double mu) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw Error(ErrorKind::Parameter, "mu must lie in [0, 1]");
    require_shape(theta1.shape() == theta2.shape(), "integrate_classifiers: shape mismatch");
    for (std::size_t i = 0; i < theta1.size(); ++i)
        theta1[i] = static_cast<T>(mu * static_cast<double>(theta1[i]) + (1.0 - mu) * static_cast<double>(theta2[i]));
}

template <typename T>
void integrate_classifiers(Head<T>& head, double mu) {
    if (!head.imm) return;
    integrate_classifiers(head.fc1_w.mutable_value(), head.fc2_w.value(), mu);
    integrate_classifiers(head.fc1_b.mutable_value(), head.fc2_b.value(), mu);
}

/// True for parameters used only while training (dropped on export).
inline bool is_training_only_parameter(const std::string& name) {
    return name.find("/fc2.") != std::string::npos || name.find("/gloss_map.") != std::string::npos;
}

}  // namespace nlaslr
