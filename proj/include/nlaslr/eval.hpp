#pragma once

#include <json.hpp>

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "nlaslr/augment.hpp"
#include "nlaslr/glosslex.hpp"
#include "nlaslr/model.hpp"
#include "nlaslr/synthdata.hpp"

namespace nlaslr {

enum class CropMode { Single, Three };

inline CropMode parse_crop_mode(int crops) {
    if (crops == 1) return CropMode::Single;
    if (crops == 3) return CropMode::Three;
    throw Error(ErrorKind::Config, "--crops must be 1 or 3");
}

/// Class probabilities of each sample at the given window (no spatial crop),
/// computed in batches of `batch_size`.
template <typename T>
std::vector<std::vector<double>> predict_windows(const Model<T>& model, const std::vector<const RawSample*>& samples,
                                                 const std::vector<TemporalWindow>& windows, std::size_t batch_size = 16) {
    std::vector<std::vector<double>> out;
    out.reserve(samples.size());
    const auto grid = model.config().heatmap_grid();
    for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
        const std::size_t end = std::min(samples.size(), begin + batch_size);
        std::vector<ClipInputs<T>> clips;
        for (std::size_t i = begin; i < end; ++i) clips.push_back(make_clip_inputs<T>(*samples[i], grid, windows[i]));
        const Tensor<T> probs = model.predict(batch_inputs(clips));
        const std::size_t N = probs.dim(1);
        for (std::size_t r = 0; r < end - begin; ++r)
            out.emplace_back(probs.data() + r * N, probs.data() + (r + 1) * N);
    }
    return out;
}

/// 1-crop: centre window. 3-crop: mean of the start, middle and end windows.
template <typename T>
std::vector<std::vector<double>> predict(const Model<T>& model, const std::vector<RawSample>& samples, CropMode mode,
                                         std::size_t batch_size = 16) {
    const std::size_t TL = model.config().vknet.long_frames;
    std::vector<const RawSample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    if (mode == CropMode::Single) {
        std::vector<TemporalWindow> w;
        for (const auto& s : samples) w.push_back(center_temporal_window(s.length(), TL));
        return predict_windows(model, ptrs, w, batch_size);
    }
    std::vector<std::vector<double>> mean;
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<TemporalWindow> w;
        for (const auto& s : samples) w.push_back(three_crop_windows(s.length(), TL)[c]);
        auto p = predict_windows(model, ptrs, w, batch_size);
        if (mean.empty()) {
            mean = std::move(p);
        } else {
            for (std::size_t i = 0; i < mean.size(); ++i)
                for (std::size_t k = 0; k < mean[i].size(); ++k) mean[i][k] += p[i][k];
        }
    }
    for (auto& row : mean)
        for (auto& v : row) v /= 3.0;
    return mean;
}

// ---------------------------------------------------------------------------
// Metrics

/// Class indices by decreasing probability; ties go to the lower index.
inline std::vector<std::size_t> ranking(const std::vector<double>& probs) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    return order;
}

inline bool in_top_k(const std::vector<double>& probs, std::size_t label, std::size_t k) {
    std::size_t better = 0;
    for (std::size_t c = 0; c < probs.size(); ++c)
        if (probs[c] > probs[label] || (probs[c] == probs[label] && c < label)) ++better;
    return better < k;
}

inline double per_instance_accuracy(const std::vector<std::vector<double>>& preds, const std::vector<std::size_t>& labels,
                                    std::size_t k) {
    if (preds.size() != labels.size()) throw Error(ErrorKind::Shape, "predictions and labels differ in count");
    if (preds.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += in_top_k(preds[i], labels[i], k);
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Unweighted mean over classes that occur in `labels`.
inline double per_class_accuracy(const std::vector<std::vector<double>>& preds, const std::vector<std::size_t>& labels,
                                 std::size_t k) {
    if (preds.size() != labels.size()) throw Error(ErrorKind::Shape, "predictions and labels differ in count");
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> per;  // class -> (hits, total)
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& [hits, total] = per[labels[i]];
        hits += in_top_k(preds[i], labels[i], k);
        ++total;
    }
    if (per.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [c, ht] : per) sum += static_cast<double>(ht.first) / static_cast<double>(ht.second);
    return sum / static_cast<double>(per.size());
}

// ---------------------------------------------------------------------------
// Reports

struct SubsetStats {
    std::size_t instances = 0;
    double top1 = 0.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SubsetStats, instances, top1)

struct InstanceRecord {
    std::string id;
    std::size_t label = 0;
    std::vector<double> probs;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(InstanceRecord, id, label, probs)

struct EvalReport {
    std::string split = "test";
    int crops = 1;
    std::vector<std::string> glosses;
    std::map<std::string, double> per_instance_topk;
    std::map<std::string, double> per_class_topk;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::map<std::string, SubsetStats> visign;        // ground-truth VISign categories
    std::vector<InstanceRecord> instances;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalReport, split, crops, glosses, per_instance_topk, per_class_topk, confusion,
                                                visign, instances)

inline SubsetStats subset_top1(const std::vector<InstanceRecord>& instances, const std::vector<bool>& member) {
    SubsetStats s;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (!member[i]) continue;
        ++s.instances;
        hits += in_top_k(instances[i].probs, instances[i].label, 1);
    }
    s.top1 = s.instances ? static_cast<double>(hits) / static_cast<double>(s.instances) : 0.0;
    return s;
}

/// Assembles the report; `classes` supplies the ground-truth VISign categories.
inline EvalReport build_report(const std::vector<RawSample>& samples, const std::vector<std::vector<double>>& preds,
                               const std::vector<ClassInfo>& classes, const std::vector<std::string>& glosses, int crops,
                               const std::string& split = "test") {
    EvalReport r;
    r.split = split;
    r.crops = crops;
    r.glosses = glosses;
    const std::size_t N = glosses.size();
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        labels.push_back(samples[i].label);
        r.instances.push_back({samples[i].id, samples[i].label, preds[i]});
    }
    for (std::size_t k : {1u, 5u}) {
        if (k > N) continue;
        r.per_instance_topk[std::to_string(k)] = per_instance_accuracy(preds, labels, k);
        r.per_class_topk[std::to_string(k)] = per_class_accuracy(preds, labels, k);
    }
    r.confusion.assign(N, std::vector<std::size_t>(N, 0));
    for (std::size_t i = 0; i < preds.size(); ++i) ++r.confusion[labels[i]][ranking(preds[i])[0]];
    for (VisignCategory cat : {VisignCategory::VsS, VisignCategory::VsD, VisignCategory::NonVs}) {
        std::vector<bool> member(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) member[i] = classes.at(samples[i].label).category == cat;
        r.visign[to_string(cat)] = subset_top1(r.instances, member);
    }
    return r;
}

/// Category of one instance from a baseline prediction (top-2 margin and
/// gloss similarity of the top-2 classes).
inline VisignCategory classify_visign(double p1, double p2, double similarity, double delta_threshold = 0.1,
                                      double similarity_threshold = 0.5) {
    if (p1 - p2 > delta_threshold) return VisignCategory::NonVs;
    return similarity >= similarity_threshold ? VisignCategory::VsS : VisignCategory::VsD;
}

struct VisignPartition {
    double delta_threshold = 0.1;
    double similarity_threshold = 0.5;
    std::vector<std::string> categories;  // per instance
    std::map<std::string, SubsetStats> subsets;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VisignPartition, delta_threshold, similarity_threshold, categories, subsets)

inline VisignPartition visign_partition(const EvalReport& baseline, const GlossLexicon& lexicon, double delta_threshold = 0.1,
                                        double similarity_threshold = 0.5) {
    const GlossLexicon lex = lexicon.select(baseline.glosses);
    VisignPartition out{delta_threshold, similarity_threshold, {}, {}};
    std::map<VisignCategory, std::vector<bool>> members;
    for (VisignCategory c : {VisignCategory::VsS, VisignCategory::VsD, VisignCategory::NonVs})
        members[c].assign(baseline.instances.size(), false);
    for (std::size_t i = 0; i < baseline.instances.size(); ++i) {
        const auto& probs = baseline.instances[i].probs;
        if (probs.size() != lex.size()) throw Error(ErrorKind::Data, "instance " + baseline.instances[i].id + " has wrong class count");
        const auto order = ranking(probs);
        const auto cat = classify_visign(probs[order[0]], probs[order[1]], lex.similarity(order[0], order[1]),
                                         delta_threshold, similarity_threshold);
        out.categories.push_back(to_string(cat));
        members[cat][i] = true;
    }
    for (const auto& [cat, m] : members) out.subsets[to_string(cat)] = subset_top1(baseline.instances, m);
    return out;
}

}  // namespace nlaslr
