#pragma once
// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls the library routine it checks.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "nlaslr/nlaslr.hpp"
#include "test_util.hpp"

namespace nlaslr::oracle {

using HighPrecision = boost::multiprecision::cpp_bin_float_50;

// ---------------------------------------------------------------------------
// Language-aware smoothing

/// Term-by-term label in 50-digit arithmetic: cosines straight from the raw
/// rows, no max-shift in the softmax.
inline std::vector<double> language_aware_label(const Eigen::MatrixXd& e, std::size_t b, double eps, double tau) {
    const auto n = static_cast<std::size_t>(e.rows());
    auto dot = [&](std::size_t i, std::size_t j) {
        HighPrecision acc = 0;
        for (Eigen::Index k = 0; k < e.cols(); ++k) acc += HighPrecision(e(i, k)) * HighPrecision(e(j, k));
        return acc;
    };
    std::vector<HighPrecision> weight(n);
    HighPrecision denom = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == b) continue;
        const HighPrecision cos = dot(b, i) / boost::multiprecision::sqrt(dot(b, b) * dot(i, i));
        weight[i] = boost::multiprecision::exp(cos / HighPrecision(tau));
        denom += weight[i];
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = i == b ? static_cast<double>(HighPrecision(1) - HighPrecision(eps))
                        : static_cast<double>(HighPrecision(eps) * weight[i] / denom);
    return out;
}

inline GlossLexicon random_lexicon(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd e(n, d);
    for (Eigen::Index i = 0; i < e.rows(); ++i)
        for (Eigen::Index j = 0; j < e.cols(); ++j) e(i, j) = g(rng);
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < n; ++i) tokens.push_back("w" + std::to_string(i));
    return GlossLexicon(tokens, e);
}

struct SmoothingCheck {
    double worst_random = 0.0;    // max |library - oracle| over all cases and entries
    double worst_example = 0.0;   // worked example [0.8, 0.17616, 0.02384]
    double seconds = 0.0;
    std::size_t cases = 0;
};

inline SmoothingCheck check_language_aware(std::size_t cases, std::uint64_t seed = 2024) {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> size_dist(2, 50);
    const double eps_values[] = {0.1, 0.2, 0.3};
    const double tau_values[] = {0.25, 0.5, 1.0};
    SmoothingCheck out;
    for (std::size_t trial = 0; trial < cases; ++trial) {
        const std::size_t n = size_dist(rng);
        const GlossLexicon lex = random_lexicon(n, 10, rng);
        const std::size_t b = rng() % n;
        const double eps = eps_values[rng() % 3], tau = tau_values[rng() % 3];
        const auto y = language_aware_soft_label(lex, b, eps, tau);
        const auto expected = language_aware_label(lex.embeddings(), b, eps, tau);
        for (std::size_t i = 0; i < n; ++i) out.worst_random = std::max(out.worst_random, std::abs(y.probs[i] - expected[i]));
        ++out.cases;
    }
    const std::vector<double> s{1.0, 0.5, -0.5};
    const auto y = language_aware_soft_label(std::span<const double>(s), 0, 0.2, 0.5);
    const double expected[] = {0.8, 0.17616, 0.02384};
    for (std::size_t i = 0; i < 3; ++i) out.worst_example = std::max(out.worst_example, std::abs(y.probs[i] - expected[i]));
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

/// Top-k by explicit selection: repeatedly take the largest remaining
/// probability, lowest index first on ties.
inline bool selected_in_top_k(const std::vector<double>& probs, std::size_t label, std::size_t k) {
    std::vector<bool> taken(probs.size(), false);
    for (std::size_t round = 0; round < k && round < probs.size(); ++round) {
        std::size_t best = probs.size();
        for (std::size_t c = 0; c < probs.size(); ++c)
            if (!taken[c] && (best == probs.size() || probs[c] > probs[best])) best = c;
        if (best == label) return true;
        taken[best] = true;
    }
    return false;
}

inline double instance_accuracy(const std::vector<std::vector<double>>& preds, const std::vector<std::size_t>& labels,
                                std::size_t k) {
    double hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += selected_in_top_k(preds[i], labels[i], k) ? 1.0 : 0.0;
    return hits / static_cast<double>(preds.size());
}

inline double class_accuracy(const std::vector<std::vector<double>>& preds, const std::vector<std::size_t>& labels,
                             std::size_t k, std::size_t num_classes) {
    double total = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        double hits = 0, count = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (labels[i] != c) continue;
            count += 1;
            hits += selected_in_top_k(preds[i], c, k) ? 1.0 : 0.0;
        }
        if (count == 0) continue;
        total += hits / count;
        ++present;
    }
    return total / static_cast<double>(present);
}

struct MetricsCheck {
    double worst = 0.0;
    double hand_instance = 0.0, hand_class = 0.0;
    std::size_t sets = 0;
};

inline MetricsCheck check_metrics(std::size_t sets, std::uint64_t seed = 77) {
    std::mt19937_64 rng(seed);
    MetricsCheck out;
    for (std::size_t s = 0; s < sets; ++s) {
        const std::size_t N = 2 + rng() % 12, M = 1 + rng() % 40;
        std::vector<std::vector<double>> preds(M, std::vector<double>(N));
        std::vector<std::size_t> labels(M);
        for (std::size_t i = 0; i < M; ++i) {
            // Coarse values so ties actually occur.
            for (auto& p : preds[i]) p = static_cast<double>(rng() % 5) / 4.0;
            labels[i] = rng() % N;
        }
        for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{5}, N}) {
            out.worst = std::max(out.worst, std::abs(per_instance_accuracy(preds, labels, k) - instance_accuracy(preds, labels, k)));
            out.worst = std::max(out.worst, std::abs(per_class_accuracy(preds, labels, k) - class_accuracy(preds, labels, k, N)));
        }
        ++out.sets;
    }
    // Class A (0): one of two right; class B (1): its one sample right.
    const std::vector<std::vector<double>> preds{{0.9, 0.1}, {0.2, 0.8}, {0.3, 0.7}};
    const std::vector<std::size_t> labels{0, 0, 1};
    out.hand_instance = per_instance_accuracy(preds, labels, 1);
    out.hand_class = per_class_accuracy(preds, labels, 1);
    return out;
}

// ---------------------------------------------------------------------------
// Single training iteration traced by hand

inline ModelConfig tiny_model_config(std::size_t num_classes, std::size_t embed_dim) {
    ModelConfig m;
    m.vknet = VKNetConfig::tiny();
    m.num_classes = num_classes;
    m.embedding_dim = embed_dim;
    for (std::size_t i = 0; i < num_classes; ++i) m.glosses.push_back("w" + std::to_string(i));
    return m;
}

/// Four-class spec sized for the tiny network (4 frames, 8x8 video).
inline SynthSpec tiny_spec(std::uint64_t seed = 3) {
    SynthSpec spec;
    spec.num_classes = 4;
    spec.vs_s_pairs = spec.vs_d_pairs = 1;
    spec.train_per_class = 3;
    spec.dev_per_class = 1;
    spec.test_per_class = 2;
    spec.raw_length = 6;
    spec.clip_length = 4;
    spec.video_height = spec.video_width = 8;
    spec.heatmap_height = spec.heatmap_width = 4;
    spec.keypoints = 2;
    spec.embedding_dim = 8;
    spec.seed = seed;
    return spec;
}

inline Dataset tiny_dataset(std::uint64_t seed = 3) { return generate_dataset(tiny_spec(seed)); }

inline TrainConfig tiny_train_config() {
    TrainConfig c;
    c.vknet = VKNetConfig::tiny();
    c.epochs = 2;
    c.batch_size = 4;
    c.train_top1 = "running";
    return c;
}

struct TraceCheck {
    double loss_error = 0.0;
    double worst_parameter_error = 0.0;  // max |train_step - hand trace| over every scalar
    std::string worst_parameter;
    std::size_t scalars = 0;
    double integration_effect = 0.0;     // max |theta1'' - theta1'|, shows integration was exercised
};

namespace detail {

using Matrix = std::vector<std::vector<long double>>;

inline Matrix to_matrix(const Tensor<double>& t) {
    const std::size_t rows = t.dim(0), cols = t.size() / rows;
    Matrix m(rows, std::vector<long double>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m[r][c] = t[r * cols + c];
    return m;
}

/// Row softmax and the mean soft cross-entropy over rows, in long double.
inline long double softmax_ce(const Matrix& z, const Matrix& y, Matrix& p) {
    long double loss = 0;
    p = z;
    for (std::size_t r = 0; r < z.size(); ++r) {
        long double total = 0;
        for (std::size_t c = 0; c < z[r].size(); ++c) total += (p[r][c] = std::exp(z[r][c]));
        for (std::size_t c = 0; c < z[r].size(); ++c) {
            p[r][c] /= total;
            loss -= y[r][c] * std::log(p[r][c]);
        }
    }
    return loss / static_cast<long double>(z.size());
}

/// x W + b for x: R x D, W: D x N.
inline Matrix affine(const Matrix& x, const Tensor<double>& w, const Tensor<double>& b) {
    const std::size_t D = w.dim(0), N = w.dim(1);
    Matrix out(x.size(), std::vector<long double>(N));
    for (std::size_t r = 0; r < x.size(); ++r)
        for (std::size_t n = 0; n < N; ++n) {
            long double acc = b[n];
            for (std::size_t d = 0; d < D; ++d) acc += x[r][d] * static_cast<long double>(w[d * N + n]);
            out[r][n] = acc;
        }
    return out;
}

}  // namespace detail

/// Runs one train_step on a 2-sample fixture and replays it by hand:
/// loss from the features with explicit loops, head gradients in closed
/// form, backbone gradients by pulling the hand feature gradients through
/// the network, then Adam and head integration scalar by scalar.
inline TraceCheck check_single_step(std::uint64_t seed = 5) {
    using detail::Matrix;
    const std::size_t N = 3, de = 4, B = 2;
    const double gamma = 0.6, mu = 0.95, lr = 1e-3, eps = 0.2, tau = 0.5, lambda = 0.3;
    const AdamConfig adam{};
    const ModelConfig config = tiny_model_config(N, de);

    std::mt19937_64 gen(seed);
    const GlossLexicon lex = random_lexicon(N, de, gen);
    const Tensor<double> E = lex.embedding_tensor<double>();
    const VKNetInput<double> input = testing::random_vknet_input(config.vknet, B, gen);
    const std::vector<std::size_t> labels{0, 2}, perm{1, 0};

    // Targets by hand: smoothed labels mixed with the permuted partner, IMM
    // rows blended the same way.
    Matrix y_cls(B, std::vector<long double>(N)), y_imm(B * N, std::vector<long double>(N, 0.0L));
    for (std::size_t i = 0; i < B; ++i) {
        const auto a = language_aware_label(lex.embeddings(), labels[i], eps, tau);
        const auto c = language_aware_label(lex.embeddings(), labels[perm[i]], eps, tau);
        for (std::size_t k = 0; k < N; ++k) y_cls[i][k] = lambda * a[k] + (1.0L - lambda) * c[k];
        for (std::size_t n = 0; n < N; ++n)
            for (auto [b, w] : {std::pair{labels[i], (long double)lambda}, std::pair{labels[perm[i]], 1.0L - lambda}}) {
                if (n == b) {
                    y_imm[i * N + n][b] += w;
                } else {
                    y_imm[i * N + n][b] += 0.5L * w;
                    y_imm[i * N + n][n] += 0.5L * w;
                }
            }
    }
    auto to_tensor = [](const Matrix& m) {
        Tensor<double> t({m.size(), m[0].size()});
        for (std::size_t r = 0; r < m.size(); ++r)
            for (std::size_t c = 0; c < m[r].size(); ++c) t[r * m[r].size() + c] = static_cast<double>(m[r][c]);
        return t;
    };

    // The model under test.
    Model<double> model(config, seed);
    std::map<std::string, Tensor<double>> before;
    for (const auto& p : model.params().entries()) before[p.name] = p.var.value();
    const StepLosses got = train_step(model, input, to_tensor(y_cls), to_tensor(y_imm), Var<double>::constant(E), gamma, mu,
                                      lr, adam);

    // Reference: an identically initialised copy supplies the features and,
    // given hand-computed feature gradients, the backbone gradients.
    Model<double> ref(config, seed);
    const FeatureBundle<double> fb = ref.forward(input);
    const Matrix Em = detail::to_matrix(E);
    long double loss = 0;
    std::map<std::string, Matrix> grads;  // head parameter gradients by name
    std::vector<Var<double>> pulls;
    for (const auto& h : ref.heads()) {
        const Var<double> fv = select_feature(fb, h.feature);
        const Matrix f = detail::to_matrix(fv.value());
        const std::size_t D = f[0].size();
        Matrix p1;
        loss += detail::softmax_ce(detail::affine(f, h.fc1_w.value(), h.fc1_b.value()), y_cls, p1);
        Matrix dz1(B, std::vector<long double>(N)), df(B, std::vector<long double>(D, 0.0L));
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t k = 0; k < N; ++k) dz1[i][k] = (p1[i][k] - y_cls[i][k]) / B;
        auto accumulate_fc = [&](const std::string& prefix, const Matrix& x, const Matrix& dz, const Tensor<double>& w,
                                 Matrix& dx) {
            Matrix gw(D, std::vector<long double>(N, 0.0L)), gb(1, std::vector<long double>(N, 0.0L));
            for (std::size_t r = 0; r < x.size(); ++r)
                for (std::size_t k = 0; k < N; ++k) {
                    gb[0][k] += dz[r][k];
                    for (std::size_t d = 0; d < D; ++d) {
                        gw[d][k] += x[r][d] * dz[r][k];
                        dx[r][d] += dz[r][k] * static_cast<long double>(w[d * N + k]);
                    }
                }
            grads[prefix + ".weight"] = gw;
            grads[prefix + ".bias"] = gb;
        };
        accumulate_fc(h.prefix + "/fc1", f, dz1, h.fc1_w.value(), df);
        if (h.imm) {
            const Matrix mapped = detail::affine(Em, h.map_w.value(), h.map_b.value());  // N x D
            Matrix F(B * N, std::vector<long double>(D));
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t d = 0; d < D; ++d) F[i * N + n][d] = f[i][d] + mapped[n][d];
            Matrix p2;
            loss += gamma * detail::softmax_ce(detail::affine(F, h.fc2_w.value(), h.fc2_b.value()), y_imm, p2);
            Matrix dz2(B * N, std::vector<long double>(N)), dF(B * N, std::vector<long double>(D, 0.0L));
            for (std::size_t r = 0; r < B * N; ++r)
                for (std::size_t k = 0; k < N; ++k) dz2[r][k] = gamma * (p2[r][k] - y_imm[r][k]) / (B * N);
            accumulate_fc(h.prefix + "/fc2", F, dz2, h.fc2_w.value(), dF);
            Matrix gm(de, std::vector<long double>(D, 0.0L)), gmb(1, std::vector<long double>(D, 0.0L));
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t d = 0; d < D; ++d) {
                        const long double g = dF[i * N + n][d];
                        df[i][d] += g;
                        gmb[0][d] += g;
                        for (std::size_t j = 0; j < de; ++j) gm[j][d] += Em[n][j] * g;
                    }
            grads[h.prefix + "/gloss_map.weight"] = gm;
            grads[h.prefix + "/gloss_map.bias"] = gmb;
        }
        Tensor<double> dft({B, D});
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t d = 0; d < D; ++d) dft[i * D + d] = static_cast<double>(df[i][d]);
        pulls.push_back(weighted_sum(fv, dft));
    }
    ref.params().zero_grad();
    backward(sum<double>(std::span<const Var<double>>(pulls)));

    TraceCheck out;
    out.loss_error = std::abs(static_cast<double>(loss) - got.total);

    // Adam from zero moments at step 1, then integration on FC1.
    std::map<std::string, std::vector<long double>> expected;
    for (const auto& p : ref.params().entries()) {
        const Tensor<double>& theta = before.at(p.name);
        std::vector<long double> g(theta.size());
        if (auto it = grads.find(p.name); it != grads.end()) {
            std::size_t idx = 0;
            for (const auto& row : it->second)
                for (long double v : row) g[idx++] = v;
        } else {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = p.var.has_grad() ? p.var.grad()[i] : 0.0;
        }
        std::vector<long double> next(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const long double gi = g[i] + adam.weight_decay * theta[i];
            const long double m = (1.0L - adam.beta1) * gi, v = (1.0L - adam.beta2) * gi * gi;
            const long double mhat = m / (1.0L - adam.beta1), vhat = v / (1.0L - adam.beta2);
            next[i] = theta[i] - lr * mhat / (std::sqrt(vhat) + adam.epsilon);
        }
        expected[p.name] = std::move(next);
    }
    for (auto& [name, theta1] : expected) {
        const auto pos = name.find("/fc1.");
        if (pos == std::string::npos) continue;
        const std::string twin = name.substr(0, pos) + "/fc2." + name.substr(pos + 5);
        const auto it = expected.find(twin);
        if (it == expected.end()) continue;
        for (std::size_t i = 0; i < theta1.size(); ++i) {
            const long double integrated = mu * theta1[i] + (1.0L - mu) * it->second[i];
            out.integration_effect = std::max(out.integration_effect, static_cast<double>(std::abs(integrated - theta1[i])));
            theta1[i] = integrated;
        }
    }
    for (const auto& p : model.params().entries()) {
        const auto& want = expected.at(p.name);
        for (std::size_t i = 0; i < want.size(); ++i) {
            const double err = std::abs(static_cast<double>(want[i]) - p.var.value()[i]);
            if (err > out.worst_parameter_error || out.worst_parameter.empty()) {
                out.worst_parameter_error = std::max(out.worst_parameter_error, err);
                out.worst_parameter = p.name + "[" + std::to_string(i) + "]";
            }
            ++out.scalars;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient suite

struct GradientSuite {
    double worst_op = 0.0;
    std::string worst_op_name;
    double composite = 0.0;
    std::string composite_where;
    std::size_t op_checks = 0;
};

inline GradientSuite check_gradients(int instances = 5) {
    using V = Var<double>;
    using testing::random_tensor;
    GradientSuite out;
    auto note = [&](const std::string& name, const GradCheckReport& r) {
        ++out.op_checks;
        if (r.max_relative_error >= out.worst_op) {
            out.worst_op = r.max_relative_error;
            out.worst_op_name = name;
        }
    };
    for (int s = 0; s < instances; ++s) {
        std::mt19937_64 rng(900 + s);
        const ConvGeometry g{{3, 2, 3}, {2, 1, 2}, {1, 0, 1}};
        note("conv3d", finite_difference_check([&](const std::vector<V>& in) { return conv3d(in[0], in[1], in[2], g); },
                                               {random_tensor({1, 4, 3, 5, 2}, rng), random_tensor({3, 2, 3, 2, 2}, rng),
                                                random_tensor({2}, rng)}));
        const ConvGeometry gt{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
        note("conv_transpose3d",
             finite_difference_check([&](const std::vector<V>& in) { return conv_transpose3d(in[0], in[1], in[2], gt, {1, 1, 1}); },
                                     {random_tensor({1, 2, 2, 3, 2}, rng), random_tensor({3, 3, 3, 3, 2}, rng),
                                      random_tensor({3}, rng)}));
        note("conv2d", finite_difference_check([](const std::vector<V>& in) { return conv2d(in[0], in[1], in[2], 2, 1); },
                                               {random_tensor({2, 6, 4, 2}, rng), random_tensor({3, 3, 2, 3}, rng),
                                                random_tensor({3}, rng)}));
        note("conv_transpose2d",
             finite_difference_check([](const std::vector<V>& in) { return conv_transpose2d(in[0], in[1], in[2], 2, 1, 1); },
                                     {random_tensor({1, 3, 2, 2}, rng), random_tensor({3, 3, 3, 2}, rng), random_tensor({3}, rng)}));
        note("conv1d", finite_difference_check([](const std::vector<V>& in) { return conv1d(in[0], in[1], in[2], 2, 1); },
                                               {random_tensor({2, 8, 2}, rng), random_tensor({3, 2, 3}, rng),
                                                random_tensor({3}, rng)}));
        note("conv_transpose1d",
             finite_difference_check([](const std::vector<V>& in) { return conv_transpose1d(in[0], in[1], in[2], 2, 1, 1); },
                                     {random_tensor({2, 4, 2}, rng), random_tensor({3, 3, 2}, rng), random_tensor({3}, rng)}));
        note("linear", finite_difference_check([](const std::vector<V>& in) { return linear(in[0], in[1], in[2]); },
                                               {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)}));
        note("relu", finite_difference_check([](const std::vector<V>& in) { return relu(in[0]); }, {random_tensor({4, 7}, rng)}));
        note("reshape", finite_difference_check([](const std::vector<V>& in) { return reshape(in[0], {6, 2}); },
                                                {random_tensor({3, 4}, rng)}));
        note("global_average_pool", finite_difference_check([](const std::vector<V>& in) { return global_average_pool(in[0]); },
                                                            {random_tensor({2, 2, 3, 2, 3}, rng)}));
        note("avg_pool3d", finite_difference_check([](const std::vector<V>& in) { return avg_pool3d(in[0], {2, 2, 2}); },
                                                   {random_tensor({2, 4, 2, 4, 3}, rng)}));
        note("concat", finite_difference_check([](const std::vector<V>& in) { return concat<double>({in[0], in[1], in[2]}); },
                                               {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng), random_tensor({3, 1}, rng)}));
        note("slice_cols", finite_difference_check([](const std::vector<V>& in) { return slice_cols(in[0], 1, 4); },
                                                   {random_tensor({3, 5}, rng)}));
        note("softmax", finite_difference_check([](const std::vector<V>& in) { return softmax(in[0]); },
                                                {random_tensor({3, 5}, rng, -3, 3)}));
        note("broadcast_add_rows",
             finite_difference_check([](const std::vector<V>& in) { return broadcast_add_rows(in[0], in[1]); },
                                     {random_tensor({2, 3}, rng), random_tensor({4, 3}, rng)}));
        note("add_scale", finite_difference_check([](const std::vector<V>& in) { return add(scale(in[0], 0.3), in[1]); },
                                                  {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}));
        auto targets = random_tensor({4, 6}, rng, 0.0, 1.0);
        for (std::size_t r = 0; r < 4; ++r) {
            double total = 0;
            for (std::size_t c = 0; c < 6; ++c) total += targets[r * 6 + c];
            for (std::size_t c = 0; c < 6; ++c) targets[r * 6 + c] /= total;
        }
        note("soft_cross_entropy",
             finite_difference_check([&](const std::vector<V>& in) { return soft_cross_entropy(in[0], targets); },
                                     {random_tensor({4, 6}, rng, -3, 3)}));
    }

    // Tiny VKNet with every head, summed losses as in training.
    const std::size_t N = 3, de = 4;
    Model<double> model(tiny_model_config(N, de), 21);
    std::mt19937_64 gen(22);
    const GlossLexicon lex = random_lexicon(N, de, gen);
    const auto E = Var<double>::constant(lex.embedding_tensor<double>());
    const auto input = testing::random_vknet_input(model.config().vknet, 2, gen);
    Tensor<double> cls({2, N}, 0.0);
    cls[0] = 0.8, cls[1] = 0.2, cls[N + 2] = 1.0;
    const auto imm = imm_targets<double>({0, 2}, N);
    const auto report = parameter_gradient_check(model.params(), [&] {
        const auto fb = model.forward(input);
        std::vector<Var<double>> terms;
        for (const auto& h : model.heads()) terms.push_back(h.loss(select_feature(fb, h.feature), cls, E, imm, 0.7).total);
        return sum<double>(std::span<const Var<double>>(terms));
    }, GradCheckOptions{.step = 1e-5});  // summed loss is O(10): a 1e-6 step drowns small entries in roundoff
    out.composite = report.max_relative_error;
    out.composite_where = report.worst;
    return out;
}

}  // namespace nlaslr::oracle
