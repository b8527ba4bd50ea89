#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nlaslr/conv.hpp"
#include "nlaslr/gradcheck.hpp"
#include "test_util.hpp"

using namespace nlaslr;
using nlaslr::testing::random_tensor;
using V = Var<double>;

namespace {

constexpr int kInstances = 20;

void expect_gradcheck(const GradCheckReport& r, double tol = 1e-4) {
    EXPECT_TRUE(r.passed) << "max rel err " << r.max_relative_error << " at " << r.worst;
    EXPECT_LT(r.max_relative_error, tol);
    EXPECT_GT(r.entries_checked, 0u);
}

}  // namespace

TEST(Conv3d, ScalarKernelDoublesInput) {
    auto x = V::constant(Tensor<double>({1, 1, 1, 1, 1}, {3.5}));
    auto w = V::constant(Tensor<double>({1, 1, 1, 1, 1}, {2.0}));
    auto b = V::constant(Tensor<double>({1}, {0.0}));
    auto y = conv3d(x, w, b, ConvGeometry{});
    ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(y.value()[0], 7.0);
}

TEST(Conv3d, DiracKernelWithSamePaddingIsIdentity) {
    std::mt19937_64 rng(3);
    const std::size_t C = 3;
    auto x = V::constant(random_tensor({2, 4, 5, 6, C}, rng));
    Tensor<double> w({3, 3, 3, C, C});
    for (std::size_t c = 0; c < C; ++c) w[(((1 * 3 + 1) * 3 + 1) * C + c) * C + c] = 1.0;
    auto y = conv3d(x, V::constant(w), V::constant(Tensor<double>({C})), ConvGeometry{{3, 3, 3}, {1, 1, 1}, {1, 1, 1}});
    EXPECT_EQ(y.value(), x.value());
}

TEST(Conv3d, OutputShapeFollowsFloorFormula) {
    auto x = V::constant(Tensor<double>({1, 7, 9, 10, 2}));
    auto w = V::constant(Tensor<double>({3, 3, 3, 2, 4}));
    auto y = conv3d(x, w, V::constant(Tensor<double>({4})), ConvGeometry{{3, 3, 3}, {2, 2, 3}, {1, 0, 1}});
    EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 4, 4}));
}

TEST(Conv3d, RejectsIncompatibleShapes) {
    auto x = V::constant(Tensor<double>({1, 4, 4, 4, 2}));
    auto w = V::constant(Tensor<double>({3, 3, 3, 3, 4}));
    EXPECT_THROW(conv3d(x, w, V::constant(Tensor<double>({4})), ConvGeometry{{3, 3, 3}, {1, 1, 1}, {1, 1, 1}}), Error);
    auto tiny = V::constant(Tensor<double>({1, 1, 1, 1, 3}));
    EXPECT_THROW(conv3d(tiny, w, V::constant(Tensor<double>({4})), ConvGeometry{{3, 3, 3}, {1, 1, 1}, {0, 0, 0}}), Error);
}

TEST(Conv3d, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    const ConvGeometry g{{3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
    auto r = finite_difference_check([&](const std::vector<V>& in) { return conv3d(in[0], in[1], in[2], g); },
                                     {random_tensor({2, 4, 6, 6, 3}, rng), random_tensor({3, 3, 3, 3, 2}, rng),
                                      random_tensor({2}, rng)},
                                     {.max_entries = 150});
    expect_gradcheck(r);
}

TEST(Conv3d, StridedGradientOnRandomInstances) {
    for (int seed = 0; seed < kInstances; ++seed) {
        std::mt19937_64 rng(seed);
        const ConvGeometry g{{3, 2, 3}, {2, 1, 2}, {1, 0, 1}};
        auto r = finite_difference_check([&](const std::vector<V>& in) { return conv3d(in[0], in[1], in[2], g); },
                                         {random_tensor({1, 4, 3, 5, 2}, rng), random_tensor({3, 2, 3, 2, 2}, rng),
                                          random_tensor({2}, rng)});
        expect_gradcheck(r);
    }
}

TEST(ConvTranspose3d, InvertsStrideTwoShapeAndPassesGradcheck) {
    for (int seed = 0; seed < kInstances; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const ConvGeometry g{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
        auto r = finite_difference_check(
            [&](const std::vector<V>& in) { return conv_transpose3d(in[0], in[1], in[2], g, {1, 1, 1}); },
            {random_tensor({1, 2, 2, 3, 2}, rng), random_tensor({3, 3, 3, 3, 2}, rng), random_tensor({3}, rng)});
        expect_gradcheck(r);
    }
    auto y = conv_transpose3d(V::constant(Tensor<double>({1, 4, 5, 6, 2})), V::constant(Tensor<double>({3, 3, 3, 3, 2})),
                              V::constant(Tensor<double>({3})), ConvGeometry{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}}, {1, 1, 1});
    EXPECT_EQ(y.shape(), (Shape{1, 8, 10, 12, 3}));
}

TEST(ConvTranspose3d, IsAdjointOfConv) {
    // <conv(x), y> == <x, conv^T(y)> for shared weights and zero bias.
    std::mt19937_64 rng(5);
    const ConvGeometry g{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
    auto w = random_tensor({3, 3, 3, 2, 4}, rng);
    auto x = random_tensor({1, 4, 6, 4, 2}, rng);
    auto y = random_tensor({1, 2, 3, 2, 4}, rng);
    auto cx = conv3d(V::constant(x), V::constant(w), V::constant(Tensor<double>({4})), g).value();
    auto ty = conv_transpose3d(V::constant(y), V::constant(w), V::constant(Tensor<double>({2})), g, {1, 1, 1}).value();
    ASSERT_EQ(ty.shape(), x.shape());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * ty[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Conv2d, StrideTwoHalvesSpatialExtent) {
    auto x = V::constant(Tensor<double>({1, 112, 112, 1}));
    auto y = conv2d(x, V::constant(Tensor<double>({3, 3, 1, 1})), V::constant(Tensor<double>({1})), 2, 1);
    EXPECT_EQ(y.shape(), (Shape{1, 56, 56, 1}));
    auto up = conv_transpose2d(y, V::constant(Tensor<double>({3, 3, 1, 1})), V::constant(Tensor<double>({1})), 2, 1, 1);
    EXPECT_EQ(up.shape(), (Shape{1, 112, 112, 1}));
}

TEST(Conv1d, TransposedStrideTwoDoublesLength) {
    auto x = V::constant(Tensor<double>({2, 16, 3}));
    auto y = conv_transpose1d(x, V::constant(Tensor<double>({3, 5, 3})), V::constant(Tensor<double>({5})), 2, 1, 1);
    EXPECT_EQ(y.shape(), (Shape{2, 32, 5}));
    auto down = conv1d(y, V::constant(Tensor<double>({3, 5, 3})), V::constant(Tensor<double>({3})), 2, 1);
    EXPECT_EQ(down.shape(), (Shape{2, 16, 3}));
}

TEST(RankSpecialisedConvs, GradientsOnRandomInstances) {
    for (int seed = 0; seed < kInstances; ++seed) {
        std::mt19937_64 rng(200 + seed);
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return conv2d(in[0], in[1], in[2], 2, 1); },
            {random_tensor({2, 6, 4, 2}, rng), random_tensor({3, 3, 2, 3}, rng), random_tensor({3}, rng)}));
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return conv_transpose2d(in[0], in[1], in[2], 2, 1, 1); },
            {random_tensor({1, 3, 2, 2}, rng), random_tensor({3, 3, 3, 2}, rng), random_tensor({3}, rng)}));
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return conv1d(in[0], in[1], in[2], 2, 1); },
            {random_tensor({2, 8, 2}, rng), random_tensor({3, 2, 3}, rng), random_tensor({3}, rng)}));
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return conv_transpose1d(in[0], in[1], in[2], 2, 1, 1); },
            {random_tensor({2, 4, 2}, rng), random_tensor({3, 3, 2}, rng), random_tensor({3}, rng)}));
    }
}

TEST(DenseOps, GradientsOnRandomInstances) {
    for (int seed = 0; seed < kInstances; ++seed) {
        std::mt19937_64 rng(300 + seed);
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return linear(in[0], in[1], in[2]); },
            {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)}));
        expect_gradcheck(finite_difference_check([](const std::vector<V>& in) { return relu(in[0]); },
                                                 {random_tensor({4, 7}, rng)}));
        expect_gradcheck(finite_difference_check([](const std::vector<V>& in) { return global_average_pool(in[0]); },
                                                 {random_tensor({2, 2, 3, 2, 3}, rng)}));
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return avg_pool3d(in[0], {2, 2, 2}); }, {random_tensor({2, 4, 2, 4, 3}, rng)}));
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return concat<double>({in[0], in[1], in[2]}); },
            {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng), random_tensor({3, 1}, rng)}));
        expect_gradcheck(finite_difference_check([](const std::vector<V>& in) { return slice_cols(in[0], 1, 4); },
                                                 {random_tensor({3, 5}, rng)}));
        expect_gradcheck(finite_difference_check([](const std::vector<V>& in) { return softmax(in[0]); },
                                                 {random_tensor({3, 5}, rng, -3, 3)}));
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return broadcast_add_rows(in[0], in[1]); },
            {random_tensor({2, 3}, rng), random_tensor({4, 3}, rng)}));
        expect_gradcheck(finite_difference_check(
            [](const std::vector<V>& in) { return add(scale(in[0], 0.3), in[1]); },
            {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}));
        auto targets = random_tensor({4, 6}, rng, 0.0, 1.0);
        for (std::size_t r = 0; r < 4; ++r) {
            double total = 0;
            for (std::size_t c = 0; c < 6; ++c) total += targets[r * 6 + c];
            for (std::size_t c = 0; c < 6; ++c) targets[r * 6 + c] /= total;
        }
        expect_gradcheck(finite_difference_check(
            [&](const std::vector<V>& in) { return soft_cross_entropy(in[0], targets); }, {random_tensor({4, 6}, rng, -3, 3)}));
    }
}

TEST(DenseOps, SimpleValues) {
    auto c = V::constant(Tensor<double>({2, 3, 2, 2, 4}, 1.75));
    auto pooled = global_average_pool(c);
    for (double v : pooled.value().values()) EXPECT_DOUBLE_EQ(v, 1.75);
    auto r = relu(V::constant(Tensor<double>({2}, {-1.0, 2.0}))).value();
    EXPECT_EQ(r[0], 0.0);
    EXPECT_EQ(r[1], 2.0);
    auto s = softmax(V::constant(Tensor<double>({1, 2}, {0.0, 0.0}))).value();
    EXPECT_DOUBLE_EQ(s[0], 0.5);
    EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(SoftCrossEntropy, LimitsAndClosedForms) {
    Tensor<double> onehot({1, 3}, {0.0, 1.0, 0.0});
    auto extreme = soft_cross_entropy(V::constant(Tensor<double>({1, 3}, {-50.0, 50.0, -50.0})), onehot);
    EXPECT_LT(extreme.value()[0], 1e-30);

    Tensor<double> uniform({1, 4}, 0.25);
    auto loss = soft_cross_entropy(V::constant(Tensor<double>({1, 4}, 0.7)), uniform);
    EXPECT_NEAR(loss.value()[0], 1.3862943611198906, 1e-12);
}

TEST(SoftCrossEntropy, GradientIsProbsMinusTargetOverBatch) {
    std::mt19937_64 rng(42);
    auto logits = random_tensor({3, 5}, rng, -2, 2);
    Tensor<double> targets({3, 5}, 0.0);
    for (std::size_t r = 0; r < 3; ++r) {
        targets[r * 5 + r] = 0.7;
        targets[r * 5 + 4] = 0.3;
    }
    auto z = V::leaf(logits);
    backward(soft_cross_entropy(z, targets));
    auto p = softmax_rows(logits);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(z.grad()[i], (p[i] - targets[i]) / 3.0, 1e-15);

    auto r = finite_difference_check([&](const std::vector<V>& in) { return soft_cross_entropy(in[0], targets); }, {logits},
                                     {.step = 1e-5, .tolerance = 1e-6});
    expect_gradcheck(r, 1e-6);
}

TEST(Graph, ConcatThenSliceRestoresPartsBitwise) {
    std::mt19937_64 rng(8);
    auto a = V::constant(random_tensor({3, 2}, rng));
    auto b = V::constant(random_tensor({3, 5}, rng));
    auto c = concat<double>({a, b});
    EXPECT_EQ(slice_cols(c, 0, 2).value(), a.value());
    EXPECT_EQ(slice_cols(c, 2, 7).value(), b.value());
}

TEST(Graph, OpsDoNotMutateInputsAndAreDeterministic) {
    std::mt19937_64 rng(9);
    auto x = random_tensor({1, 4, 4, 4, 2}, rng);
    auto w = random_tensor({3, 3, 3, 2, 2}, rng);
    const auto x0 = x, w0 = w;
    const ConvGeometry g{{3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
    auto run = [&] {
        auto xv = V::leaf(x);
        auto y = global_average_pool(relu(conv3d(xv, V::leaf(w), V::leaf(Tensor<double>({2})), g)));
        backward(weighted_sum(y, Tensor<double>(y.shape(), 1.0)));
        return std::make_pair(y.value(), xv.grad());
    };
    auto first = run();
    auto second = run();
    EXPECT_EQ(first, second);
    EXPECT_EQ(x, x0);
    EXPECT_EQ(w, w0);
}

TEST(Graph, LeafGradientsAccumulateAcrossBackwardCalls) {
    auto x = V::leaf(Tensor<double>({1}, {2.0}));
    backward(scale(x, 3.0));
    backward(scale(x, 3.0));
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
    x.zero_grad();
    EXPECT_FALSE(x.has_grad());
}

TEST(GradCheck, DetectsWrongGradient) {
    // A deliberately broken op: forward squares, backward claims identity.
    auto broken = [](const std::vector<V>& in) {
        Tensor<double> out = in[0].value();
        for (auto& v : out.values()) v = v * v;
        return detail::make_result<double>(std::move(out), {in[0]}, [](Node<double>& self) {
            detail::add_into(self.parents[0]->grad_buffer(), self.grad);
        });
    };
    std::mt19937_64 rng(1);
    auto r = finite_difference_check(broken, {random_tensor({4}, rng, 1.0, 2.0)});
    EXPECT_FALSE(r.passed);
}
