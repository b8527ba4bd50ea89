#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "nlaslr/autograd.hpp"

namespace nlaslr {

/// Kernel, stride and zero padding per (T, H, W) axis.
struct ConvGeometry {
    std::array<std::size_t, 3> kernel{1, 1, 1};
    std::array<std::size_t, 3> stride{1, 1, 1};
    std::array<std::size_t, 3> padding{0, 0, 0};

    std::size_t taps() const { return kernel[0] * kernel[1] * kernel[2]; }

    /// Floor formula (in + 2p - k) / s + 1.
    std::array<std::size_t, 3> output_extent(const std::array<std::size_t, 3>& in) const {
        std::array<std::size_t, 3> out{};
        for (int a = 0; a < 3; ++a) {
            require_shape(stride[a] > 0 && in[a] + 2 * padding[a] >= kernel[a],
                          "conv: extent " + std::to_string(in[a]) + " too small for kernel " +
                              std::to_string(kernel[a]));
            out[a] = (in[a] + 2 * padding[a] - kernel[a]) / stride[a] + 1;
        }
        return out;
    }

    /// Extent produced by the transposed convolution with the given output padding.
    std::array<std::size_t, 3> transposed_extent(const std::array<std::size_t, 3>& in,
                                                 const std::array<std::size_t, 3>& output_padding) const {
        std::array<std::size_t, 3> out{};
        for (int a = 0; a < 3; ++a) {
            require_shape(in[a] > 0 && output_padding[a] < stride[a] &&
                              (in[a] - 1) * stride[a] + kernel[a] + output_padding[a] >= 2 * padding[a] + 1,
                          "transposed conv: invalid geometry on axis " + std::to_string(a));
            out[a] = (in[a] - 1) * stride[a] + kernel[a] + output_padding[a] - 2 * padding[a];
        }
        return out;
    }
};

namespace detail {

struct ConvPlan {
    std::size_t batch = 0, channels = 0;
    std::array<std::size_t, 3> image{};  // extents of the dense image side
    std::array<std::size_t, 3> grid{};   // extents of the strided patch grid
    ConvGeometry geom;

    std::size_t rows() const { return batch * grid[0] * grid[1] * grid[2]; }
    std::size_t cols() const { return geom.taps() * channels; }
};

/// Gathers every receptive field of `image` into one row of `cols`.
template <typename T>
void im2col(const T* image, const ConvPlan& p, T* cols) {
    const auto& [kt, kh, kw] = p.geom.kernel;
    const auto& [st, sh, sw] = p.geom.stride;
    const auto& [pt, ph, pw] = p.geom.padding;
    const std::size_t C = p.channels, row_len = p.cols();
    std::size_t row = 0;
    for (std::size_t b = 0; b < p.batch; ++b)
        for (std::size_t ot = 0; ot < p.grid[0]; ++ot)
            for (std::size_t oh = 0; oh < p.grid[1]; ++oh)
                for (std::size_t ow = 0; ow < p.grid[2]; ++ow, ++row) {
                    T* dst = cols + row * row_len;
                    for (std::size_t dt = 0; dt < kt; ++dt) {
                        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(ot * st + dt) - static_cast<std::ptrdiff_t>(pt);
                        for (std::size_t dh = 0; dh < kh; ++dh) {
                            const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(oh * sh + dh) - static_cast<std::ptrdiff_t>(ph);
                            for (std::size_t dw = 0; dw < kw; ++dw, dst += C) {
                                const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(ow * sw + dw) - static_cast<std::ptrdiff_t>(pw);
                                if (t < 0 || h < 0 || w < 0 || t >= static_cast<std::ptrdiff_t>(p.image[0]) ||
                                    h >= static_cast<std::ptrdiff_t>(p.image[1]) || w >= static_cast<std::ptrdiff_t>(p.image[2])) {
                                    std::fill_n(dst, C, T{0});
                                } else {
                                    const T* src = image + (((b * p.image[0] + t) * p.image[1] + h) * p.image[2] + w) * C;
                                    std::copy_n(src, C, dst);
                                }
                            }
                        }
                    }
                }
}

/// Adjoint of im2col: scatter-adds patch rows back into `image`.
template <typename T>
void col2im(const T* cols, const ConvPlan& p, T* image) {
    const auto& [kt, kh, kw] = p.geom.kernel;
    const auto& [st, sh, sw] = p.geom.stride;
    const auto& [pt, ph, pw] = p.geom.padding;
    const std::size_t C = p.channels, row_len = p.cols();
    std::size_t row = 0;
    for (std::size_t b = 0; b < p.batch; ++b)
        for (std::size_t ot = 0; ot < p.grid[0]; ++ot)
            for (std::size_t oh = 0; oh < p.grid[1]; ++oh)
                for (std::size_t ow = 0; ow < p.grid[2]; ++ow, ++row) {
                    const T* src = cols + row * row_len;
                    for (std::size_t dt = 0; dt < kt; ++dt) {
                        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(ot * st + dt) - static_cast<std::ptrdiff_t>(pt);
                        for (std::size_t dh = 0; dh < kh; ++dh) {
                            const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(oh * sh + dh) - static_cast<std::ptrdiff_t>(ph);
                            for (std::size_t dw = 0; dw < kw; ++dw, src += C) {
                                const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(ow * sw + dw) - static_cast<std::ptrdiff_t>(pw);
                                if (t < 0 || h < 0 || w < 0 || t >= static_cast<std::ptrdiff_t>(p.image[0]) ||
                                    h >= static_cast<std::ptrdiff_t>(p.image[1]) || w >= static_cast<std::ptrdiff_t>(p.image[2]))
                                    continue;
                                T* dst = image + (((b * p.image[0] + t) * p.image[1] + h) * p.image[2] + w) * C;
                                for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
                            }
                        }
                    }
                }
}

inline std::array<std::size_t, 3> spatial_extent(const Shape& s) { return {s[1], s[2], s[3]}; }

}  // namespace detail

/// 3D cross-correlation. x: B x T x H x W x Cin, weight: kt x kh x kw x Cin x Cout,
/// bias: Cout. Returns B x To x Ho x Wo x Cout.
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& geom) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    require_shape(xs.size() == 5, "conv3d expects B x T x H x W x C input, got " + to_string(xs));
    require_shape(ws.size() == 5 && ws[0] == geom.kernel[0] && ws[1] == geom.kernel[1] && ws[2] == geom.kernel[2] &&
                      ws[3] == xs[4],
                  "conv3d: weight " + to_string(ws) + " incompatible with input " + to_string(xs));
    const std::size_t cout = ws[4];
    require_shape(bias.shape() == Shape{cout}, "conv3d: bias must have " + std::to_string(cout) + " entries");

    detail::ConvPlan plan{xs[0], xs[4], detail::spatial_extent(xs), {}, geom};
    plan.grid = geom.output_extent(plan.image);
    const std::size_t rows = plan.rows(), k = plan.cols();

    Tensor<T> cols({rows, k});
    detail::im2col(x.value().data(), plan, cols.data());
    Tensor<T> out({xs[0], plan.grid[0], plan.grid[1], plan.grid[2], cout});
    auto y = as_matrix(out, rows, cout);
    y.noalias() = as_matrix(std::as_const(cols), rows, k) * as_matrix(weight.value(), k, cout);
    y.rowwise() += as_matrix(bias.value(), 1, cout).row(0);

    return detail::make_result<T>(
        std::move(out), {x, weight, bias}, [plan, rows, k, cout, cols = std::move(cols)](Node<T>& self) {
            auto gy = as_matrix(std::as_const(self.grad), rows, cout);
            auto& xn = *self.parents[0];
            auto& wn = *self.parents[1];
            auto& bn = *self.parents[2];
            if (wn.requires_grad)
                as_matrix(wn.grad_buffer(), k, cout).noalias() += as_matrix(cols, rows, k).transpose() * gy;
            if (bn.requires_grad) as_matrix(bn.grad_buffer(), 1, cout) += gy.colwise().sum();
            if (xn.requires_grad) {
                Tensor<T> gcols({rows, k});
                as_matrix(gcols, rows, k).noalias() = gy * as_matrix(wn.value, k, cout).transpose();
                detail::col2im(gcols.data(), plan, xn.grad_buffer().data());
            }
        });
}

/// Transposed 3D convolution (adjoint of conv3d in its input argument).
/// x: B x T x H x W x Cin, weight: kt x kh x kw x Cout x Cin, bias: Cout.
template <typename T>
Var<T> conv_transpose3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& geom,
                        std::array<std::size_t, 3> output_padding = {0, 0, 0}) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    require_shape(xs.size() == 5, "conv_transpose3d expects B x T x H x W x C input, got " + to_string(xs));
    require_shape(ws.size() == 5 && ws[0] == geom.kernel[0] && ws[1] == geom.kernel[1] && ws[2] == geom.kernel[2] &&
                      ws[4] == xs[4],
                  "conv_transpose3d: weight " + to_string(ws) + " incompatible with input " + to_string(xs));
    const std::size_t cout = ws[3], cin = xs[4];
    require_shape(bias.shape() == Shape{cout}, "conv_transpose3d: bias must have " + std::to_string(cout) + " entries");

    detail::ConvPlan plan{xs[0], cout, {}, detail::spatial_extent(xs), geom};
    plan.image = geom.transposed_extent(plan.grid, output_padding);
    require_shape(geom.output_extent(plan.image) == plan.grid, "conv_transpose3d: geometry does not invert");
    const std::size_t rows = plan.rows(), k = plan.cols();

    Tensor<T> out({xs[0], plan.image[0], plan.image[1], plan.image[2], cout});
    {
        Tensor<T> cols({rows, k});
        as_matrix(cols, rows, k).noalias() = as_matrix(x.value(), rows, cin) * as_matrix(weight.value(), k, cin).transpose();
        detail::col2im(cols.data(), plan, out.data());
    }
    const std::size_t pixels = out.size() / cout;
    as_matrix(out, pixels, cout).rowwise() += as_matrix(bias.value(), 1, cout).row(0);

    return detail::make_result<T>(std::move(out), {x, weight, bias}, [plan, rows, k, cin, cout, pixels](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        auto& bn = *self.parents[2];
        if (bn.requires_grad) as_matrix(bn.grad_buffer(), 1, cout) += as_matrix(self.grad, pixels, cout).colwise().sum();
        if (!xn.requires_grad && !wn.requires_grad) return;
        Tensor<T> gcols({rows, k});
        detail::im2col(self.grad.data(), plan, gcols.data());
        auto gc = as_matrix(std::as_const(gcols), rows, k);
        if (xn.requires_grad) as_matrix(xn.grad_buffer(), rows, cin).noalias() += gc * as_matrix(wn.value, k, cin);
        if (wn.requires_grad) as_matrix(wn.grad_buffer(), k, cin).noalias() += gc.transpose() * as_matrix(xn.value, rows, cin);
    });
}

// ---------------------------------------------------------------------------
// Rank-specialised wrappers. 2D ops take B x H x W x C, 1D ops take B x L x C.

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t padding) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    require_shape(xs.size() == 4 && ws.size() == 4, "conv2d expects B x H x W x C input and kh x kw x Cin x Cout weight");
    ConvGeometry g{{1, ws[0], ws[1]}, {1, stride, stride}, {0, padding, padding}};
    auto y = conv3d(reshape(x, {xs[0], 1, xs[1], xs[2], xs[3]}), reshape(weight, {1, ws[0], ws[1], ws[2], ws[3]}), bias, g);
    const auto& ys = y.shape();
    return reshape(y, {ys[0], ys[2], ys[3], ys[4]});
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
                        std::size_t padding, std::size_t output_padding) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    require_shape(xs.size() == 4 && ws.size() == 4,
                  "conv_transpose2d expects B x H x W x C input and kh x kw x Cout x Cin weight");
    ConvGeometry g{{1, ws[0], ws[1]}, {1, stride, stride}, {0, padding, padding}};
    auto y = conv_transpose3d(reshape(x, {xs[0], 1, xs[1], xs[2], xs[3]}),
                              reshape(weight, {1, ws[0], ws[1], ws[2], ws[3]}), bias, g, {0, output_padding, output_padding});
    const auto& ys = y.shape();
    return reshape(y, {ys[0], ys[2], ys[3], ys[4]});
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t padding) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    require_shape(xs.size() == 3 && ws.size() == 3, "conv1d expects B x L x C input and k x Cin x Cout weight");
    ConvGeometry g{{ws[0], 1, 1}, {stride, 1, 1}, {padding, 0, 0}};
    auto y = conv3d(reshape(x, {xs[0], xs[1], 1, 1, xs[2]}), reshape(weight, {ws[0], 1, 1, ws[1], ws[2]}), bias, g);
    const auto& ys = y.shape();
    return reshape(y, {ys[0], ys[1], ys[4]});
}

template <typename T>
Var<T> conv_transpose1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
                        std::size_t padding, std::size_t output_padding) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    require_shape(xs.size() == 3 && ws.size() == 3, "conv_transpose1d expects B x L x C input and k x Cout x Cin weight");
    ConvGeometry g{{ws[0], 1, 1}, {stride, 1, 1}, {padding, 0, 0}};
    auto y = conv_transpose3d(reshape(x, {xs[0], xs[1], 1, 1, xs[2]}), reshape(weight, {ws[0], 1, 1, ws[1], ws[2]}), bias,
                              g, {output_padding, 0, 0});
    const auto& ys = y.shape();
    return reshape(y, {ys[0], ys[1], ys[4]});
}

}  // namespace nlaslr
