#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nlaslr/tensor.hpp"

namespace nlaslr {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatRef = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMatRef = Eigen::Map<const MatrixRM<T>>;

template <typename T>
MatRef<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
    return MatRef<T>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
ConstMatRef<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
    return ConstMatRef<T>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// One vertex of the reverse-mode tape.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor<T>& grad_buffer() {
        if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
        return grad;
    }
    bool has_grad() const { return !grad.empty() && grad.shape() == value.shape(); }
};

/// Handle to a node of the computation graph. Copies share the node.
template <typename T>
class Var {
   public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Var constant(Tensor<T> value) {
        auto node = std::make_shared<Node<T>>();
        node->value = std::move(value);
        return Var(std::move(node));
    }

    static Var leaf(Tensor<T> value) {
        auto node = std::make_shared<Node<T>>();
        node->value = std::move(value);
        node->requires_grad = true;
        return Var(std::move(node));
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->has_grad(); }
    const Tensor<T>& grad() const { return node_->grad; }
    void zero_grad() { node_->grad = Tensor<T>(); }
    Node<T>* node() const noexcept { return node_.get(); }
    const std::shared_ptr<Node<T>>& shared() const noexcept { return node_; }

   private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
    if (node->requires_grad) {
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.shared());
        node->backward = std::move(backward);
    }
    return Var<T>(std::move(node));
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    T* d = dst.data();
    const T* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace detail

/// Runs reverse accumulation from a scalar. Leaf gradients accumulate
/// across calls until cleared with zero_grad().
template <typename T>
void backward(const Var<T>& loss) {
    require_shape(loss.value().size() == 1, "backward expects a scalar, got " + to_string(loss.shape()));
    if (!loss.requires_grad()) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
    visited.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer().fill(T{1});
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward && node->has_grad()) node->backward(*node);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_shape(a.shape() == b.shape(), "add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Tensor<T> out = a.value();
    detail::add_into(out, b.value());
    return detail::make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) detail::add_into(p->grad_buffer(), self.grad);
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v *= factor;
    return detail::make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    });
}

/// Sum of equally shaped terms.
template <typename T>
Var<T> sum(std::span<const Var<T>> terms) {
    require_shape(!terms.empty(), "sum of zero terms");
    Tensor<T> out(terms[0].shape());
    for (const auto& t : terms) {
        require_shape(t.shape() == out.shape(), "sum: mismatched term shapes");
        detail::add_into(out, t.value());
    }
    return detail::make_result<T>(std::move(out), std::vector<Var<T>>(terms.begin(), terms.end()),
                                  [](Node<T>& self) {
                                      for (auto& p : self.parents)
                                          if (p->requires_grad) detail::add_into(p->grad_buffer(), self.grad);
                                  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    return detail::make_result<T>(std::move(out), {a}, [](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        const auto& x = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > T{0}) g[i] += self.grad[i];
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
    Tensor<T> out = a.value().reshaped(std::move(shape));
    return detail::make_result<T>(std::move(out), {a}, [](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

/// y = x W + b with x: B x Din, W: Din x Dout, b: Dout.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
    require_shape(x.value().rank() == 2 && weight.value().rank() == 2 && bias.value().rank() == 1,
                  "linear expects rank-2 input/weight and rank-1 bias");
    const std::size_t rows = x.value().dim(0), din = x.value().dim(1), dout = weight.value().dim(1);
    require_shape(weight.value().dim(0) == din && bias.value().dim(0) == dout,
                  "linear: input " + to_string(x.shape()) + " weight " + to_string(weight.shape()) + " bias " +
                      to_string(bias.shape()));
    Tensor<T> out({rows, dout});
    auto y = as_matrix(out, rows, dout);
    y.noalias() = as_matrix(x.value(), rows, din) * as_matrix(weight.value(), din, dout);
    const T* b = bias.value().data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < dout; ++c) out[r * dout + c] += b[c];

    return detail::make_result<T>(std::move(out), {x, weight, bias}, [rows, din, dout](Node<T>& self) {
        auto gy = as_matrix(std::as_const(self.grad), rows, dout);
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        auto& bn = *self.parents[2];
        if (xn.requires_grad) as_matrix(xn.grad_buffer(), rows, din).noalias() += gy * as_matrix(wn.value, din, dout).transpose();
        if (wn.requires_grad) as_matrix(wn.grad_buffer(), din, dout).noalias() += as_matrix(xn.value, rows, din).transpose() * gy;
        if (bn.requires_grad) {
            auto& gb = bn.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < dout; ++c) gb[c] += self.grad[r * dout + c];
        }
    });
}

/// out[b * N + n] = f[b] + e[n]; f: B x D, e: N x D, out: (B*N) x D.
template <typename T>
Var<T> broadcast_add_rows(const Var<T>& f, const Var<T>& e) {
    require_shape(f.value().rank() == 2 && e.value().rank() == 2 && f.value().dim(1) == e.value().dim(1),
                  "broadcast_add_rows: " + to_string(f.shape()) + " vs " + to_string(e.shape()));
    const std::size_t batch = f.value().dim(0), n = e.value().dim(0), d = f.value().dim(1);
    Tensor<T> out({batch * n, d});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c)
                out[(b * n + r) * d + c] = f.value()[b * d + c] + e.value()[r * d + c];
    return detail::make_result<T>(std::move(out), {f, e}, [batch, n, d](Node<T>& self) {
        auto& fn = *self.parents[0];
        auto& en = *self.parents[1];
        Tensor<T>* gf = fn.requires_grad ? &fn.grad_buffer() : nullptr;
        Tensor<T>* ge = en.requires_grad ? &en.grad_buffer() : nullptr;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c) {
                    const T g = self.grad[(b * n + r) * d + c];
                    if (gf) (*gf)[b * d + c] += g;
                    if (ge) (*ge)[r * d + c] += g;
                }
    });
}

/// Concatenates rank-2 tensors along the column axis.
template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
    require_shape(!parts.empty(), "concat of zero tensors");
    const std::size_t rows = parts[0].value().dim(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_shape(p.value().rank() == 2 && p.value().dim(0) == rows, "concat: mismatched row counts");
        widths.push_back(p.value().dim(1));
        total += widths.back();
    }
    Tensor<T> out({rows, total});
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(parts[k].value().data() + r * widths[k], widths[k], out.data() + r * total + offset);
        offset += widths[k];
    }
    return detail::make_result<T>(std::move(out), std::vector<Var<T>>(parts.begin(), parts.end()),
                                  [rows, total, widths](Node<T>& self) {
                                      std::size_t off = 0;
                                      for (std::size_t k = 0; k < widths.size(); ++k) {
                                          auto& p = *self.parents[k];
                                          if (p.requires_grad) {
                                              auto& g = p.grad_buffer();
                                              for (std::size_t r = 0; r < rows; ++r)
                                                  for (std::size_t c = 0; c < widths[k]; ++c)
                                                      g[r * widths[k] + c] += self.grad[r * total + off + c];
                                          }
                                          off += widths[k];
                                      }
                                  });
}

template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
    std::vector<Var<T>> v(parts);
    return concat<T>(std::span<const Var<T>>(v));
}

/// Columns [begin, end) of a rank-2 tensor.
template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end) {
    require_shape(x.value().rank() == 2 && begin <= end && end <= x.value().dim(1), "slice_cols out of range");
    const std::size_t rows = x.value().dim(0), cols = x.value().dim(1), w = end - begin;
    Tensor<T> out({rows, w});
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.value().data() + r * cols + begin, w, out.data() + r * w);
    return detail::make_result<T>(std::move(out), {x}, [rows, cols, begin, w](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) g[r * cols + begin + c] += self.grad[r * w + c];
    });
}

// ---------------------------------------------------------------------------
// Pooling

/// Non-overlapping average pooling over (T, H, W) of a B x T x H x W x C tensor.
template <typename T>
Var<T> avg_pool3d(const Var<T>& x, std::array<std::size_t, 3> window) {
    const auto& s = x.shape();
    require_shape(s.size() == 5, "avg_pool3d expects B x T x H x W x C, got " + to_string(s));
    for (int a = 0; a < 3; ++a)
        require_shape(window[a] > 0 && s[a + 1] % window[a] == 0,
                      "avg_pool3d: extent " + std::to_string(s[a + 1]) + " not divisible by window " +
                          std::to_string(window[a]));
    const std::size_t B = s[0], Ti = s[1], Hi = s[2], Wi = s[3], C = s[4];
    const std::size_t To = Ti / window[0], Ho = Hi / window[1], Wo = Wi / window[2];
    const T inv = T{1} / static_cast<T>(window[0] * window[1] * window[2]);
    Tensor<T> out({B, To, Ho, Wo, C});
    const T* in = x.value().data();
    auto in_index = [=](std::size_t b, std::size_t t, std::size_t h, std::size_t w) {
        return (((b * Ti + t) * Hi + h) * Wi + w) * C;
    };
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Ti; ++t)
            for (std::size_t h = 0; h < Hi; ++h)
                for (std::size_t w = 0; w < Wi; ++w) {
                    T* o = out.data() + (((b * To + t / window[0]) * Ho + h / window[1]) * Wo + w / window[2]) * C;
                    const T* i = in + in_index(b, t, h, w);
                    for (std::size_t c = 0; c < C; ++c) o[c] += inv * i[c];
                }
    return detail::make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < Ti; ++t)
                for (std::size_t h = 0; h < Hi; ++h)
                    for (std::size_t w = 0; w < Wi; ++w) {
                        const T* go =
                            self.grad.data() + (((b * To + t / window[0]) * Ho + h / window[1]) * Wo + w / window[2]) * C;
                        T* gi = g.data() + in_index(b, t, h, w);
                        for (std::size_t c = 0; c < C; ++c) gi[c] += inv * go[c];
                    }
    });
}

/// Mean over every axis between the batch axis and the channel axis.
template <typename T>
Var<T> global_average_pool(const Var<T>& x) {
    const auto& s = x.shape();
    require_shape(s.size() >= 2, "global_average_pool expects at least B x C");
    const std::size_t B = s.front(), C = s.back();
    const std::size_t inner = x.value().size() / (B * C);
    const T inv = T{1} / static_cast<T>(inner);
    Tensor<T> out({B, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < inner; ++p)
            for (std::size_t c = 0; c < C; ++c) out[b * C + c] += x.value()[(b * inner + p) * C + c];
    for (auto& v : out.values()) v *= inv;
    return detail::make_result<T>(std::move(out), {x}, [B, C, inner, inv](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t p = 0; p < inner; ++p)
                for (std::size_t c = 0; c < C; ++c) g[(b * inner + p) * C + c] += inv * self.grad[b * C + c];
    });
}

// ---------------------------------------------------------------------------
// Softmax and losses

/// Row-wise softmax of a rank-2 tensor without graph bookkeeping.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
    require_shape(logits.rank() == 2, "softmax expects rank 2");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    Tensor<T> out(logits.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* z = logits.data() + r * cols;
        T* p = out.data() + r * cols;
        const T zmax = *std::max_element(z, z + cols);
        T total{0};
        for (std::size_t c = 0; c < cols; ++c) total += (p[c] = std::exp(z[c] - zmax));
        for (std::size_t c = 0; c < cols; ++c) p[c] /= total;
    }
    return out;
}

template <typename T>
Var<T> softmax(const Var<T>& logits) {
    Tensor<T> out = softmax_rows(logits.value());
    const std::size_t rows = out.dim(0), cols = out.dim(1);
    return detail::make_result<T>(out, {logits}, [rows, cols, out](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* p = out.data() + r * cols;
            const T* gy = self.grad.data() + r * cols;
            T dot{0};
            for (std::size_t c = 0; c < cols; ++c) dot += p[c] * gy[c];
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += p[c] * (gy[c] - dot);
        }
    });
}

/// Mean over rows of -sum_i y[i] log softmax(z)[i]. Targets are constants.
template <typename T>
Var<T> soft_cross_entropy(const Var<T>& logits, const Tensor<T>& targets) {
    require_shape(logits.value().rank() == 2 && targets.shape() == logits.shape(),
                  "soft_cross_entropy: logits " + to_string(logits.shape()) + " targets " + to_string(targets.shape()));
    const std::size_t rows = logits.value().dim(0), cols = logits.value().dim(1);
    require_shape(rows > 0, "soft_cross_entropy on an empty batch");
    Tensor<T> probs(logits.shape());
    T loss{0};
    for (std::size_t r = 0; r < rows; ++r) {
        const T* z = logits.value().data() + r * cols;
        const T* y = targets.data() + r * cols;
        T* p = probs.data() + r * cols;
        const T zmax = *std::max_element(z, z + cols);
        T total{0};
        for (std::size_t c = 0; c < cols; ++c) total += (p[c] = std::exp(z[c] - zmax));
        const T log_total = std::log(total);
        for (std::size_t c = 0; c < cols; ++c) {
            p[c] /= total;
            if (y[c] != T{0}) loss -= y[c] * (z[c] - zmax - log_total);
        }
    }
    const T inv_rows = T{1} / static_cast<T>(rows);
    Tensor<T> out({1}, std::vector<T>{loss * inv_rows});
    return detail::make_result<T>(std::move(out), {logits},
                                  [rows, cols, inv_rows, probs = std::move(probs), targets](Node<T>& self) {
                                      auto& g = self.parents[0]->grad_buffer();
                                      const T scale = self.grad[0] * inv_rows;
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          T mass{0};
                                          for (std::size_t c = 0; c < cols; ++c) mass += targets[r * cols + c];
                                          for (std::size_t c = 0; c < cols; ++c) {
                                              const std::size_t i = r * cols + c;
                                              g[i] += scale * (mass * probs[i] - targets[i]);
                                          }
                                      }
                                  });
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace nlaslr
