#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gacvid/errors.hpp"
#include "gacvid/tensor.hpp"
#include "gacvid/types.hpp"

namespace gacvid {
namespace ad {

// Reverse-mode autodiff over Tensor<T>. Graphs are built dynamically; each
// node stores its value, a lazily allocated gradient and a closure that
// scatters the incoming gradient to its parents.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    Tensor<T>& ensure_grad() {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
    return leaf(std::move(value), false);
}

template <typename T>
Var<T> scalar(T v) {
    return constant(Tensor<T>::scalar(v));
}

template <typename T>
Var<T> detach(const Var<T>& x) {
    return constant(x->value);
}

template <typename T, typename... Parents>
Var<T> make_node(Tensor<T> value, std::function<void(Node<T>&)> backward,
                 Parents... parents) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    (n->parents.push_back(parents), ...);
    n->requires_grad = false;
    for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
    if (n->requires_grad) n->backward_fn = std::move(backward);
    return n;
}

// Topological order via iterative DFS, then sweep gradients backwards.
template <typename T>
void backward(const Var<T>& root) {
    if (root->value.size() != 1)
        throw ShapeMismatch("backward root must be a scalar");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second)
                stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

// --- elementwise -------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value)) throw ShapeMismatch("add shapes differ");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return make_node<T>(
        std::move(out),
        [a, b](Node<T>& n) {
            if (a->requires_grad) {
                auto& g = a->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
            }
            if (b->requires_grad) {
                auto& g = b->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
            }
        },
        a, b);
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value)) throw ShapeMismatch("sub shapes differ");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return make_node<T>(
        std::move(out),
        [a, b](Node<T>& n) {
            if (a->requires_grad) {
                auto& g = a->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
            }
            if (b->requires_grad) {
                auto& g = b->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
            }
        },
        a, b);
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value)) throw ShapeMismatch("mul shapes differ");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_node<T>(
        std::move(out),
        [a, b](Node<T>& n) {
            if (a->requires_grad) {
                auto& g = a->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += n.grad[i] * b->value[i];
            }
            if (b->requires_grad) {
                auto& g = b->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += n.grad[i] * a->value[i];
            }
        },
        a, b);
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return make_node<T>(
        std::move(out),
        [a, s](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
        },
        a);
}

template <typename T>
Var<T> add_constant(const Var<T>& a, T c) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    return make_node<T>(
        std::move(out),
        [a](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        },
        a);
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], T(0));
    return make_node<T>(
        std::move(out),
        [a](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (a->value[i] > T(0)) g[i] += n.grad[i];
        },
        a);
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] < T(0)) out[i] *= slope;
    return make_node<T>(
        std::move(out),
        [a, slope](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += n.grad[i] * (a->value[i] > T(0) ? T(1) : slope);
        },
        a);
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = T(1) / (T(1) + std::exp(-out[i]));
    auto node = make_node<T>(
        std::move(out),
        [a](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T s = n.value[i];
                g[i] += n.grad[i] * s * (T(1) - s);
            }
        },
        a);
    return node;
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::min(std::max(out[i], lo), hi);
    return make_node<T>(
        std::move(out),
        [a, lo, hi](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (a->value[i] > lo && a->value[i] < hi) g[i] += n.grad[i];
        },
        a);
}

template <typename T>
Var<T> log_op(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
    return make_node<T>(
        std::move(out),
        [a](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += n.grad[i] / a->value[i];
        },
        a);
}

template <typename T>
Var<T> abs_op(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(out[i]);
    return make_node<T>(
        std::move(out),
        [a](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T x = a->value[i];
                g[i] += n.grad[i] * (x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)));
            }
        },
        a);
}

template <typename T>
Var<T> square(const Var<T>& a) {
    return mul(a, a);
}

// --- reductions ----------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    Tensor<T> out = Tensor<T>::scalar(a->value.sum());
    return make_node<T>(
        std::move(out),
        [a](Node<T>& n) {
            auto& g = a->ensure_grad();
            const T d = n.grad[0];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
        },
        a);
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    const T inv = T(1) / static_cast<T>(a->value.size());
    Tensor<T> out = Tensor<T>::scalar(a->value.sum() * inv);
    return make_node<T>(
        std::move(out),
        [a, inv](Node<T>& n) {
            auto& g = a->ensure_grad();
            const T d = n.grad[0] * inv;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
        },
        a);
}

// --- shape ops -------------------------------------------------------------------

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
    std::vector<Tensor<T>> values;
    values.reserve(parts.size());
    for (const auto& p : parts) values.push_back(p->value);
    Tensor<T> out = concat_channels(values);
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(out);
    n->parents.assign(parts.begin(), parts.end());
    for (const auto& p : parts) n->requires_grad |= p->requires_grad;
    if (n->requires_grad) {
        n->backward_fn = [parts](Node<T>& node) {
            std::size_t off = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    auto& g = p->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i)
                        g[i] += node.grad[off + i];
                }
                off += p->value.size();
            }
        };
    }
    return n;
}

template <typename T>
Var<T> slice_ch(const Var<T>& a, int begin, int end) {
    Tensor<T> out = a->value.slice_channels(begin, end);
    const std::size_t plane =
        static_cast<std::size_t>(a->value.dim(1)) * a->value.dim(2);
    return make_node<T>(
        std::move(out),
        [a, begin, plane](Node<T>& n) {
            auto& g = a->ensure_grad();
            const std::size_t off = begin * plane;
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[off + i] += n.grad[i];
        },
        a);
}

template <typename T>
Var<T> crop(const Var<T>& a, int y0, int x0, int h, int w) {
    const int c = a->value.dim(0);
    Tensor<T> out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out(ch, y, x) = a->value(ch, y0 + y, x0 + x);
    return make_node<T>(
        std::move(out),
        [a, y0, x0, h, w, c](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        g(ch, y0 + y, x0 + x) += n.grad(ch, y, x);
        },
        a);
}

// Nearest-neighbor 2x upsampling.
template <typename T>
Var<T> upsample2(const Var<T>& a) {
    const int c = a->value.dim(0), h = a->value.dim(1), w = a->value.dim(2);
    Tensor<T> out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x) out(ch, y, x) = a->value(ch, y / 2, x / 2);
    return make_node<T>(
        std::move(out),
        [a, c, h, w](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < 2 * h; ++y)
                    for (int x = 0; x < 2 * w; ++x)
                        g(ch, y / 2, x / 2) += n.grad(ch, y, x);
        },
        a);
}

// 2x2 average pooling; spatial dims must be even.
template <typename T>
Var<T> avg_pool2(const Var<T>& a) {
    const int c = a->value.dim(0), h = a->value.dim(1), w = a->value.dim(2);
    if (h % 2 || w % 2) throw ShapeMismatch("avg_pool2 needs even dims");
    Tensor<T> out({c, h / 2, w / 2});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w / 2; ++x)
                out(ch, y, x) =
                    (a->value(ch, 2 * y, 2 * x) + a->value(ch, 2 * y, 2 * x + 1) +
                     a->value(ch, 2 * y + 1, 2 * x) + a->value(ch, 2 * y + 1, 2 * x + 1)) /
                    T(4);
    return make_node<T>(
        std::move(out),
        [a, c, h, w](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h / 2; ++y)
                    for (int x = 0; x < w / 2; ++x) {
                        const T d = n.grad(ch, y, x) / T(4);
                        g(ch, 2 * y, 2 * x) += d;
                        g(ch, 2 * y, 2 * x + 1) += d;
                        g(ch, 2 * y + 1, 2 * x) += d;
                        g(ch, 2 * y + 1, 2 * x + 1) += d;
                    }
        },
        a);
}

// Bilinear resize (half-pixel centers). Linear in the input, so the backward
// pass scatters the same interpolation weights.
template <typename T>
Var<T> resize_bilinear(const Var<T>& a, int oh, int ow) {
    const int c = a->value.dim(0), h = a->value.dim(1), w = a->value.dim(2);
    const double sy = static_cast<double>(h) / oh;
    const double sx = static_cast<double>(w) / ow;
    struct Tap {
        int y0, x0, y1, x1;
        T w00, w01, w10, w11;
    };
    std::vector<Tap> taps(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
            const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
            Tap t;
            t.y0 = std::min(static_cast<int>(fy), h - 1);
            t.x0 = std::min(static_cast<int>(fx), w - 1);
            t.y1 = std::min(t.y0 + 1, h - 1);
            t.x1 = std::min(t.x0 + 1, w - 1);
            const double dy = fy - t.y0, dx = fx - t.x0;
            t.w00 = static_cast<T>((1 - dy) * (1 - dx));
            t.w01 = static_cast<T>((1 - dy) * dx);
            t.w10 = static_cast<T>(dy * (1 - dx));
            t.w11 = static_cast<T>(dy * dx);
            taps[static_cast<std::size_t>(y) * ow + x] = t;
        }
    Tensor<T> out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                const Tap& t = taps[static_cast<std::size_t>(y) * ow + x];
                out(ch, y, x) = t.w00 * a->value(ch, t.y0, t.x0) +
                                t.w01 * a->value(ch, t.y0, t.x1) +
                                t.w10 * a->value(ch, t.y1, t.x0) +
                                t.w11 * a->value(ch, t.y1, t.x1);
            }
    return make_node<T>(
        std::move(out),
        [a, taps = std::move(taps), c, oh, ow](Node<T>& n) {
            auto& g = a->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int x = 0; x < ow; ++x) {
                        const Tap& t = taps[static_cast<std::size_t>(y) * ow + x];
                        const T d = n.grad(ch, y, x);
                        g(ch, t.y0, t.x0) += t.w00 * d;
                        g(ch, t.y0, t.x1) += t.w01 * d;
                        g(ch, t.y1, t.x0) += t.w10 * d;
                        g(ch, t.y1, t.x1) += t.w11 * d;
                    }
        },
        a);
}

// --- convolution -----------------------------------------------------------------

namespace detail {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

// Gathers conv patches as a (Cin*kh*kw) x (Ho*Wo) row-major matrix.
template <typename T>
void im2col(const Tensor<T>& x, int k, int stride, int pad, int ho, int wo,
            std::vector<T>& col) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    col.assign(static_cast<std::size_t>(c) * k * k * ho * wo, T(0));
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = col.data() + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * plane;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = &x(ch, iy, 0);
                    T* dst = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ox] = src[ix];
                    }
                }
            }
}

// Scatter-adds a column matrix back into image layout (adjoint of im2col).
template <typename T>
void col2im(const std::vector<T>& col, int k, int stride, int pad, int ho, int wo,
            Tensor<T>& dx) {
    const int c = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row =
                    col.data() + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * plane;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = &dx(ch, iy, 0);
                    const T* src = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
}

template <typename T>
std::vector<T>& conv_scratch() {
    thread_local std::vector<T> buf;
    return buf;
}

}  // namespace detail

// 2D convolution; weight (Cout, Cin, k, k), bias (Cout). The im2col buffer is
// rebuilt in the backward pass instead of being retained per node.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
              int pad) {
    const int cin = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int cout = weight->value.dim(0), k = weight->value.dim(2);
    if (weight->value.dim(1) != cin) throw ShapeMismatch("conv2d channel mismatch");
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (w + 2 * pad - k) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ShapeMismatch("conv2d output would be empty");
    const int kk = cin * k * k;
    const std::size_t np = static_cast<std::size_t>(ho) * wo;

    auto& col = detail::conv_scratch<T>();
    detail::im2col(x->value, k, stride, pad, ho, wo, col);
    Tensor<T> out({cout, ho, wo});
    {
        detail::ECMap<T> W(weight->value.data(), cout, kk);
        detail::ECMap<T> C(col.data(), kk, static_cast<int>(np));
        detail::EMap<T> Y(out.data(), cout, static_cast<int>(np));
        Y.noalias() = W * C;
        for (int oc = 0; oc < cout; ++oc)
            Y.row(oc).array() += bias->value[oc];
    }
    return make_node<T>(
        std::move(out),
        [x, weight, bias, stride, pad, k, cout, kk, ho, wo, np](Node<T>& n) {
            auto& col = detail::conv_scratch<T>();
            detail::im2col(x->value, k, stride, pad, ho, wo, col);
            detail::ECMap<T> dY(n.grad.data(), cout, static_cast<int>(np));
            if (weight->requires_grad) {
                auto& gw = weight->ensure_grad();
                detail::EMap<T> dW(gw.data(), cout, kk);
                detail::ECMap<T> C(col.data(), kk, static_cast<int>(np));
                dW.noalias() += dY * C.transpose();
            }
            if (bias->requires_grad) {
                auto& gb = bias->ensure_grad();
                for (int oc = 0; oc < cout; ++oc) gb[oc] += dY.row(oc).sum();
            }
            if (x->requires_grad) {
                std::vector<T> dcol(static_cast<std::size_t>(kk) * np);
                detail::ECMap<T> W(weight->value.data(), cout, kk);
                detail::EMap<T> dC(dcol.data(), kk, static_cast<int>(np));
                dC.noalias() = W.transpose() * dY;
                auto& gx = x->ensure_grad();
                detail::col2im(dcol, k, stride, pad, ho, wo, gx);
            }
        },
        x, weight, bias);
}

// Per-channel instance normalization with affine parameters.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                     T eps = T(1e-5)) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const std::size_t n = static_cast<std::size_t>(h) * w;
    Tensor<T> out({c, h, w});
    Tensor<T> mean({c}), inv_std({c});
    for (int ch = 0; ch < c; ++ch) {
        const T* px = &x->value(ch, 0, 0);
        T m = T(0);
        for (std::size_t i = 0; i < n; ++i) m += px[i];
        m /= static_cast<T>(n);
        T v = T(0);
        for (std::size_t i = 0; i < n; ++i) {
            const T d = px[i] - m;
            v += d * d;
        }
        v /= static_cast<T>(n);
        const T is = T(1) / std::sqrt(v + eps);
        mean[ch] = m;
        inv_std[ch] = is;
        T* po = &out(ch, 0, 0);
        const T g = gamma->value[ch], b = beta->value[ch];
        for (std::size_t i = 0; i < n; ++i) po[i] = g * (px[i] - m) * is + b;
    }
    return make_node<T>(
        std::move(out),
        [x, gamma, beta, mean = std::move(mean), inv_std = std::move(inv_std), c,
         n](Node<T>& node) {
            for (int ch = 0; ch < c; ++ch) {
                const T* px = &x->value(ch, 0, 0);
                const T* pg = &node.grad(ch, 0, 0);
                const T m = mean[ch], is = inv_std[ch];
                const T g = gamma->value[ch];
                T sum_g = T(0), sum_gx = T(0);
                for (std::size_t i = 0; i < n; ++i) {
                    const T xn = (px[i] - m) * is;
                    sum_g += pg[i];
                    sum_gx += pg[i] * xn;
                }
                if (gamma->requires_grad) gamma->ensure_grad()[ch] += sum_gx;
                if (beta->requires_grad) beta->ensure_grad()[ch] += sum_g;
                if (x->requires_grad) {
                    auto& gx = x->ensure_grad();
                    T* pdx = &gx(ch, 0, 0);
                    const T inv_n = T(1) / static_cast<T>(n);
                    for (std::size_t i = 0; i < n; ++i) {
                        const T xn = (px[i] - m) * is;
                        pdx[i] += g * is * (pg[i] - sum_g * inv_n - xn * sum_gx * inv_n);
                    }
                }
            }
        },
        x, gamma, beta);
}

// Channelwise softmax at every pixel.
template <typename T>
Var<T> softmax_ch(const Var<T>& x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    Tensor<T> out({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int px = 0; px < w; ++px) {
            T mx = x->value(0, y, px);
            for (int ch = 1; ch < c; ++ch) mx = std::max(mx, x->value(ch, y, px));
            T denom = T(0);
            for (int ch = 0; ch < c; ++ch) {
                const T e = std::exp(x->value(ch, y, px) - mx);
                out(ch, y, px) = e;
                denom += e;
            }
            for (int ch = 0; ch < c; ++ch) out(ch, y, px) /= denom;
        }
    return make_node<T>(
        std::move(out),
        [x, c, h, w](Node<T>& n) {
            auto& g = x->ensure_grad();
            for (int y = 0; y < h; ++y)
                for (int px = 0; px < w; ++px) {
                    T dot = T(0);
                    for (int ch = 0; ch < c; ++ch)
                        dot += n.grad(ch, y, px) * n.value(ch, y, px);
                    for (int ch = 0; ch < c; ++ch)
                        g(ch, y, px) +=
                            n.value(ch, y, px) * (n.grad(ch, y, px) - dot);
                }
        },
        x);
}

// Mean per-pixel cross-entropy between channel logits and a label map.
template <typename T>
Var<T> cross_entropy_ch(const Var<T>& logits, const SemanticLayout& labels) {
    const int c = logits->value.dim(0), h = logits->value.dim(1),
              w = logits->value.dim(2);
    if (labels.height != h || labels.width != w)
        throw ShapeMismatch("cross_entropy_ch label map size");
    double total = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            T mx = logits->value(0, y, x);
            for (int ch = 1; ch < c; ++ch) mx = std::max(mx, logits->value(ch, y, x));
            double denom = 0.0;
            for (int ch = 0; ch < c; ++ch)
                denom += std::exp(static_cast<double>(logits->value(ch, y, x) - mx));
            const int lbl = labels.at(y, x);
            total += std::log(denom) -
                     static_cast<double>(logits->value(lbl, y, x) - mx);
        }
    const std::size_t n = static_cast<std::size_t>(h) * w;
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / n));
    return make_node<T>(
        std::move(out),
        [logits, labels, c, h, w, n](Node<T>& node) {
            auto& g = logits->ensure_grad();
            const T d = node.grad[0] / static_cast<T>(n);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    T mx = logits->value(0, y, x);
                    for (int ch = 1; ch < c; ++ch)
                        mx = std::max(mx, logits->value(ch, y, x));
                    T denom = T(0);
                    for (int ch = 0; ch < c; ++ch)
                        denom += std::exp(logits->value(ch, y, x) - mx);
                    const int lbl = labels.at(y, x);
                    for (int ch = 0; ch < c; ++ch) {
                        const T s = std::exp(logits->value(ch, y, x) - mx) / denom;
                        g(ch, y, x) += d * (s - (ch == lbl ? T(1) : T(0)));
                    }
                }
        },
        logits);
}

// Sum of a list of scalar vars.
template <typename T>
Var<T> add_all(const std::vector<Var<T>>& terms) {
    if (terms.empty()) return scalar<T>(T(0));
    Var<T> acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

// mean(|a - b|)
template <typename T>
Var<T> mean_abs_diff_op(const Var<T>& a, const Var<T>& b) {
    return mean_all(abs_op(sub(a, b)));
}

}  // namespace ad
}  // namespace gacvid
