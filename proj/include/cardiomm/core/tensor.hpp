#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "cardiomm/core/errors.hpp"

namespace cardiomm::ad {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

inline uint64_t next_node_id() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

// One value in the dynamically built computation graph. Nodes link to their
// parents only, so releasing the output handle frees the whole graph.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // allocated on first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    uint64_t id = next_node_id();
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node*)> backward_fn;

    int64_t numel() const { return shape_numel(shape); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Value-semantics handle over a graph node.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr<T> n) : node_(std::move(n)) {}

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != int64_t(data.size()))
            throw ValidationError("Tensor: shape " + shape_str(shape) + " does not match data length " +
                                  std::to_string(data.size()));
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<T>(size_t(n), T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<T>(size_t(n), v), requires_grad);
    }

    static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    std::vector<T>& value() { return node_->value; }
    const std::vector<T>& value() const { return node_->value; }
    std::vector<T>& grad() { return node_->grad; }
    const std::vector<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    uint64_t id() const { return node_->id; }
    void zero_grad() { node_->grad.clear(); }
    T item() const {
        if (numel() != 1) throw ValidationError("Tensor::item: tensor is not scalar");
        return node_->value[0];
    }

    NodePtr<T> node() const { return node_; }

private:
    NodePtr<T> node_;
};

// Graph recording switch; inside a NoGradGuard ops produce detached values
// so inference never retains the graph.
inline bool& grad_enabled() {
    static thread_local bool on = true;
    return on;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
};

namespace detail {

template <typename T>
NodePtr<T> make_op_node(Shape shape, std::vector<NodePtr<T>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value.resize(size_t(n->numel()));
    n->is_leaf = false;
    if (grad_enabled())
        for (const auto& p : parents)
            if (p->requires_grad) {
                n->requires_grad = true;
                break;
            }
    // inference path: drop parent links so temporaries free eagerly
    if (n->requires_grad) n->parents = std::move(parents);
    return n;
}

// Strides with zeros on broadcast dimensions, right-aligned to `out`.
inline std::vector<int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    const size_t off = out.size() - shape.size();
    for (size_t i = shape.size(); i-- > 0;) {
        const int64_t d = shape[i];
        if (d != out[i + off] && d != 1)
            throw ValidationError("broadcast: incompatible shapes " + shape_str(shape) + " vs " + shape_str(out));
        strides[i + off] = (d == 1) ? 0 : s;
        s *= d;
    }
    return strides;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (size_t i = 0; i < r; ++i) {
        const int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ValidationError("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Iterate an output index space while tracking two broadcast source offsets.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb, F&& f) {
    const size_t r = out.size();
    const int64_t n = shape_numel(out);
    std::vector<int64_t> idx(r, 0);
    int64_t ia = 0, ib = 0;
    for (int64_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

} // namespace detail

// ---- elementwise binary ops with numpy-style broadcasting ----

enum class BinKind { Add, Sub, Mul, Div };

template <typename T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, BinKind kind) {
    const Shape out_shape = detail::broadcast_shape(a.shape(), b.shape());
    auto out = detail::make_op_node<T>(out_shape, {a.node(), b.node()});
    const auto sa = detail::broadcast_strides(a.shape(), out_shape);
    const auto sb = detail::broadcast_strides(b.shape(), out_shape);
    const T* av = a.value().data();
    const T* bv = b.value().data();
    T* ov = out->value.data();

    if (a.shape() == out_shape && b.shape() == out_shape) {
        const int64_t n = shape_numel(out_shape);
        switch (kind) {
            case BinKind::Add: for (int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i]; break;
            case BinKind::Sub: for (int64_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i]; break;
            case BinKind::Mul: for (int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i]; break;
            case BinKind::Div: for (int64_t i = 0; i < n; ++i) ov[i] = av[i] / bv[i]; break;
        }
    } else {
        detail::for_each_broadcast(out_shape, sa, sb, [&](int64_t i, int64_t ia, int64_t ib) {
            switch (kind) {
                case BinKind::Add: ov[i] = av[ia] + bv[ib]; break;
                case BinKind::Sub: ov[i] = av[ia] - bv[ib]; break;
                case BinKind::Mul: ov[i] = av[ia] * bv[ib]; break;
                case BinKind::Div: ov[i] = av[ia] / bv[ib]; break;
            }
        });
    }

    if (out->requires_grad) {
        out->backward_fn = [kind, out_shape, sa, sb](Node<T>* self) {
            auto& pa = self->parents[0];
            auto& pb = self->parents[1];
            const T* g = self->grad.data();
            const T* av2 = pa->value.data();
            const T* bv2 = pb->value.data();
            if (pa->requires_grad) pa->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            T* ga = pa->requires_grad ? pa->grad.data() : nullptr;
            T* gb = pb->requires_grad ? pb->grad.data() : nullptr;
            detail::for_each_broadcast(out_shape, sa, sb, [&](int64_t i, int64_t ia, int64_t ib) {
                switch (kind) {
                    case BinKind::Add:
                        if (ga) ga[ia] += g[i];
                        if (gb) gb[ib] += g[i];
                        break;
                    case BinKind::Sub:
                        if (ga) ga[ia] += g[i];
                        if (gb) gb[ib] -= g[i];
                        break;
                    case BinKind::Mul:
                        if (ga) ga[ia] += g[i] * bv2[ib];
                        if (gb) gb[ib] += g[i] * av2[ia];
                        break;
                    case BinKind::Div:
                        if (ga) ga[ia] += g[i] / bv2[ib];
                        if (gb) gb[ib] -= g[i] * av2[ia] / (bv2[ib] * bv2[ib]);
                        break;
                }
            });
        };
    }
    return Tensor<T>(out);
}

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinKind::Add); }
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinKind::Sub); }
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinKind::Mul); }
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinKind::Div); }

// ---- elementwise unary ops ----

template <typename T, typename FwdF, typename BwdF>
Tensor<T> unary_op(const Tensor<T>& x, FwdF&& fwd, BwdF&& bwd) {
    auto out = detail::make_op_node<T>(x.shape(), {x.node()});
    const T* xv = x.value().data();
    T* ov = out->value.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
    if (out->requires_grad) {
        out->backward_fn = [bwd, n](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const T* g = self->grad.data();
            const T* xv2 = p->value.data();
            const T* yv = self->value.data();
            T* gx = p->grad.data();
            for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * bwd(xv2[i], yv[i]);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    return unary_op(x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return unary_op(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) { return scale(x, T(-1)); }

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return v > T(0) ? v : T(0); },
                    [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    auto f = [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
    };
    return unary_op(x, f, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    auto f = [](T v) { return v > T(30) ? v : std::log1p(std::exp(v)); };
    auto df = [](T v, T) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
    };
    return unary_op(x, f, df);
}

// PReLU with a single learnable slope.
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& alpha) {
    if (alpha.numel() != 1) throw ValidationError("prelu: alpha must be a scalar parameter");
    auto out = detail::make_op_node<T>(x.shape(), {x.node(), alpha.node()});
    const T a = alpha.value()[0];
    const T* xv = x.value().data();
    T* ov = out->value.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) ov[i] = xv[i] > T(0) ? xv[i] : a * xv[i];
    if (out->requires_grad) {
        out->backward_fn = [n](Node<T>* self) {
            auto& px = self->parents[0];
            auto& pa = self->parents[1];
            const T* g = self->grad.data();
            const T* xv2 = px->value.data();
            const T a2 = pa->value[0];
            if (px->requires_grad) {
                px->ensure_grad();
                T* gx = px->grad.data();
                for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * (xv2[i] > T(0) ? T(1) : a2);
            }
            if (pa->requires_grad) {
                pa->ensure_grad();
                T acc = 0;
                for (int64_t i = 0; i < n; ++i)
                    if (xv2[i] <= T(0)) acc += g[i] * xv2[i];
                pa->grad[0] += acc;
            }
        };
    }
    return Tensor<T>(out);
}

// Softmax over the last dimension (numerically stabilized).
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    if (x.shape().empty()) throw ValidationError("softmax: needs at least one dimension");
    auto out = detail::make_op_node<T>(x.shape(), {x.node()});
    const int64_t d = x.shape().back();
    const int64_t rows = x.numel() / d;
    const T* xv = x.value().data();
    T* ov = out->value.data();
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = xv + r * d;
        T* orow = ov + r * d;
        T mx = xr[0];
        for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
        T sum = 0;
        for (int64_t i = 0; i < d; ++i) {
            orow[i] = std::exp(xr[i] - mx);
            sum += orow[i];
        }
        for (int64_t i = 0; i < d; ++i) orow[i] /= sum;
    }
    if (out->requires_grad) {
        out->backward_fn = [rows, d](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const T* g = self->grad.data();
            const T* y = self->value.data();
            T* gx = p->grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                const T* gr = g + r * d;
                const T* yr = y + r * d;
                T dot = 0;
                for (int64_t i = 0; i < d; ++i) dot += gr[i] * yr[i];
                T* gxr = gx + r * d;
                for (int64_t i = 0; i < d; ++i) gxr[i] += yr[i] * (gr[i] - dot);
            }
        };
    }
    return Tensor<T>(out);
}

// ---- reductions ----

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    auto out = detail::make_op_node<T>({1}, {x.node()});
    T acc = 0;
    for (const T v : x.value()) acc += v;
    out->value[0] = acc;
    if (out->requires_grad) {
        out->backward_fn = [](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const T g = self->grad[0];
            for (auto& v : p->grad) v += g;
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / T(x.numel()));
}

// ---- shape ops ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ValidationError("reshape: element count mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
    auto out = detail::make_op_node<T>(shape, {x.node()});
    out->value = x.value();
    if (out->requires_grad) {
        out->backward_fn = [](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) p->grad[i] += self->grad[i];
        };
    }
    return Tensor<T>(out);
}

// Slice [c0, c0+len) along dim 1 of an NCHW tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t c0, int64_t len) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ValidationError("slice_channels: expected NCHW, got " + shape_str(s));
    if (c0 < 0 || c0 + len > s[1]) throw ValidationError("slice_channels: channel range out of bounds");
    const int64_t N = s[0], C = s[1], HW = s[2] * s[3];
    auto out = detail::make_op_node<T>({N, len, s[2], s[3]}, {x.node()});
    const T* xv = x.value().data();
    T* ov = out->value.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < len; ++c)
            std::copy_n(xv + ((n * C + c0 + c) * HW), HW, ov + ((n * len + c) * HW));
    if (out->requires_grad) {
        out->backward_fn = [N, C, HW, c0, len](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const T* g = self->grad.data();
            T* gx = p->grad.data();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < len; ++c) {
                    const T* src = g + ((n * len + c) * HW);
                    T* dst = gx + ((n * C + c0 + c) * HW);
                    for (int64_t i = 0; i < HW; ++i) dst[i] += src[i];
                }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ValidationError("concat_channels: empty input list");
    const auto& s0 = xs[0].shape();
    if (s0.size() != 4) throw ValidationError("concat_channels: expected NCHW");
    int64_t ctotal = 0;
    std::vector<NodePtr<T>> parents;
    for (const auto& x : xs) {
        const auto& s = x.shape();
        if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
            throw ValidationError("concat_channels: mismatched shapes " + shape_str(s0) + " vs " + shape_str(s));
        ctotal += s[1];
        parents.push_back(x.node());
    }
    const int64_t N = s0[0], HW = s0[2] * s0[3];
    auto out = detail::make_op_node<T>({N, ctotal, s0[2], s0[3]}, parents);
    T* ov = out->value.data();
    int64_t coff = 0;
    for (const auto& x : xs) {
        const int64_t C = x.shape()[1];
        const T* xv = x.value().data();
        for (int64_t n = 0; n < N; ++n)
            std::copy_n(xv + n * C * HW, C * HW, ov + ((n * ctotal + coff) * HW));
        coff += C;
    }
    if (out->requires_grad) {
        std::vector<int64_t> chans;
        for (const auto& x : xs) chans.push_back(x.shape()[1]);
        out->backward_fn = [N, HW, ctotal, chans](Node<T>* self) {
            const T* g = self->grad.data();
            int64_t coff2 = 0;
            for (size_t k = 0; k < chans.size(); ++k) {
                auto& p = self->parents[k];
                const int64_t C = chans[k];
                if (p->requires_grad) {
                    p->ensure_grad();
                    T* gx = p->grad.data();
                    for (int64_t n = 0; n < N; ++n) {
                        const T* src = g + ((n * ctotal + coff2) * HW);
                        T* dst = gx + n * C * HW;
                        for (int64_t i = 0; i < C * HW; ++i) dst[i] += src[i];
                    }
                }
                coff2 += C;
            }
        };
    }
    return Tensor<T>(out);
}

// x [N,Din] . w^T [Din,Dout] + b -> [N,Dout]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 2 || ws.size() != 2)
        throw ValidationError("linear: expected 2-D input and weight, got " + shape_str(xs) + " and " + shape_str(ws));
    if (xs[1] != ws[1])
        throw ValidationError("linear: inner dimension mismatch, input " + shape_str(xs) + " vs weight " + shape_str(ws));
    const int64_t N = xs[0], Din = xs[1], Dout = ws[0];
    if (b.defined() && b.numel() != Dout)
        throw ValidationError("linear: bias length " + std::to_string(b.numel()) + " != Dout " + std::to_string(Dout));

    std::vector<NodePtr<T>> parents{x.node(), w.node()};
    if (b.defined()) parents.push_back(b.node());
    auto out = detail::make_op_node<T>({N, Dout}, parents);
    const T* xv = x.value().data();
    const T* wv = w.value().data();
    const T* bv = b.defined() ? b.value().data() : nullptr;
    T* ov = out->value.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < Dout; ++o) {
            T acc = bv ? bv[o] : T(0);
            const T* xr = xv + n * Din;
            const T* wr = wv + o * Din;
            for (int64_t i = 0; i < Din; ++i) acc += xr[i] * wr[i];
            ov[n * Dout + o] = acc;
        }
    if (out->requires_grad) {
        const bool has_b = b.defined();
        out->backward_fn = [N, Din, Dout, has_b](Node<T>* self) {
            auto& px = self->parents[0];
            auto& pw = self->parents[1];
            const T* g = self->grad.data();
            const T* xv2 = px->value.data();
            const T* wv2 = pw->value.data();
            if (px->requires_grad) {
                px->ensure_grad();
                T* gx = px->grad.data();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t o = 0; o < Dout; ++o) {
                        const T go = g[n * Dout + o];
                        const T* wr = wv2 + o * Din;
                        T* gxr = gx + n * Din;
                        for (int64_t i = 0; i < Din; ++i) gxr[i] += go * wr[i];
                    }
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                T* gw = pw->grad.data();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t o = 0; o < Dout; ++o) {
                        const T go = g[n * Dout + o];
                        const T* xr = xv2 + n * Din;
                        T* gwr = gw + o * Din;
                        for (int64_t i = 0; i < Din; ++i) gwr[i] += go * xr[i];
                    }
            }
            if (has_b && self->parents[2]->requires_grad) {
                auto& pb = self->parents[2];
                pb->ensure_grad();
                T* gb = pb->grad.data();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t o = 0; o < Dout; ++o) gb[o] += g[n * Dout + o];
            }
        };
    }
    return Tensor<T>(out);
}

// ---- backward pass ----

namespace detail {

template <typename T>
void topo_sort(Node<T>* root, std::vector<Node<T>*>& order) {
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

} // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// requires-grad node reachable from the loss; leaf gradients persist until
// explicitly zeroed, intermediate gradients are released as the sweep passes.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw ValidationError("backward: loss must be scalar");
    if (!loss.requires_grad())
        throw ValidationError("backward: graph is detached, no trainable tensor feeds the loss");
    std::vector<Node<T>*> order;
    detail::topo_sort(loss.node().get(), order);
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (size_t i = order.size(); i-- > 0;) {
        Node<T>* n = order[i];
        if (n->grad.empty()) continue;
        if (n->backward_fn) n->backward_fn(n);
        if (!n->is_leaf) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

} // namespace cardiomm::ad
