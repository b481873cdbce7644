#pragma once

#include <vector>

#include "cardiomm/core/tensor.hpp"
#include "cardiomm/core/threading.hpp"

namespace cardiomm::ad {

namespace detail {

// strided input rows for a tile of output positions, precomputed once per
// tile and shared across all kernel offsets
struct ConvTileIdx {
    std::vector<int64_t> iy0, ix0; // oy*stride - pad, ox*stride - pad per position

    void build(int64_t stride, int64_t pad, int64_t Wo, int64_t j0, int64_t j1) {
        const size_t tile = size_t(j1 - j0);
        iy0.resize(tile);
        ix0.resize(tile);
        int64_t oy = j0 / Wo, ox = j0 % Wo;
        for (size_t t = 0; t < tile; ++t) {
            iy0[t] = oy * stride - pad;
            ix0[t] = ox * stride - pad;
            if (++ox == Wo) {
                ox = 0;
                ++oy;
            }
        }
    }
};

// im2col for one sample over a tile of output positions [j0, j1).
template <typename T>
void im2col_tile(const T* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                 const ConvTileIdx& idx, T* col) {
    const int64_t tile = int64_t(idx.iy0.size());
    int64_t k = 0;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx, ++k) {
                T* __restrict row = col + k * tile;
                const T* xc = x + c * H * W;
                for (int64_t j = 0; j < tile; ++j) {
                    const int64_t iy = idx.iy0[size_t(j)] + ky;
                    const int64_t ix = idx.ix0[size_t(j)] + kx;
                    row[j] = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? xc[iy * W + ix] : T(0);
                }
            }
}

template <typename T>
void col2im_tile(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                 const ConvTileIdx& idx, T* gx) {
    const int64_t tile = int64_t(idx.iy0.size());
    int64_t k = 0;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx, ++k) {
                const T* __restrict row = col + k * tile;
                T* xc = gx + c * H * W;
                for (int64_t j = 0; j < tile; ++j) {
                    const int64_t iy = idx.iy0[size_t(j)] + ky;
                    const int64_t ix = idx.ix0[size_t(j)] + kx;
                    if (iy >= 0 && iy < H && ix >= 0 && ix < W) xc[iy * W + ix] += row[j];
                }
            }
}

// 8-lane dot product: independent accumulator lanes vectorize cleanly and
// keep a fixed summation order, so results stay bitwise deterministic
template <typename T>
T dot_lanes(const T* __restrict a, const T* __restrict b, int64_t n) {
    T acc[8] = {};
    int64_t j = 0;
    for (; j + 8 <= n; j += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[j + l] * b[j + l];
    for (; j < n; ++j) acc[j % 8] += a[j] * b[j];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

constexpr int64_t kConvTile = 1024;

} // namespace detail

// Cross-correlation (the usual deep-learning convolution), NCHW input,
// OIKK kernel, optional bias, output spatial size floor((H+2p-K)/s)+1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int64_t stride = 1, int64_t pad = 0) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 4) throw ValidationError("conv2d: input must be NCHW, got " + shape_str(xs));
    if (ws.size() != 4) throw ValidationError("conv2d: kernel must be OIKK, got " + shape_str(ws));
    if (xs[1] != ws[1])
        throw ValidationError("conv2d: input channels " + std::to_string(xs[1]) +
                              " != kernel channels " + std::to_string(ws[1]));
    const int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t O = ws[0], kh = ws[2], kw = ws[3];
    if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
    if (H + 2 * pad < kh || W + 2 * pad < kw)
        throw ValidationError("conv2d: padded spatial dims smaller than kernel (H=" + std::to_string(H) +
                              ", W=" + std::to_string(W) + ", k=" + std::to_string(kh) + ")");
    if (b.defined() && b.numel() != O)
        throw ValidationError("conv2d: bias length " + std::to_string(b.numel()) + " != output channels " +
                              std::to_string(O));
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    const int64_t K = C * kh * kw;
    const int64_t P = Ho * Wo;

    std::vector<NodePtr<T>> parents{x.node(), w.node()};
    if (b.defined()) parents.push_back(b.node());
    auto out = detail::make_op_node<T>({N, O, Ho, Wo}, parents);

    const T* xv = x.value().data();
    const T* wv = w.value().data();
    const T* bv = b.defined() ? b.value().data() : nullptr;
    T* ov = out->value.data();

    for (int64_t n = 0; n < N; ++n) {
        const T* xn = xv + n * C * H * W;
        T* on = ov + n * O * P;
        for (int64_t j0 = 0; j0 < P; j0 += detail::kConvTile) {
            const int64_t j1 = std::min(P, j0 + detail::kConvTile);
            const int64_t tile = j1 - j0;
            detail::ConvTileIdx idx;
            idx.build(stride, pad, Wo, j0, j1);
            std::vector<T> col(size_t(K) * tile);
            detail::im2col_tile(xn, C, H, W, kh, kw, idx, col.data());
            parallel_for(O, [&](int64_t o0, int64_t o1) {
                for (int64_t o = o0; o < o1; ++o) {
                    T* __restrict orow = on + o * P + j0;
                    const T init = bv ? bv[o] : T(0);
                    for (int64_t j = 0; j < tile; ++j) orow[j] = init;
                    const T* wrow = wv + o * K;
                    for (int64_t k = 0; k < K; ++k) {
                        const T a = wrow[k];
                        if (a == T(0)) continue;
                        const T* __restrict crow = col.data() + k * tile;
                        for (int64_t j = 0; j < tile; ++j) orow[j] += a * crow[j];
                    }
                }
            });
        }
    }

    if (out->requires_grad) {
        const bool has_b = b.defined();
        out->backward_fn = [=](Node<T>* self) {
            auto& px = self->parents[0];
            auto& pw = self->parents[1];
            const T* g = self->grad.data();
            const T* xv2 = px->value.data();
            const T* wv2 = pw->value.data();
            if (px->requires_grad) px->ensure_grad();
            if (pw->requires_grad) pw->ensure_grad();
            for (int64_t n = 0; n < N; ++n) {
                const T* xn = xv2 + n * C * H * W;
                const T* gn = g + n * O * P;
                for (int64_t j0 = 0; j0 < P; j0 += detail::kConvTile) {
                    const int64_t j1 = std::min(P, j0 + detail::kConvTile);
                    const int64_t tile = j1 - j0;
                    detail::ConvTileIdx idx;
                    idx.build(stride, pad, Wo, j0, j1);
                    std::vector<T> col;
                    if (pw->requires_grad) {
                        col.resize(size_t(K) * tile);
                        detail::im2col_tile(xn, C, H, W, kh, kw, idx, col.data());
                    }
                    if (pw->requires_grad) {
                        T* gw = pw->grad.data();
                        parallel_for(O, [&](int64_t o0, int64_t o1) {
                            for (int64_t o = o0; o < o1; ++o) {
                                const T* grow = gn + o * P + j0;
                                T* gwrow = gw + o * K;
                                for (int64_t k = 0; k < K; ++k)
                                    gwrow[k] += detail::dot_lanes(grow, col.data() + k * tile, tile);
                            }
                        });
                    }
                    if (px->requires_grad) {
                        std::vector<T> dcol(size_t(K) * tile, T(0));
                        parallel_for(K, [&](int64_t k0, int64_t k1) {
                            for (int64_t k = k0; k < k1; ++k) {
                                T* __restrict drow = dcol.data() + k * tile;
                                for (int64_t o = 0; o < O; ++o) {
                                    const T a = wv2[o * K + k];
                                    if (a == T(0)) continue;
                                    const T* __restrict grow = gn + o * P + j0;
                                    for (int64_t j = 0; j < tile; ++j) drow[j] += a * grow[j];
                                }
                            }
                        });
                        detail::col2im_tile(dcol.data(), C, H, W, kh, kw, idx,
                                            px->grad.data() + n * C * H * W);
                    }
                }
            }
            if (has_b && self->parents[2]->requires_grad) {
                auto& pb = self->parents[2];
                pb->ensure_grad();
                T* gb = pb->grad.data();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t o = 0; o < O; ++o) {
                        const T* grow = g + (n * O + o) * P;
                        T acc = 0;
                        for (int64_t j = 0; j < P; ++j) acc += grow[j];
                        gb[o] += acc;
                    }
            }
        };
    }
    return Tensor<T>(out);
}

// Mean over the spatial dimensions: NCHW -> [N,C,1,1].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ValidationError("global_avg_pool: expected NCHW, got " + shape_str(s));
    const int64_t N = s[0], C = s[1], HW = s[2] * s[3];
    auto out = detail::make_op_node<T>({N, C, 1, 1}, {x.node()});
    const T* xv = x.value().data();
    T* ov = out->value.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        T acc = 0;
        const T* p = xv + nc * HW;
        for (int64_t i = 0; i < HW; ++i) acc += p[i];
        ov[nc] = acc / T(HW);
    }
    if (out->requires_grad) {
        out->backward_fn = [N, C, HW](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const T* g = self->grad.data();
            T* gx = p->grad.data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const T gv = g[nc] / T(HW);
                T* row = gx + nc * HW;
                for (int64_t i = 0; i < HW; ++i) row[i] += gv;
            }
        };
    }
    return Tensor<T>(out);
}

namespace detail {

struct LerpIdx {
    int64_t lo, hi;
    double frac;
};

// align-corners-false source coordinate: (i + 0.5) * in/out - 0.5, clamped.
inline LerpIdx lerp_index(int64_t i, int64_t in_size, int64_t out_size) {
    double src = (double(i) + 0.5) * double(in_size) / double(out_size) - 0.5;
    if (src < 0) src = 0;
    if (src > double(in_size - 1)) src = double(in_size - 1);
    const int64_t lo = int64_t(src);
    const int64_t hi = std::min(lo + 1, in_size - 1);
    return {lo, hi, src - double(lo)};
}

} // namespace detail

// Zero padding at the bottom/right edges: NCHW -> [N,C,out_h,out_w].
template <typename T>
Tensor<T> pad_spatial(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ValidationError("pad_spatial: expected NCHW, got " + shape_str(s));
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    if (out_h < H || out_w < W) throw ValidationError("pad_spatial: output smaller than input");
    if (out_h == H && out_w == W) return x;
    auto out = detail::make_op_node<T>({N, C, out_h, out_w}, {x.node()});
    std::fill(out->value.begin(), out->value.end(), T(0));
    const T* xv = x.value().data();
    T* ov = out->value.data();
    for (int64_t nc = 0; nc < N * C; ++nc)
        for (int64_t y = 0; y < H; ++y)
            std::copy_n(xv + (nc * H + y) * W, W, ov + (nc * out_h + y) * out_w);
    if (out->requires_grad) {
        out->backward_fn = [N, C, H, W, out_h, out_w](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const T* g = self->grad.data();
            T* gx = p->grad.data();
            for (int64_t nc = 0; nc < N * C; ++nc)
                for (int64_t y = 0; y < H; ++y) {
                    const T* src = g + (nc * out_h + y) * out_w;
                    T* dst = gx + (nc * H + y) * W;
                    for (int64_t x2 = 0; x2 < W; ++x2) dst[x2] += src[x2];
                }
        };
    }
    return Tensor<T>(out);
}

// Top-left crop: NCHW -> [N,C,out_h,out_w].
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ValidationError("crop_spatial: expected NCHW, got " + shape_str(s));
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    if (out_h > H || out_w > W) throw ValidationError("crop_spatial: output larger than input");
    if (out_h == H && out_w == W) return x;
    auto out = detail::make_op_node<T>({N, C, out_h, out_w}, {x.node()});
    const T* xv = x.value().data();
    T* ov = out->value.data();
    for (int64_t nc = 0; nc < N * C; ++nc)
        for (int64_t y = 0; y < out_h; ++y)
            std::copy_n(xv + (nc * H + y) * W, out_w, ov + (nc * out_h + y) * out_w);
    if (out->requires_grad) {
        out->backward_fn = [N, C, H, W, out_h, out_w](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const T* g = self->grad.data();
            T* gx = p->grad.data();
            for (int64_t nc = 0; nc < N * C; ++nc)
                for (int64_t y = 0; y < out_h; ++y) {
                    const T* src = g + (nc * out_h + y) * out_w;
                    T* dst = gx + (nc * H + y) * W;
                    for (int64_t x2 = 0; x2 < out_w; ++x2) dst[x2] += src[x2];
                }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> resample_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ValidationError("resample_bilinear: expected NCHW, got " + shape_str(s));
    if (out_h < 1 || out_w < 1) throw ValidationError("resample_bilinear: output dims must be >= 1");
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    auto out = detail::make_op_node<T>({N, C, out_h, out_w}, {x.node()});

    std::vector<detail::LerpIdx> ys(static_cast<size_t>(out_h));
    std::vector<detail::LerpIdx> xs(static_cast<size_t>(out_w));
    for (int64_t i = 0; i < out_h; ++i) ys[size_t(i)] = detail::lerp_index(i, H, out_h);
    for (int64_t i = 0; i < out_w; ++i) xs[size_t(i)] = detail::lerp_index(i, W, out_w);

    const T* xv = x.value().data();
    T* ov = out->value.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = xv + nc * H * W;
        T* oplane = ov + nc * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const auto& iy = ys[size_t(oy)];
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const auto& ix = xs[size_t(ox)];
                const T v00 = plane[iy.lo * W + ix.lo], v01 = plane[iy.lo * W + ix.hi];
                const T v10 = plane[iy.hi * W + ix.lo], v11 = plane[iy.hi * W + ix.hi];
                const T top = v00 + T(ix.frac) * (v01 - v00);
                const T bot = v10 + T(ix.frac) * (v11 - v10);
                oplane[oy * out_w + ox] = top + T(iy.frac) * (bot - top);
            }
        }
    }
    if (out->requires_grad) {
        out->backward_fn = [N, C, H, W, out_h, out_w, ys, xs](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const T* g = self->grad.data();
            T* gx = p->grad.data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                T* plane = gx + nc * H * W;
                const T* gplane = g + nc * out_h * out_w;
                for (int64_t oy = 0; oy < out_h; ++oy) {
                    const auto& iy = ys[size_t(oy)];
                    for (int64_t ox = 0; ox < out_w; ++ox) {
                        const auto& ix = xs[size_t(ox)];
                        const T gv = gplane[oy * out_w + ox];
                        const T fy = T(iy.frac), fx = T(ix.frac);
                        plane[iy.lo * W + ix.lo] += gv * (1 - fy) * (1 - fx);
                        plane[iy.lo * W + ix.hi] += gv * (1 - fy) * fx;
                        plane[iy.hi * W + ix.lo] += gv * fy * (1 - fx);
                        plane[iy.hi * W + ix.hi] += gv * fy * fx;
                    }
                }
            }
        };
    }
    return Tensor<T>(out);
}

} // namespace cardiomm::ad
