#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cardiomm/core/nn_ops.hpp"
#include "cardiomm/core/param_store.hpp"
#include "cardiomm/core/tensor.hpp"

namespace cardiomm {

using ad::Tensor;

template <typename T>
struct Conv2dModule {
    Tensor<T> w, b;
    int64_t stride = 1, pad = 1;

    static Conv2dModule create(ad::ParamStore<T>& store, const std::string& name, int64_t out_ch,
                               int64_t in_ch, int64_t k, Rng& rng, int64_t stride = 1, int64_t pad = 1,
                               double init_scale = 1.0) {
        Conv2dModule m;
        m.stride = stride;
        m.pad = pad;
        const double bound = init_scale / std::sqrt(double(in_ch * k * k));
        m.w = store.create_uniform(name + ".w", {out_ch, in_ch, k, k}, rng, -bound, bound);
        m.b = store.create_uniform(name + ".b", {out_ch}, rng, -bound, bound);
        return m;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return ad::conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct LinearModule {
    Tensor<T> w, b;

    static LinearModule create(ad::ParamStore<T>& store, const std::string& name, int64_t out_dim,
                               int64_t in_dim, Rng& rng) {
        LinearModule m;
        const double bound = 1.0 / std::sqrt(double(in_dim));
        m.w = store.create_uniform(name + ".w", {out_dim, in_dim}, rng, -bound, bound);
        m.b = store.create_uniform(name + ".b", {out_dim}, rng, -bound, bound);
        return m;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return ad::linear(x, w, b); }
};

template <typename T>
struct PReluModule {
    Tensor<T> alpha;

    static PReluModule create(ad::ParamStore<T>& store, const std::string& name) {
        PReluModule m;
        m.alpha = store.create_const(name + ".alpha", {1}, T(0.25));
        return m;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return ad::prelu(x, alpha); }
};

// Channel attention block: conv3x3 -> PReLU -> conv3x3, gated by pooled
// channel statistics (GAP -> linear down -> PReLU -> linear up -> sigmoid),
// residual add (1x1 projection when the channel count changes).
template <typename T>
struct ChannelAttentionBlock {
    Conv2dModule<T> conv1, conv2;
    PReluModule<T> act;
    LinearModule<T> fc1, fc2;
    PReluModule<T> fc_act;
    Conv2dModule<T> proj; // only when in != out
    bool has_proj = false;
    int64_t out_ch = 0;

    static ChannelAttentionBlock create(ad::ParamStore<T>& store, const std::string& name,
                                        int64_t in_ch, int64_t out_ch, Rng& rng, int64_t reduction) {
        ChannelAttentionBlock m;
        m.out_ch = out_ch;
        m.conv1 = Conv2dModule<T>::create(store, name + ".c1", out_ch, in_ch, 3, rng);
        m.act = PReluModule<T>::create(store, name + ".act");
        m.conv2 = Conv2dModule<T>::create(store, name + ".c2", out_ch, out_ch, 3, rng);
        const int64_t mid = std::max<int64_t>(1, out_ch / reduction);
        m.fc1 = LinearModule<T>::create(store, name + ".fc1", mid, out_ch, rng);
        m.fc_act = PReluModule<T>::create(store, name + ".fca");
        m.fc2 = LinearModule<T>::create(store, name + ".fc2", out_ch, mid, rng);
        if (in_ch != out_ch) {
            m.proj = Conv2dModule<T>::create(store, name + ".proj", out_ch, in_ch, 1, rng, 1, 0);
            m.has_proj = true;
        }
        return m;
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto h = conv2(act(conv1(x)));
        const auto& hs = h.shape();
        auto pooled = ad::reshape(ad::global_avg_pool(h), {hs[0], hs[1]});
        auto gate = ad::sigmoid(fc2(fc_act(fc1(pooled))));
        auto scaled = ad::mul(h, ad::reshape(gate, {hs[0], hs[1], 1, 1}));
        auto res = has_proj ? proj(x) : x;
        return ad::add(scaled, res);
    }
};

// FiLM-style metadata adapter: per-channel sigmoid gate from the metadata
// vector, affine modulation (gamma init 1, beta init 0), channel attention.
template <typename T>
struct MetadataAdapter {
    LinearModule<T> gate;
    Tensor<T> gamma, beta;
    ChannelAttentionBlock<T> cab;
    int64_t channels = 0;

    static MetadataAdapter create(ad::ParamStore<T>& store, const std::string& name,
                                  int64_t channels, int64_t embed_dim, Rng& rng, int64_t reduction) {
        MetadataAdapter m;
        m.channels = channels;
        m.gate = LinearModule<T>::create(store, name + ".gate", channels, embed_dim, rng);
        m.gamma = store.create_const(name + ".gamma", {channels}, T(1));
        m.beta = store.create_const(name + ".beta", {channels}, T(0));
        m.cab = ChannelAttentionBlock<T>::create(store, name + ".cab", channels, channels, rng, reduction);
        return m;
    }

    Tensor<T> operator()(const Tensor<T>& f_a, const Tensor<T>& t_m) const {
        const auto& fs = f_a.shape();
        if (fs[1] != channels)
            throw ValidationError("metadata_adapter: feature channels " + std::to_string(fs[1]) +
                                  " != adapter channels " + std::to_string(channels));
        auto w_m = ad::reshape(ad::sigmoid(gate(t_m)), {1, channels, 1, 1});
        auto f_at = ad::add(ad::mul(f_a, ad::reshape(gamma, {1, channels, 1, 1})),
                            ad::reshape(beta, {1, channels, 1, 1}));
        return cab(ad::mul(w_m, f_at));
    }
};

// Undersampling prompter: softmax attention over a learnable prompt
// dictionary, bilinear resize to the decoder level, one fusing convolution.
template <typename T>
struct UndersamplingPrompter {
    LinearModule<T> attn;
    Tensor<T> dictionary; // [Q, C_p, hw, hw]
    Conv2dModule<T> fuse;
    int64_t q = 0, cp = 0, hw = 0;

    static UndersamplingPrompter create(ad::ParamStore<T>& store, const std::string& name,
                                        int64_t channels, int64_t q, int64_t hw, int64_t embed_dim,
                                        Rng& rng) {
        UndersamplingPrompter m;
        m.q = q;
        m.cp = std::max<int64_t>(1, channels / 2);
        m.hw = hw;
        m.attn = LinearModule<T>::create(store, name + ".attn", q, embed_dim, rng);
        m.dictionary = store.create_uniform(name + ".dict", {q, m.cp, hw, hw}, rng, -0.1, 0.1);
        m.fuse = Conv2dModule<T>::create(store, name + ".fuse", m.cp, m.cp, 3, rng);
        return m;
    }

    // soft attention weights on the simplex, exposed for audits
    Tensor<T> weights(const Tensor<T>& t_u) const { return ad::softmax_lastdim(attn(t_u)); }

    Tensor<T> operator()(const Tensor<T>& t_u, int64_t target_h, int64_t target_w) const {
        auto w_u = ad::reshape(weights(t_u), {1, q, 1, 1});
        auto dict = ad::reshape(dictionary, {1, q * cp, hw, hw});
        Tensor<T> p_u;
        for (int64_t i = 0; i < q; ++i) {
            auto atom = ad::slice_channels(dict, i * cp, cp);
            auto wq = ad::slice_channels(w_u, i, 1);
            auto term = ad::mul(atom, wq);
            p_u = p_u.defined() ? ad::add(p_u, term) : term;
        }
        return fuse(ad::resample_bilinear(p_u, target_h, target_w));
    }
};

} // namespace cardiomm
