#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiomm/core/fft_ops.hpp"
#include "cardiomm/model/blocks.hpp"
#include "cardiomm/recon/classic.hpp"
#include "cardiomm/text/heads.hpp"

namespace cardiomm {

struct ModelConfig {
    int phases = 10;          // unrolled network depth K
    int unet_levels = 3;      // 3-level UNet: two down/up stages plus bottleneck
    int base_channels = 16;   // desk-scale default width
    int prompt_components = 3; // Q
    int prompt_hw = 8;        // prompt dictionary spatial size
    int embed_dim = 128;      // projected text dimension D
    int attention_reduction = 4;
    int sens_base_channels = 8;
    bool text_enabled = true; // false selects the text-unaware variant
    uint64_t init_seed = 0;

    void validate() const {
        if (phases < 0) throw ValidationError("ModelConfig: phases must be >= 0");
        if (unet_levels != 3) throw ValidationError("ModelConfig: only 3-level UNets are supported");
        if (prompt_components < 1) throw ValidationError("ModelConfig: need at least one prompt component");
        if (base_channels < 2 || sens_base_channels < 2)
            throw ValidationError("ModelConfig: channel widths must be >= 2");
    }

    nlohmann::json to_json() const {
        return {{"phases", phases},
                {"unet_levels", unet_levels},
                {"base_channels", base_channels},
                {"prompt_components", prompt_components},
                {"prompt_hw", prompt_hw},
                {"embed_dim", embed_dim},
                {"attention_reduction", attention_reduction},
                {"sens_base_channels", sens_base_channels},
                {"text_enabled", text_enabled},
                {"init_seed", init_seed}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.phases = j.at("phases").get<int>();
        c.unet_levels = j.at("unet_levels").get<int>();
        c.base_channels = j.at("base_channels").get<int>();
        c.prompt_components = j.at("prompt_components").get<int>();
        c.prompt_hw = j.at("prompt_hw").get<int>();
        c.embed_dim = j.at("embed_dim").get<int>();
        c.attention_reduction = j.at("attention_reduction").get<int>();
        c.sens_base_channels = j.at("sens_base_channels").get<int>();
        c.text_enabled = j.at("text_enabled").get<bool>();
        c.init_seed = j.at("init_seed").get<uint64_t>();
        c.validate();
        return c;
    }
};

// ---- complex channel-pair helpers (channel 2j = Re coil j, 2j+1 = Im) ----

template <typename T>
Tensor<T> pack_cstack(const CStack<double>& s, double scale = 1.0) {
    std::vector<T> v(size_t(2 * s.coils) * s.ny * s.nx);
    const size_t plane = size_t(s.ny) * s.nx;
    for (int c = 0; c < s.coils; ++c)
        for (size_t i = 0; i < plane; ++i) {
            v[(2 * size_t(c)) * plane + i] = T(s.v[size_t(c) * plane + i].real() * scale);
            v[(2 * size_t(c) + 1) * plane + i] = T(s.v[size_t(c) * plane + i].imag() * scale);
        }
    return Tensor<T>::from({1, 2 * s.coils, s.ny, s.nx}, std::move(v));
}

template <typename T>
CStack<double> unpack_cstack(const Tensor<T>& t, double scale = 1.0) {
    const auto& sh = t.shape();
    const int coils = int(sh[1] / 2);
    CStack<double> out(coils, int(sh[2]), int(sh[3]));
    const size_t plane = size_t(out.ny) * out.nx;
    for (int c = 0; c < coils; ++c)
        for (size_t i = 0; i < plane; ++i)
            out.v[size_t(c) * plane + i] = {double(t.value()[(2 * size_t(c)) * plane + i]) * scale,
                                            double(t.value()[(2 * size_t(c) + 1) * plane + i]) * scale};
    return out;
}

// sum_j conj(S_j) x_j : [1,2C,H,W] x [1,2C,H,W] -> [1,2,H,W]
template <typename T>
Tensor<T> complex_combine(const Tensor<T>& x, const Tensor<T>& s) {
    const int64_t coils = x.shape()[1] / 2;
    if (x.shape() != s.shape()) throw ValidationError("complex_combine: shape mismatch");
    Tensor<T> re, im;
    for (int64_t c = 0; c < coils; ++c) {
        auto xr = ad::slice_channels(x, 2 * c, 1), xi = ad::slice_channels(x, 2 * c + 1, 1);
        auto sr = ad::slice_channels(s, 2 * c, 1), si = ad::slice_channels(s, 2 * c + 1, 1);
        auto tr = ad::add(ad::mul(sr, xr), ad::mul(si, xi));
        auto ti = ad::sub(ad::mul(sr, xi), ad::mul(si, xr));
        re = re.defined() ? ad::add(re, tr) : tr;
        im = im.defined() ? ad::add(im, ti) : ti;
    }
    return ad::concat_channels<T>({re, im});
}

// S_j x : [1,2,H,W] x [1,2C,H,W] -> [1,2C,H,W]
template <typename T>
Tensor<T> complex_expand(const Tensor<T>& xc, const Tensor<T>& s) {
    const int64_t coils = s.shape()[1] / 2;
    auto xr = ad::slice_channels(xc, 0, 1), xi = ad::slice_channels(xc, 1, 1);
    std::vector<Tensor<T>> chans;
    for (int64_t c = 0; c < coils; ++c) {
        auto sr = ad::slice_channels(s, 2 * c, 1), si = ad::slice_channels(s, 2 * c + 1, 1);
        chans.push_back(ad::sub(ad::mul(sr, xr), ad::mul(si, xi)));
        chans.push_back(ad::add(ad::mul(sr, xi), ad::mul(si, xr)));
    }
    return ad::concat_channels<T>(chans);
}

// sqrt(sum_j |x_j|^2 + eps) : [1,2C,H,W] -> [1,1,H,W]
template <typename T>
Tensor<T> complex_sos_mag(const Tensor<T>& x, T eps = T(1e-12)) {
    const int64_t chans = x.shape()[1];
    Tensor<T> acc;
    for (int64_t c = 0; c < chans; ++c) {
        auto sq = ad::square(ad::slice_channels(x, c, 1));
        acc = acc.defined() ? ad::add(acc, sq) : sq;
    }
    return ad::sqrt(ad::add_scalar(acc, eps));
}

// Eq-style elementwise k-space data consistency: acquired entries blend the
// measurement with the network prediction by lambda/(1+lambda), non-acquired
// entries pass the prediction through.
template <typename T>
Tensor<T> data_consistency(const Tensor<T>& m, const Tensor<T>& y, const Tensor<T>& mask01,
                           const Tensor<T>& lambda_pos) {
    auto k = ad::fft2c_op(m);
    auto lam1 = ad::add_scalar(lambda_pos, T(1));
    auto k_acq = ad::div(ad::add(y, ad::mul(k, lambda_pos)), lam1);
    auto keep = ad::add_scalar(ad::neg(mask01), T(1));
    auto blended = ad::add(ad::mul(mask01, k_acq), ad::mul(keep, k));
    return ad::ifft2c_op(blended);
}

// ---- text-aware UNet ----

template <typename T>
struct TextUNet {
    int64_t c0 = 16;
    Conv2dModule<T> stem, head;
    struct Enc {
        ChannelAttentionBlock<T> a, b, c;
        Conv2dModule<T> down;
    };
    Enc enc0, enc1;
    ChannelAttentionBlock<T> bot_a, bot_b, bot_c;
    struct Dec {
        UndersamplingPrompter<T> prompter;
        ChannelAttentionBlock<T> f1, f2, f3;
        Conv2dModule<T> up;
        ChannelAttentionBlock<T> refine;
        MetadataAdapter<T> adapter;
        int64_t cd = 0, cs = 0;
    };
    Dec dec1, dec0;

    static TextUNet create(ad::ParamStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                           int64_t base, Rng& rng) {
        TextUNet u;
        u.c0 = base;
        const int64_t r = cfg.attention_reduction;
        u.stem = Conv2dModule<T>::create(store, prefix + ".stem", base, 2, 3, rng);
        auto make_enc = [&](const std::string& n, int64_t ch) {
            Enc e;
            e.a = ChannelAttentionBlock<T>::create(store, n + ".cab0", ch, ch, rng, r);
            e.b = ChannelAttentionBlock<T>::create(store, n + ".cab1", ch, ch, rng, r);
            e.c = ChannelAttentionBlock<T>::create(store, n + ".cab2", ch, ch, rng, r);
            e.down = Conv2dModule<T>::create(store, n + ".down", 2 * ch, ch, 3, rng, 2, 1);
            return e;
        };
        u.enc0 = make_enc(prefix + ".enc0", base);
        u.enc1 = make_enc(prefix + ".enc1", 2 * base);
        u.bot_a = ChannelAttentionBlock<T>::create(store, prefix + ".bot0", 4 * base, 4 * base, rng, r);
        u.bot_b = ChannelAttentionBlock<T>::create(store, prefix + ".bot1", 4 * base, 4 * base, rng, r);
        u.bot_c = ChannelAttentionBlock<T>::create(store, prefix + ".bot2", 4 * base, 4 * base, rng, r);
        auto make_dec = [&](const std::string& n, int64_t cd) {
            Dec d;
            d.cd = cd;
            d.cs = cd / 2;
            d.prompter = UndersamplingPrompter<T>::create(store, n + ".prompt", cd, cfg.prompt_components,
                                                          cfg.prompt_hw, cfg.embed_dim, rng);
            const int64_t cp = std::max<int64_t>(1, cd / 2);
            d.f1 = ChannelAttentionBlock<T>::create(store, n + ".cab0", cd + cp, cd, rng, r);
            d.f2 = ChannelAttentionBlock<T>::create(store, n + ".cab1", cd, cd, rng, r);
            d.f3 = ChannelAttentionBlock<T>::create(store, n + ".cab2", cd, cd, rng, r);
            d.up = Conv2dModule<T>::create(store, n + ".up", d.cs, cd, 1, rng, 1, 0);
            d.refine = ChannelAttentionBlock<T>::create(store, n + ".refine", d.cs, d.cs, rng, r);
            d.adapter = MetadataAdapter<T>::create(store, n + ".meta", d.cs, cfg.embed_dim, rng, r);
            return d;
        };
        u.dec1 = make_dec(prefix + ".dec1", 4 * base);
        u.dec0 = make_dec(prefix + ".dec0", 2 * base);
        // small head init keeps the residual UNet near the identity at start
        u.head = Conv2dModule<T>::create(store, prefix + ".head", 2, base, 3, rng, 1, 1, 0.05);
        return u;
    }

    static Tensor<T> encode_level(const Enc& e, const Tensor<T>& f_ei, Tensor<T>& skip) {
        skip = e.c(e.b(e.a(f_ei)));
        const auto& s = skip.shape();
        if (s[2] % 2 != 0 || s[3] % 2 != 0)
            throw ValidationError("encoder downsample needs even spatial dims, got " +
                                  ad::shape_str(s));
        return e.down(skip);
    }

    Tensor<T> decode_level(const Dec& d, const Tensor<T>& f_di, const Tensor<T>& f_s,
                           const Tensor<T>& t_m, const Tensor<T>& t_u, bool text_on) const {
        const auto& in_shape = f_di.shape();
        Tensor<T> e_u;
        if (text_on)
            e_u = d.prompter(t_u, in_shape[2], in_shape[3]);
        else
            e_u = Tensor<T>::zeros({1, std::max<int64_t>(1, d.cd / 2), in_shape[2], in_shape[3]});
        auto fused = d.f3(d.f2(d.f1(ad::concat_channels<T>({f_di, e_u}))));
        auto f_u = d.up(ad::resample_bilinear(fused, in_shape[2] * 2, in_shape[3] * 2));
        if (f_u.shape() != f_s.shape())
            throw ValidationError("decoder skip shape mismatch: " + ad::shape_str(f_u.shape()) +
                                  " vs " + ad::shape_str(f_s.shape()));
        auto f_a = d.refine(ad::add(f_u, f_s));
        if (!text_on) return f_a;
        return ad::add(f_a, d.adapter(f_a, t_m));
    }

    // x: [1,2,H,W] with H,W multiples of 4; residual output of the same shape
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& t_m, const Tensor<T>& t_u,
                         bool text_on) const {
        auto f = stem(x);
        Tensor<T> skip0, skip1;
        auto d0 = encode_level(enc0, f, skip0);
        auto d1 = encode_level(enc1, d0, skip1);
        auto b = bot_c(bot_b(bot_a(d1)));
        auto u1 = decode_level(dec1, b, skip1, t_m, t_u, text_on);
        auto u0 = decode_level(dec0, u1, skip0, t_m, t_u, text_on);
        return ad::add(x, head(u0));
    }
};

// pad to the UNet stride, run, crop back
template <typename T>
Tensor<T> run_unet_padded(const TextUNet<T>& unet, const Tensor<T>& x, const Tensor<T>& t_m,
                          const Tensor<T>& t_u, bool text_on) {
    const auto& s = x.shape();
    const int64_t mult = 4;
    const int64_t ph = (s[2] + mult - 1) / mult * mult;
    const int64_t pw = (s[3] + mult - 1) / mult * mult;
    auto padded = ad::pad_spatial(x, ph, pw);
    auto out = unet(padded, t_m, t_u, text_on);
    return ad::crop_spatial(out, s[2], s[3]);
}

// ---- the unrolled reconstructor ----

template <typename T>
class CardioModel {
public:
    ModelConfig cfg;
    ad::ParamStore<T> store;
    ProjectionHead<T> head_m, head_u;
    TextUNet<T> sens_net;
    struct Phase {
        TextUNet<T> unet;
        Tensor<T> raw_lambda;
    };
    std::vector<Phase> phases;

    explicit CardioModel(const ModelConfig& config) : cfg(config) {
        cfg.validate();
        Rng rng(derive_seed(cfg.init_seed, 0x6d6f64656cULL));
        head_m = ProjectionHead<T>::create(store, "text.meta", cfg.embed_dim, rng);
        head_u = ProjectionHead<T>::create(store, "text.under", cfg.embed_dim, rng);
        sens_net = TextUNet<T>::create(store, "sens", cfg, cfg.sens_base_channels, rng);
        // softplus(raw) = 1 at init
        const T raw0 = T(std::log(std::exp(1.0) - 1.0));
        for (int k = 0; k < cfg.phases; ++k) {
            char name[32];
            std::snprintf(name, sizeof(name), "phase%02d", k);
            Phase p;
            p.unet = TextUNet<T>::create(store, name, cfg, cfg.base_channels, rng);
            p.raw_lambda = store.create_const(std::string(name) + ".raw_lambda", {1}, raw0);
            phases.push_back(std::move(p));
        }
    }

    Tensor<T> lambda_at(int k) const { return ad::softplus(phases.at(size_t(k)).raw_lambda); }

    struct Conditioning {
        Tensor<T> t_m, t_u;
    };

    Conditioning condition(const TextBundle& texts, const TextEncoder& enc) const {
        texts.validate();
        Conditioning c;
        c.t_m = head_m.project(enc.encode(texts.metadata_text));
        c.t_u = head_u.project(enc.encode(texts.undersampling_text));
        return c;
    }

    // learned coil sensitivities from the ACS region (per-coil shared-weight
    // refinement of the zero-padded low-frequency images, then normalization)
    Tensor<T> sens_from_acs(const KSpaceVolume<double>& y, const UndersamplingMask& mask,
                            const Conditioning& cond, double scale) const {
        if (mask.acs_h <= 0) throw ValidationError("sens_net: empty ACS region");
        CStack<double> acs = acs_lowres_images(y, mask);

        std::vector<Tensor<T>> outs;
        const size_t plane = size_t(acs.ny) * acs.nx;
        for (int c = 0; c < acs.coils; ++c) {
            CStack<double> one(1, acs.ny, acs.nx);
            std::copy_n(acs.coil(c), plane, one.coil(0));
            auto in = pack_cstack<T>(one, scale);
            outs.push_back(run_unet_padded(sens_net, in, cond.t_m, cond.t_u, cfg.text_enabled));
        }
        auto stacked = ad::concat_channels<T>(outs);
        auto mag = complex_sos_mag(stacked);

        // support mask from the current magnitudes (constant w.r.t. the graph)
        T peak = 0;
        for (T v : mag.value()) peak = std::max(peak, v);
        std::vector<T> sup(mag.value().size());
        for (size_t i = 0; i < sup.size(); ++i) sup[i] = mag.value()[i] > T(1e-3) * peak ? T(1) : T(0);
        auto support = Tensor<T>::from(mag.shape(), std::move(sup));
        return ad::mul(ad::div(stacked, mag), support);
    }

    // one de-aliasing pass: combine, text-aware UNet, expand
    Tensor<T> dealias(const Tensor<T>& x_multi, const Tensor<T>& sens, const Conditioning& cond,
                      int phase_idx) const {
        auto x_c = complex_combine(x_multi, sens);
        auto x_d = run_unet_padded(phases.at(size_t(phase_idx)).unet, x_c, cond.t_m, cond.t_u,
                                   cfg.text_enabled);
        return complex_expand(x_d, sens);
    }

    struct Output {
        Tensor<T> multi;    // [1,2C,H,W], normalized domain
        Tensor<T> combined; // [1,2,H,W]
        Tensor<T> sos_mag;  // [1,1,H,W]
        Tensor<T> sens;     // [1,2C,H,W]
        double scale = 1.0; // multiply network-domain values by this to undo normalization
        std::vector<std::vector<double>> phase_trace; // SoS magnitude per phase when requested
    };

    Output reconstruct(const KSpaceVolume<double>& y, const UndersamplingMask& mask,
                       const TextBundle& texts, const TextEncoder& enc, bool trace = false) const {
        if (y.data.ny != mask.ny || y.data.nx != mask.nx)
            throw ValidationError("reconstruct: k-space/mask shape mismatch");
        auto masked = apply_mask(y, mask);
        auto zf = masked.data;
        ifft2c_inplace(zf);
        auto zf_mag = sos(zf);
        double peak = 0;
        for (double v : zf_mag) peak = std::max(peak, v);
        const double scale = peak > 0 ? 1.0 / peak : 1.0;

        Output out;
        out.scale = 1.0 / scale;
        auto cond = condition(texts, enc);
        out.sens = sens_from_acs(masked, mask, cond, scale);

        auto y_t = pack_cstack<T>(masked.data, scale);
        std::vector<T> m01(size_t(mask.ny) * mask.nx);
        for (size_t i = 0; i < m01.size(); ++i) m01[i] = T(mask.grid[i]);
        auto mask_t = Tensor<T>::from({1, 1, mask.ny, mask.nx}, std::move(m01));

        auto x = pack_cstack<T>(zf, scale);
        for (int k = 0; k < cfg.phases; ++k) {
            auto m = dealias(x, out.sens, cond, k);
            x = data_consistency(m, y_t, mask_t, lambda_at(k));
            if (trace) {
                auto mag = complex_sos_mag(x);
                std::vector<double> snap(mag.value().size());
                for (size_t i = 0; i < snap.size(); ++i) snap[i] = double(mag.value()[i]) * out.scale;
                out.phase_trace.push_back(std::move(snap));
            }
        }
        out.multi = x;
        out.combined = complex_combine(x, out.sens);
        out.sos_mag = complex_sos_mag(x);
        return out;
    }

    // SoS magnitude in physical units, for metrics and display
    static std::vector<double> magnitude_image(const Output& o) {
        std::vector<double> img(o.sos_mag.value().size());
        for (size_t i = 0; i < img.size(); ++i) img[i] = double(o.sos_mag.value()[i]) * o.scale;
        return img;
    }

    void save(const std::filesystem::path& dir, bool with_optimizer = true) const {
        std::filesystem::create_directories(dir);
        nlohmann::json j;
        j["model_format"] = 1;
        j["config"] = cfg.to_json();
        const std::string text = j.dump(2) + "\n";
        FILE* f = std::fopen((dir / "config.json").string().c_str(), "wb");
        if (!f) throw IoError("cannot write model config");
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
        store.save(dir, with_optimizer);
    }

    static CardioModel load(const std::filesystem::path& dir) {
        FILE* f = std::fopen((dir / "config.json").string().c_str(), "rb");
        if (!f) throw IoError("cannot read model config in " + dir.string());
        std::string text;
        char buf[4096];
        size_t n;
        while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
        std::fclose(f);
        nlohmann::json j = nlohmann::json::parse(text);
        if (j.at("model_format").get<int>() != 1) throw IoError("unsupported model format");

        CardioModel model(ModelConfig::from_json(j.at("config")));
        auto loaded = ad::ParamStore<T>::load(dir);
        if (loaded.count() != model.store.count())
            throw IoError("checkpoint parameter set does not match the configuration");
        for (auto& [name, entry] : model.store.entries()) {
            const auto& src = loaded.entries().at(name);
            if (src.param.shape() != entry.param.shape())
                throw IoError("checkpoint shape mismatch for " + name);
            entry.param.value() = src.param.value();
            entry.m = src.m;
            entry.v = src.v;
            entry.step = src.step;
        }
        return model;
    }
};

} // namespace cardiomm
