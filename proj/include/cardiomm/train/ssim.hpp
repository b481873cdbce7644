#pragma once

#include "cardiomm/core/nn_ops.hpp"
#include "cardiomm/core/tensor.hpp"
#include "cardiomm/eval/metrics.hpp"

namespace cardiomm {

// Differentiable SSIM loss 1 - SSIM(x, y): same definition as the evaluation
// metric (Gaussian 11x11 window, valid positions, K1/K2 constants), built
// from convolution primitives so gradients flow to the reconstruction.
template <typename T>
ad::Tensor<T> ssim_loss(const ad::Tensor<T>& recon, const ad::Tensor<T>& ref, double data_range,
                        const SsimConfig& cfg = {}) {
    const auto& s = recon.shape();
    if (s != ref.shape())
        throw ValidationError("ssim_loss: shape mismatch " + ad::shape_str(s) + " vs " +
                              ad::shape_str(ref.shape()));
    if (s.size() != 4 || s[1] != 1)
        throw ValidationError("ssim_loss: expected [N,1,H,W] magnitude images");
    if (cfg.window > s[2] || cfg.window > s[3])
        throw ValidationError("ssim_loss: window larger than image");

    auto wv = detail::gaussian_window(cfg.window, cfg.sigma);
    std::vector<T> wt(wv.size());
    for (size_t i = 0; i < wv.size(); ++i) wt[i] = T(wv[i]);
    auto kernel = ad::Tensor<T>::from({1, 1, cfg.window, cfg.window}, std::move(wt));
    auto blur = [&](const ad::Tensor<T>& x) { return ad::conv2d(x, kernel, ad::Tensor<T>{}, 1, 0); };

    const T c1 = T((cfg.k1 * data_range) * (cfg.k1 * data_range));
    const T c2 = T((cfg.k2 * data_range) * (cfg.k2 * data_range));

    auto mu_x = blur(recon);
    auto mu_y = blur(ref);
    auto mu_xx = ad::square(mu_x);
    auto mu_yy = ad::square(mu_y);
    auto mu_xy = ad::mul(mu_x, mu_y);
    auto var_x = ad::sub(blur(ad::square(recon)), mu_xx);
    auto var_y = ad::sub(blur(ad::square(ref)), mu_yy);
    auto cov = ad::sub(blur(ad::mul(recon, ref)), mu_xy);

    auto num = ad::mul(ad::add_scalar(ad::scale(mu_xy, T(2)), c1), ad::add_scalar(ad::scale(cov, T(2)), c2));
    auto den = ad::mul(ad::add_scalar(ad::add(mu_xx, mu_yy), c1), ad::add_scalar(ad::add(var_x, var_y), c2));
    auto ssim_map = ad::div(num, den);
    return ad::add_scalar(ad::neg(ad::mean_all(ssim_map)), T(1));
}

} // namespace cardiomm
