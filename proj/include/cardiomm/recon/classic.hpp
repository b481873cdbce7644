#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cardiomm/kspace/coil.hpp"
#include "cardiomm/kspace/model.hpp"
#include "cardiomm/kspace/types.hpp"
#include "cardiomm/sampling/mask.hpp"

namespace cardiomm {

struct CgConfig {
    int max_iters = 30;
    double tol = 1e-6;        // relative residual threshold on the normal equations
    double lambda_reg = 0.01; // Tikhonov weight

    void validate() const {
        if (max_iters < 1) throw ValidationError("CgConfig: max_iters must be >= 1");
        if (tol <= 0) throw ValidationError("CgConfig: tol must be positive");
        if (lambda_reg < 0) throw ValidationError("CgConfig: lambda_reg must be >= 0");
    }
};

// Apodized low-resolution coil images from the autocalibration region:
// raised-cosine window over the calibration extent, zero-fill, inverse
// transform per coil.
template <typename T>
CStack<T> acs_lowres_images(const KSpaceVolume<T>& y, const UndersamplingMask& mask) {
    const auto& d = y.data;
    if (d.ny != mask.ny || d.nx != mask.nx)
        throw ValidationError("acs_lowres_images: k-space/mask shape mismatch");
    if (mask.acs_h <= 0) throw ValidationError("acs_lowres_images: empty ACS region");

    const int y0 = (d.ny - mask.acs_h) / 2, y1 = y0 + mask.acs_h;
    const int x0 = mask.acs_is_block ? (d.nx - mask.acs_w) / 2 : 0;
    const int x1 = mask.acs_is_block ? x0 + mask.acs_w : d.nx;

    auto hann = [](int i, int lo, int hi) {
        const double u = (double(i - lo) + 0.5) / double(hi - lo);
        return 0.5 * (1.0 - std::cos(2.0 * fft::kPi * u));
    };

    CStack<T> low(d.coils, d.ny, d.nx);
    for (int c = 0; c < d.coils; ++c)
        for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx)
                low.at(c, yy, xx) = d.at(c, yy, xx) * T(hann(yy, y0, y1) * hann(xx, x0, x1));
    ifft2c_inplace(low);
    return low;
}

// Low-frequency sensitivity estimation from the autocalibration region:
// window the ACS, zero-fill, inverse transform per coil and divide by the
// root-sum-of-squares. Pixels below the support threshold get zero maps.
template <typename T>
CoilSensitivities<T> estimate_sens_acs(const KSpaceVolume<T>& y, const UndersamplingMask& mask,
                                       double support_eps = 1e-3) {
    const auto& d = y.data;
    CStack<T> low = acs_lowres_images(y, mask);

    std::vector<T> mag = sos(low);
    T peak = 0;
    for (T v : mag) peak = std::max(peak, v);
    const T thresh = T(support_eps) * peak;

    CoilSensitivities<T> sens;
    sens.maps = CStack<T>(d.coils, d.ny, d.nx);
    for (int c = 0; c < d.coils; ++c)
        for (size_t i = 0; i < mag.size(); ++i)
            sens.maps.v[size_t(c) * mag.size() + i] =
                mag[i] > thresh ? low.v[size_t(c) * mag.size() + i] / mag[i] : std::complex<T>{0, 0};
    return sens;
}

// x0 = F* U* y per coil
template <typename T>
CStack<T> zero_filled(const KSpaceVolume<T>& y, const UndersamplingMask& mask) {
    CStack<T> img = y.data;
    for (int c = 0; c < img.coils; ++c)
        for (int yy = 0; yy < mask.ny; ++yy)
            for (int xx = 0; xx < mask.nx; ++xx)
                if (!mask.at(yy, xx)) img.at(c, yy, xx) = {0, 0};
    ifft2c_inplace(img);
    return img;
}

template <typename T>
struct SenseResult {
    CImage<T> image;
    std::vector<double> normal_residuals; // ||b - (A^H A + l) x_k|| per iteration
    std::vector<double> data_residuals;   // ||A x_k - y|| per iteration
    int iterations = 0;
};

// Conjugate-gradient SENSE on the Tikhonov-regularized normal equations
// (A^H A + lambda I) x = A^H y with A = U F S.
template <typename T>
SenseResult<T> sense_cg(const KSpaceVolume<T>& y, const UndersamplingMask& mask,
                        const CoilSensitivities<T>& sens, const CgConfig& cfg = {}) {
    cfg.validate();
    const int ny = y.data.ny, nx = y.data.nx;
    if (sens.maps.ny != ny || sens.maps.nx != nx || sens.maps.coils != y.data.coils)
        throw ValidationError("sense_cg: sensitivity/k-space shape mismatch");

    auto apply_normal = [&](const CImage<T>& x) {
        auto ax = forward_model(x, sens, mask);
        auto out = adjoint_model(ax, sens, mask);
        if (cfg.lambda_reg > 0)
            for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += T(cfg.lambda_reg) * x.v[i];
        return out;
    };
    auto data_residual = [&](const CImage<T>& x) {
        auto ax = forward_model(x, sens, mask);
        double acc = 0;
        for (size_t i = 0; i < ax.data.v.size(); ++i) acc += std::norm(ax.data.v[i] - y.data.v[i]);
        return std::sqrt(acc);
    };
    auto cdot = [](const std::vector<std::complex<T>>& a, const std::vector<std::complex<T>>& b) {
        std::complex<double> acc = 0;
        for (size_t i = 0; i < a.size(); ++i)
            acc += std::complex<double>(a[i]) * std::conj(std::complex<double>(b[i]));
        return acc;
    };

    CImage<T> b = adjoint_model(y, sens, mask);
    const double bnorm = norm2(b.v);

    SenseResult<T> res;
    res.image = CImage<T>(ny, nx);
    if (bnorm == 0.0) return res; // zero data -> zero image

    CImage<T> r = b, p = b;
    double rr = std::real(cdot(r.v, r.v));
    const double r0 = std::sqrt(rr);
    res.normal_residuals.push_back(r0);
    res.data_residuals.push_back(data_residual(res.image));

    for (int it = 0; it < cfg.max_iters; ++it) {
        auto q = apply_normal(p);
        const double pq = std::real(cdot(p.v, q.v));
        if (pq <= 0) break; // numerically singular direction
        const double alpha = rr / pq;
        for (size_t i = 0; i < res.image.v.size(); ++i) {
            res.image.v[i] += T(alpha) * p.v[i];
            r.v[i] -= T(alpha) * q.v[i];
        }
        const double rr_new = std::real(cdot(r.v, r.v));
        const double rn = std::sqrt(rr_new);
        res.normal_residuals.push_back(rn);
        res.data_residuals.push_back(data_residual(res.image));
        res.iterations = it + 1;
        if (rn > 10.0 * r0) {
            std::string trace;
            for (double v : res.normal_residuals) trace += " " + std::to_string(v);
            throw NumericalError("sense_cg: diverged, residual trace:" + trace);
        }
        if (rn <= cfg.tol * bnorm) break;
        const double beta = rr_new / rr;
        for (size_t i = 0; i < p.v.size(); ++i) p.v[i] = r.v[i] + T(beta) * p.v[i];
        rr = rr_new;
    }
    return res;
}

} // namespace cardiomm
