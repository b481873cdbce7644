#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cardiomm/core/errors.hpp"

namespace cardiomm {

// 20 log10(max(ref)/rmse); +inf sentinel for identical inputs.
inline double psnr(const std::vector<double>& ref, const std::vector<double>& test) {
    if (ref.size() != test.size() || ref.empty())
        throw ValidationError("psnr: inputs must be non-empty and the same shape");
    double peak = 0, se = 0;
    for (size_t i = 0; i < ref.size(); ++i) {
        peak = std::max(peak, ref[i]);
        const double d = ref[i] - test[i];
        se += d * d;
    }
    const double rmse = std::sqrt(se / double(ref.size()));
    if (rmse == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(peak / rmse);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(size_t(size) * size);
    const double c = (size - 1) / 2.0;
    double sum = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double v = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2 * sigma * sigma));
            w[size_t(y) * size + x] = v;
            sum += v;
        }
    for (auto& v : w) v /= sum;
    return w;
}

} // namespace detail

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01, k2 = 0.03;
};

// Mean local SSIM over valid window positions with a Gaussian-weighted
// window; data_range sets the stabilizing constants C1/C2.
inline double ssim(const std::vector<double>& ref, const std::vector<double>& test, int ny, int nx,
                   double data_range, const SsimConfig& cfg = {}) {
    if (ref.size() != test.size() || int64_t(ref.size()) != int64_t(ny) * nx)
        throw ValidationError("ssim: inputs must match the given shape");
    if (cfg.window > ny || cfg.window > nx)
        throw ValidationError("ssim: window larger than image");
    const auto w = detail::gaussian_window(cfg.window, cfg.sigma);
    const double c1 = (cfg.k1 * data_range) * (cfg.k1 * data_range);
    const double c2 = (cfg.k2 * data_range) * (cfg.k2 * data_range);
    const int oy = ny - cfg.window + 1, ox = nx - cfg.window + 1;
    double acc = 0;
    for (int y = 0; y < oy; ++y)
        for (int x = 0; x < ox; ++x) {
            double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
            for (int wy = 0; wy < cfg.window; ++wy)
                for (int wx = 0; wx < cfg.window; ++wx) {
                    const double wv = w[size_t(wy) * cfg.window + wx];
                    const double a = ref[size_t(y + wy) * nx + (x + wx)];
                    const double b = test[size_t(y + wy) * nx + (x + wx)];
                    mx += wv * a;
                    my += wv * b;
                    mxx += wv * a * a;
                    myy += wv * b * b;
                    mxy += wv * a * b;
                }
            const double vx = mxx - mx * mx, vy = myy - my * my, cxy = mxy - mx * my;
            acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    return acc / double(oy) / double(ox);
}

struct MetricAggregate {
    double mean = 0, ci_lo = 0, ci_hi = 0;
    size_t n = 0;
};

// mean with 95% normal-approximation confidence interval (1.96 * sem)
inline MetricAggregate aggregate_metric(const std::vector<double>& values) {
    MetricAggregate a;
    a.n = values.size();
    if (values.empty()) return a;
    double sum = 0;
    for (double v : values) sum += v;
    a.mean = sum / double(values.size());
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        const double sem = std::sqrt(ss / double(values.size() - 1) / double(values.size()));
        a.ci_lo = a.mean - 1.96 * sem;
        a.ci_hi = a.mean + 1.96 * sem;
    } else {
        a.ci_lo = a.ci_hi = a.mean;
    }
    return a;
}

} // namespace cardiomm
