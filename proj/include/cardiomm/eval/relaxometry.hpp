#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cardiomm/core/errors.hpp"

namespace cardiomm {

struct FitMaps {
    int ny = 0, nx = 0;
    std::vector<double> value;    // T1 or T2 (ms); NaN/inf sentinels when invalid
    std::vector<double> amplitude; // A for T1, PD for T2
    std::vector<double> residual;  // rms fit residual
    std::vector<uint8_t> valid;
};

namespace detail {

// one-pixel Levenberg-Marquardt for |A - B exp(-TI/T1)|
struct T1Fit {
    double a = 0, b = 0, t1 = 0, rms = 0;
    bool ok = false;
};

inline T1Fit fit_t1_pixel(const std::vector<double>& ti, const std::vector<double>& s,
                          int max_iters = 50) {
    const size_t n = ti.size();
    double smax = 0;
    for (double v : s) smax = std::max(smax, v);
    T1Fit out;
    if (smax <= 0) return out;

    std::vector<double> tis = ti;
    std::sort(tis.begin(), tis.end());
    double a = smax, b = 2 * smax, t1 = tis[n / 2];

    auto cost = [&](double A, double B, double T1v) {
        double c = 0;
        for (size_t i = 0; i < n; ++i) {
            const double r = std::abs(A - B * std::exp(-ti[i] / T1v)) - s[i];
            c += r * r;
        }
        return c;
    };

    double lm = 1e-3;
    double c0 = cost(a, b, t1);
    for (int it = 0; it < max_iters; ++it) {
        double jtj[9] = {0}, jtr[3] = {0};
        for (size_t i = 0; i < n; ++i) {
            const double e = std::exp(-ti[i] / t1);
            const double u = a - b * e;
            const double sg = u >= 0 ? 1.0 : -1.0;
            const double r = std::abs(u) - s[i];
            const double j0 = sg;
            const double j1 = -sg * e;
            const double j2 = -sg * b * e * ti[i] / (t1 * t1);
            const double j[3] = {j0, j1, j2};
            for (int p = 0; p < 3; ++p) {
                jtr[p] += j[p] * r;
                for (int q = 0; q < 3; ++q) jtj[p * 3 + q] += j[p] * j[q];
            }
        }
        // damped 3x3 solve by Cramer
        double m[9];
        for (int p = 0; p < 9; ++p) m[p] = jtj[p];
        for (int p = 0; p < 3; ++p) m[p * 3 + p] += lm * (jtj[p * 3 + p] + 1e-12);
        const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                           m[2] * (m[3] * m[7] - m[4] * m[6]);
        if (std::abs(det) < 1e-300) break;
        auto solve = [&](int col) {
            double mm[9];
            for (int p = 0; p < 9; ++p) mm[p] = m[p];
            for (int p = 0; p < 3; ++p) mm[p * 3 + col] = -jtr[p];
            return (mm[0] * (mm[4] * mm[8] - mm[5] * mm[7]) - mm[1] * (mm[3] * mm[8] - mm[5] * mm[6]) +
                    mm[2] * (mm[3] * mm[7] - mm[4] * mm[6])) /
                   det;
        };
        const double da = solve(0), db = solve(1), dt = solve(2);
        double a1 = a + da, b1 = b + db, t1n = t1 + dt;
        if (t1n <= 1e-6) t1n = t1 * 0.5;
        const double c1 = cost(a1, b1, t1n);
        if (c1 < c0) {
            a = a1;
            b = b1;
            t1 = t1n;
            lm = std::max(lm * 0.3, 1e-12);
            if (c0 - c1 < 1e-14 * (1.0 + c0)) {
                c0 = c1;
                out.ok = true;
                break;
            }
            c0 = c1;
            out.ok = true;
        } else {
            lm *= 10;
            if (lm > 1e10) break;
        }
    }
    out.a = a;
    out.b = b;
    out.t1 = t1;
    out.rms = std::sqrt(c0 / double(n));
    return out;
}

} // namespace detail

// Per-pixel 3-parameter inversion-recovery magnitude fit.
inline FitMaps fit_t1(const std::vector<std::vector<double>>& series, const std::vector<double>& tis,
                      int ny, int nx) {
    if (series.size() < 3) throw ValidationError("fit_t1: need at least 3 inversion times");
    if (series.size() != tis.size()) throw ValidationError("fit_t1: series/TI count mismatch");
    for (const auto& img : series)
        if (int64_t(img.size()) != int64_t(ny) * nx) throw ValidationError("fit_t1: image size mismatch");

    FitMaps maps;
    maps.ny = ny;
    maps.nx = nx;
    const size_t npix = size_t(ny) * nx;
    maps.value.assign(npix, std::numeric_limits<double>::quiet_NaN());
    maps.amplitude.assign(npix, 0.0);
    maps.residual.assign(npix, 0.0);
    maps.valid.assign(npix, 0);

    std::vector<double> s(series.size());
    for (size_t i = 0; i < npix; ++i) {
        for (size_t t = 0; t < series.size(); ++t) s[t] = series[t][i];
        auto fit = detail::fit_t1_pixel(tis, s);
        if (!fit.ok) continue;
        maps.value[i] = fit.t1;
        maps.amplitude[i] = fit.a;
        maps.residual[i] = fit.rms;
        maps.valid[i] = 1;
    }
    return maps;
}

// Per-pixel log-linear weighted least squares for PD exp(-TE/T2). Weights are
// the squared signals, which mimics the unweighted nonlinear objective.
inline FitMaps fit_t2(const std::vector<std::vector<double>>& series, const std::vector<double>& tes,
                      int ny, int nx) {
    if (series.size() < 2) throw ValidationError("fit_t2: need at least 2 echo times");
    if (series.size() != tes.size()) throw ValidationError("fit_t2: series/TE count mismatch");
    for (const auto& img : series)
        if (int64_t(img.size()) != int64_t(ny) * nx) throw ValidationError("fit_t2: image size mismatch");

    FitMaps maps;
    maps.ny = ny;
    maps.nx = nx;
    const size_t npix = size_t(ny) * nx;
    maps.value.assign(npix, std::numeric_limits<double>::quiet_NaN());
    maps.amplitude.assign(npix, 0.0);
    maps.residual.assign(npix, 0.0);
    maps.valid.assign(npix, 0);

    for (size_t i = 0; i < npix; ++i) {
        double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
        int pts = 0;
        for (size_t t = 0; t < series.size(); ++t) {
            const double v = series[t][i];
            if (v <= 0) continue;
            const double w = v * v, x = tes[t], y = std::log(v);
            sw += w;
            swx += w * x;
            swy += w * y;
            swxx += w * x * x;
            swxy += w * x * y;
            ++pts;
        }
        if (pts < 2) continue;
        const double denom = sw * swxx - swx * swx;
        if (denom <= 0) continue;
        const double slope = (sw * swxy - swx * swy) / denom;
        const double intercept = (swy - slope * swx) / sw;
        if (slope >= 0) {
            // no decay: infinite-T2 sentinel, flagged invalid
            maps.value[i] = std::numeric_limits<double>::infinity();
            maps.amplitude[i] = std::exp(intercept);
            continue;
        }
        maps.value[i] = -1.0 / slope;
        maps.amplitude[i] = std::exp(intercept);
        double rss = 0;
        int cnt = 0;
        for (size_t t = 0; t < series.size(); ++t) {
            const double v = series[t][i];
            if (v <= 0) continue;
            const double pred = maps.amplitude[i] * std::exp(-tes[t] / maps.value[i]);
            rss += (pred - v) * (pred - v);
            ++cnt;
        }
        maps.residual[i] = std::sqrt(rss / double(cnt));
        maps.valid[i] = 1;
    }
    return maps;
}

} // namespace cardiomm
