#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "cardiomm/core/errors.hpp"
#include "cardiomm/kspace/fft.hpp"

namespace cardiomm {

// FWHM lesion quantification: enhanced fraction of the myocardium, where
// enhanced means at or above half the maximum intensity inside the mask.
inline double fwhm_lge_mass(const std::vector<double>& lge, const std::vector<uint8_t>& myo_mask) {
    if (lge.size() != myo_mask.size()) throw ValidationError("fwhm_lge_mass: shape mismatch");
    double peak = -std::numeric_limits<double>::infinity();
    int64_t total = 0;
    for (size_t i = 0; i < lge.size(); ++i)
        if (myo_mask[i]) {
            peak = std::max(peak, lge[i]);
            ++total;
        }
    if (total == 0) throw ValidationError("fwhm_lge_mass: empty myocardium mask");
    const double thresh = 0.5 * peak;
    int64_t enhanced = 0;
    for (size_t i = 0; i < lge.size(); ++i)
        if (myo_mask[i] && lge[i] >= thresh) ++enhanced;
    return 100.0 * double(enhanced) / double(total);
}

// One cine frame of segmentation masks; multi-slice stacks are concatenated
// along the first dimension as [nslices, ny, nx].
struct SegFrame {
    int ny = 0, nx = 0, nslices = 1;
    std::vector<uint8_t> lv, rv, myo;

    size_t pixels() const { return size_t(nslices) * ny * nx; }
    void check() const {
        if (lv.size() != pixels() || rv.size() != pixels() || myo.size() != pixels())
            throw ValidationError("SegFrame: mask sizes do not match the geometry");
    }
};

struct PhenotypeReport {
    double lvedv = 0, lvesv = 0, lvsv = 0, lvco = 0, lvm = 0, lvef = 0; // mL, mL, mL, L/min, g, %
    double rvedv = 0, rvesv = 0, rvsv = 0, rvef = 0;                    // mL, mL, mL, %
    int ed_frame = 0, es_frame = 0;
};

// Biventricular volumetric indices from per-frame masks. Volumes are voxel
// counts times voxel volume; ED/ES frames are the LV volume extrema with
// ties broken toward the earlier frame; LV mass uses 1.05 g/mL at ED.
inline PhenotypeReport phenotypes(const std::vector<SegFrame>& frames, double spacing_y_mm,
                                  double spacing_x_mm, double slice_thickness_mm,
                                  double heart_rate_bpm) {
    if (frames.empty()) throw ValidationError("phenotypes: no frames");
    const double voxel_ml = spacing_y_mm * spacing_x_mm * slice_thickness_mm / 1000.0;

    auto volume = [&](const std::vector<uint8_t>& m) {
        int64_t c = 0;
        for (auto v : m) c += v;
        return double(c) * voxel_ml;
    };

    std::vector<double> lv_vol, rv_vol, myo_vol;
    for (size_t f = 0; f < frames.size(); ++f) {
        frames[f].check();
        const double v = volume(frames[f].lv);
        if (v <= 0)
            throw ValidationError("phenotypes: empty LV mask at frame " + std::to_string(f));
        lv_vol.push_back(v);
        rv_vol.push_back(volume(frames[f].rv));
        myo_vol.push_back(volume(frames[f].myo));
    }

    PhenotypeReport r;
    for (size_t f = 1; f < lv_vol.size(); ++f) {
        if (lv_vol[f] > lv_vol[size_t(r.ed_frame)]) r.ed_frame = int(f);
        if (lv_vol[f] < lv_vol[size_t(r.es_frame)]) r.es_frame = int(f);
    }
    r.lvedv = lv_vol[size_t(r.ed_frame)];
    r.lvesv = lv_vol[size_t(r.es_frame)];
    r.lvsv = r.lvedv - r.lvesv;
    r.lvef = 100.0 * r.lvsv / r.lvedv;
    r.lvco = r.lvsv * heart_rate_bpm / 1000.0;
    r.lvm = myo_vol[size_t(r.ed_frame)] * 1.05;
    r.rvedv = rv_vol[size_t(r.ed_frame)];
    r.rvesv = rv_vol[size_t(r.es_frame)];
    r.rvsv = r.rvedv - r.rvesv;
    r.rvef = r.rvedv > 0 ? 100.0 * r.rvsv / r.rvedv : 0.0;
    return r;
}

// Left-ventricular maximum wall thickness over the 16 AHA segments plus a
// global segment (index 16). Slices split evenly into basal/mid/apical
// thirds mapping to 6/6/4 angular sectors anchored at the caller-supplied
// anterior RV insertion angle. Rays without a wall crossing leave their
// segment flagged as NaN.
inline std::array<double, 17> lvmwt_aha(const SegFrame& stack, double spacing_mm,
                                        double rv_insertion_angle) {
    stack.check();
    std::array<double, 17> seg;
    seg.fill(std::numeric_limits<double>::quiet_NaN());

    for (int s = 0; s < stack.nslices; ++s) {
        const int zone = stack.nslices >= 3 ? std::min(2, s * 3 / stack.nslices) : std::min(2, s);
        const int nseg = zone == 2 ? 4 : 6;
        const int base = zone == 0 ? 0 : (zone == 1 ? 6 : 12);
        const size_t off = size_t(s) * stack.ny * stack.nx;

        // centroid of the cavity (fallback: myocardium), in pixel-center coords
        double cy = 0, cx = 0;
        int64_t cnt = 0;
        const auto& cav = stack.lv;
        for (int y = 0; y < stack.ny; ++y)
            for (int x = 0; x < stack.nx; ++x)
                if (cav[off + size_t(y) * stack.nx + x]) {
                    cy += y + 0.5;
                    cx += x + 0.5;
                    ++cnt;
                }
        if (cnt == 0) {
            for (int y = 0; y < stack.ny; ++y)
                for (int x = 0; x < stack.nx; ++x)
                    if (stack.myo[off + size_t(y) * stack.nx + x]) {
                        cy += y + 0.5;
                        cx += x + 0.5;
                        ++cnt;
                    }
            if (cnt == 0) continue;
        }
        cy /= double(cnt);
        cx /= double(cnt);

        // bilinear sampling of the binary mask; the 0.5-level set tracks the
        // wall boundary with sub-pixel accuracy
        auto sample = [&](double py, double px) {
            const double u = py - 0.5, v = px - 0.5;
            const int y0 = std::clamp(int(std::floor(u)), 0, stack.ny - 1);
            const int x0 = std::clamp(int(std::floor(v)), 0, stack.nx - 1);
            const int y1 = std::min(y0 + 1, stack.ny - 1);
            const int x1 = std::min(x0 + 1, stack.nx - 1);
            const double fy = std::clamp(u - y0, 0.0, 1.0), fx = std::clamp(v - x0, 0.0, 1.0);
            auto at = [&](int yy, int xx) {
                return double(stack.myo[off + size_t(yy) * stack.nx + xx]);
            };
            return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                   fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
        };

        const double rmax = std::hypot(double(stack.ny), double(stack.nx));
        const double step = 0.1;
        for (int deg = 0; deg < 360; ++deg) {
            const double ang = deg * fft::kPi / 180.0;
            const double dy = std::sin(ang), dx = std::cos(ang);
            double entry = -1, exit = -1;
            double prev = sample(cy, cx);
            for (double rr = step; rr < rmax; rr += step) {
                const double cur = sample(cy + rr * dy, cx + rr * dx);
                if (prev < 0.5 && cur >= 0.5 && entry < 0)
                    entry = rr - step + step * (0.5 - prev) / (cur - prev);
                if (prev >= 0.5 && cur < 0.5 && entry >= 0)
                    exit = rr - step + step * (prev - 0.5) / (prev - cur);
                prev = cur;
            }
            if (entry < 0 || exit < 0) continue; // no wall crossing on this ray
            const double thickness = (exit - entry) * spacing_mm;
            double rel = ang - rv_insertion_angle;
            rel = std::fmod(std::fmod(rel, 2 * fft::kPi) + 2 * fft::kPi, 2 * fft::kPi);
            const int idx = base + std::min(nseg - 1, int(rel / (2 * fft::kPi / nseg)));
            if (std::isnan(seg[size_t(idx)]) || thickness > seg[size_t(idx)])
                seg[size_t(idx)] = thickness;
        }
    }

    double global = std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i < 16; ++i)
        if (!std::isnan(seg[size_t(i)]) && (std::isnan(global) || seg[size_t(i)] > global))
            global = seg[size_t(i)];
    seg[16] = global;
    return seg;
}

} // namespace cardiomm
