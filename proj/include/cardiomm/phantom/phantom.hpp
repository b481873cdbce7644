#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cardiomm/core/errors.hpp"
#include "cardiomm/core/rng.hpp"
#include "cardiomm/data/record.hpp"
#include "cardiomm/kspace/coil.hpp"
#include "cardiomm/kspace/types.hpp"

namespace cardiomm {

// Analytic short-axis cardiac phantom: torso ellipse, annular LV myocardium
// around a blood-filled cavity, an RV crescent, and an optional bright
// myocardial lesion. All length parameters are fractions of the grid size.
struct PhantomSpec {
    int grid = 64;
    int frames = 1;
    int cycle_frames = 0; // cardiac period in frames; 0 -> same as `frames`

    double center_y = 0.0, center_x = 0.03; // LV center offset from image center
    double lv_cavity_radius = 0.13;
    double myo_thickness = 0.07;
    double rv_radius = 0.09;
    double rv_gap = 0.015; // gap between LV epicardium and RV blood pool
    double torso_a = 0.46, torso_b = 0.40;
    double motion_amplitude = 0.25; // peak fractional contraction of the cavity

    double lesion_radius = 0.0; // 0 disables the lesion
    double lesion_angle = 0.8;  // radians, position along the mid-wall
    double texture = 0.3;       // relative amplitude of smooth intra-tissue texture
    int texture_bumps = 24;

    // tissue parameters (ms) and proton densities
    double t1_blood = 1600, t2_blood = 180, pd_blood = 1.0;
    double t1_myo = 1000, t2_myo = 45, pd_myo = 0.72;
    double t1_torso = 700, t2_torso = 70, pd_torso = 0.45;
    double t1_lesion = 1350, t2_lesion = 90, pd_lesion = 0.80;

    double heart_rate_bpm = 60.0;
    uint64_t seed = 0;

    void validate() const {
        if (grid < 16) throw ValidationError("PhantomSpec: grid too small");
        if (frames < 1) throw ValidationError("PhantomSpec: frames must be >= 1");
        if (myo_thickness <= 0) throw ValidationError("PhantomSpec: myo_thickness must be positive");
        for (auto [t1, t2] : {std::pair{t1_blood, t2_blood}, {t1_myo, t2_myo}, {t1_torso, t2_torso},
                              {t1_lesion, t2_lesion}})
            if (!(t1 > t2 && t2 > 0)) throw ValidationError("PhantomSpec: need T1 > T2 > 0 on tissue");
        const double r_epi = lv_cavity_radius + myo_thickness;
        if (std::abs(center_x) + r_epi > torso_a || std::abs(center_y) + r_epi > torso_b)
            throw ValidationError("PhantomSpec: cardiac structures exceed the torso ellipse");
        // the RV pool sits left of the LV (angle pi +- 0.3)
        const double rv_dist = r_epi + rv_gap + rv_radius;
        if (std::abs(center_x) + rv_dist + rv_radius > torso_a ||
            std::abs(center_y) + rv_dist * 0.35 + rv_radius > torso_b)
            throw ValidationError("PhantomSpec: cardiac structures exceed the torso ellipse");
        if (torso_a > 0.5 || torso_b > 0.5)
            throw ValidationError("PhantomSpec: torso ellipse exceeds the grid");
    }
};

struct PhantomFrame {
    int ny = 0, nx = 0;
    // smooth tissue weight maps in [0,1] (anti-aliased boundaries)
    std::vector<double> w_torso, w_myo, w_lv, w_rv, w_lesion;
    // binary masks
    std::vector<uint8_t> lv, rv, myo, torso, lesion;
    // blended parameter maps
    std::vector<double> t1, t2, pd;
    double cavity_radius_px = 0, epi_radius_px = 0;

    std::vector<double> proton_density() const { return pd; }
};

struct Phantom {
    PhantomSpec spec;
    std::vector<PhantomFrame> frames;
};

namespace detail {

// 1 inside (d<0), 0 outside, ~1px smooth transition
inline double edge(double signed_dist) {
    const double t = std::clamp(0.5 - signed_dist, 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

} // namespace detail

inline Phantom make_phantom(const PhantomSpec& spec) {
    spec.validate();
    Phantom ph;
    ph.spec = spec;
    const int n = spec.grid;
    const double g = double(n);
    const int cycle = spec.cycle_frames > 0 ? spec.cycle_frames : spec.frames;

    Rng rng(derive_seed(spec.seed, 0x70686eULL));
    const double rv_angle = fft::kPi + rng.uniform(-0.3, 0.3); // RV sits on the left

    // smooth multiplicative proton-density texture (sum of Gaussian bumps);
    // keeps mid-frequency k-space energy so undersampling actually aliases
    struct Bump {
        double y, x, sigma, amp;
    };
    std::vector<Bump> bumps;
    Rng trng(derive_seed(spec.seed, 0x746578ULL));
    for (int i = 0; i < spec.texture_bumps; ++i)
        bumps.push_back({trng.uniform(0.12, 0.88) * g, trng.uniform(0.12, 0.88) * g,
                         trng.uniform(0.02, 0.07) * g, trng.uniform(-1.0, 1.0) * spec.texture});
    auto texture_at = [&](double py, double px) {
        double t = 0;
        for (const auto& b : bumps) {
            const double d2 = ((py - b.y) * (py - b.y) + (px - b.x) * (px - b.x)) / (2 * b.sigma * b.sigma);
            if (d2 < 12.0) t += b.amp * std::exp(-d2);
        }
        return std::clamp(1.0 + t, 0.3, 1.8);
    };

    for (int f = 0; f < spec.frames; ++f) {
        const double phase = 2.0 * fft::kPi * double(f) / double(cycle);
        // systolic contraction: cavity shrinks, wall thickens to conserve area
        const double contraction = 0.5 * (1.0 - std::cos(phase)); // 0 at ED, 1 at ES
        const double r_cav = spec.lv_cavity_radius * g * (1.0 - spec.motion_amplitude * contraction);
        const double r_ed_cav = spec.lv_cavity_radius * g;
        const double r_ed_epi = (spec.lv_cavity_radius + spec.myo_thickness) * g;
        const double wall_area = r_ed_epi * r_ed_epi - r_ed_cav * r_ed_cav;
        const double r_epi = std::sqrt(r_cav * r_cav + wall_area);

        PhantomFrame fr;
        fr.ny = fr.nx = n;
        fr.cavity_radius_px = r_cav;
        fr.epi_radius_px = r_epi;
        const size_t npix = size_t(n) * n;
        for (auto* v : {&fr.w_torso, &fr.w_myo, &fr.w_lv, &fr.w_rv, &fr.w_lesion, &fr.t1, &fr.t2, &fr.pd})
            v->assign(npix, 0.0);
        for (auto* v : {&fr.lv, &fr.rv, &fr.myo, &fr.torso, &fr.lesion}) v->assign(npix, 0);

        const double cy = 0.5 * g + spec.center_y * g;
        const double cx = 0.5 * g + spec.center_x * g;
        const double rvy = cy + (r_epi + spec.rv_gap * g + spec.rv_radius * g) * std::sin(rv_angle);
        const double rvx = cx + (r_epi + spec.rv_gap * g + spec.rv_radius * g) * std::cos(rv_angle);
        const double les_r = spec.lesion_radius * g;
        const double les_mid = 0.5 * (r_cav + r_epi);
        const double lesy = cy + les_mid * std::sin(spec.lesion_angle);
        const double lesx = cx + les_mid * std::cos(spec.lesion_angle);

        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const size_t i = size_t(y) * n + x;
                const double py = y + 0.5, px = x + 0.5;
                const double ey = (py - 0.5 * g) / (spec.torso_b * g);
                const double ex = (px - 0.5 * g) / (spec.torso_a * g);
                const double d_torso = (std::sqrt(ex * ex + ey * ey) - 1.0) * std::min(spec.torso_a, spec.torso_b) * g;
                const double r_lv = std::hypot(py - cy, px - cx);
                const double d_cav = r_lv - r_cav;
                const double d_epi = r_lv - r_epi;
                const double d_rv = std::hypot(py - rvy, px - rvx) - spec.rv_radius * g;

                const double in_torso = detail::edge(d_torso);
                const double in_cav = detail::edge(d_cav);
                const double in_epi = detail::edge(d_epi);
                double in_rv = detail::edge(d_rv) * (1.0 - in_epi);
                const double in_myo = in_epi * (1.0 - in_cav);
                double in_les = 0.0;
                if (les_r > 0) in_les = detail::edge(std::hypot(py - lesy, px - lesx) - les_r) * in_myo;

                fr.w_lv[i] = in_cav;
                fr.w_myo[i] = in_myo - in_les;
                fr.w_lesion[i] = in_les;
                fr.w_rv[i] = in_rv;
                fr.w_torso[i] = in_torso * (1.0 - in_epi) * (1.0 - in_rv);

                fr.lv[i] = d_cav < 0;
                fr.myo[i] = (d_epi < 0 && d_cav >= 0);
                fr.rv[i] = (d_rv < 0 && d_epi >= 0 && d_torso < 0);
                fr.torso[i] = d_torso < 0;
                fr.lesion[i] = (les_r > 0) && fr.myo[i] &&
                               std::hypot(py - lesy, px - lesx) - les_r < 0;

                fr.t1[i] = fr.w_lv[i] * spec.t1_blood + fr.w_rv[i] * spec.t1_blood +
                           fr.w_myo[i] * spec.t1_myo + fr.w_lesion[i] * spec.t1_lesion +
                           fr.w_torso[i] * spec.t1_torso;
                fr.t2[i] = fr.w_lv[i] * spec.t2_blood + fr.w_rv[i] * spec.t2_blood +
                           fr.w_myo[i] * spec.t2_myo + fr.w_lesion[i] * spec.t2_lesion +
                           fr.w_torso[i] * spec.t2_torso;
                fr.pd[i] = (fr.w_lv[i] * spec.pd_blood + fr.w_rv[i] * spec.pd_blood +
                            fr.w_myo[i] * spec.pd_myo + fr.w_lesion[i] * spec.pd_lesion +
                            fr.w_torso[i] * spec.pd_torso) *
                           texture_at(py, px);
            }
        ph.frames.push_back(std::move(fr));
    }
    return ph;
}

// Per-modality magnitude image from the tissue weights.
inline std::vector<double> modality_image(const PhantomFrame& fr, const std::string& modality) {
    const size_t n = fr.pd.size();
    std::vector<double> img(n, 0.0);
    if (modality == "lge") {
        // gadolinium contrast: nulled myocardium, bright blood and lesion
        for (size_t i = 0; i < n; ++i)
            img[i] = 0.9 * (fr.w_lv[i] + fr.w_rv[i]) + 0.18 * fr.w_myo[i] + 1.0 * fr.w_lesion[i] +
                     0.35 * fr.w_torso[i];
    } else {
        for (size_t i = 0; i < n; ++i) img[i] = fr.pd[i];
    }
    return img;
}

// Smooth complex coil maps: quadratic polynomial magnitude falloff around
// coil centers ringing the torso, slowly varying phase, normalized so the
// stacked maps are an isometry everywhere.
inline CoilSensitivities<double> simulate_coils(int n_coils, int ny, int nx, uint64_t seed) {
    if (n_coils < 1) throw ValidationError("simulate_coils: need at least one coil");
    CoilSensitivities<double> sens;
    sens.maps = CStack<double>(n_coils, ny, nx);
    Rng rng(derive_seed(seed, 0x636f696cULL));
    const double R = 0.85 * std::max(ny, nx);
    for (int c = 0; c < n_coils; ++c) {
        const double ang = 2.0 * fft::kPi * (double(c) + rng.uniform(-0.15, 0.15)) / double(n_coils);
        const double cy = 0.5 * ny + 0.62 * ny * std::sin(ang);
        const double cx = 0.5 * nx + 0.62 * nx * std::cos(ang);
        const double p0 = rng.uniform(-fft::kPi, fft::kPi);
        const double ky = rng.uniform(-1.5, 1.5), kx = rng.uniform(-1.5, 1.5);
        const double q = rng.uniform(-0.8, 0.8);
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const double d2 = (std::pow((y - cy) / R, 2) + std::pow((x - cx) / R, 2));
                const double mag = std::max(0.05, 1.0 - d2); // clipped quadratic
                const double u = double(y) / ny - 0.5, v = double(x) / nx - 0.5;
                const double phase = p0 + ky * u + kx * v + q * (u * u - v * v);
                sens.maps.at(c, y, x) = std::polar(mag, phase);
            }
    }
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            double s = 0;
            for (int c = 0; c < n_coils; ++c) s += std::norm(sens.maps.at(c, y, x));
            s = std::sqrt(s);
            for (int c = 0; c < n_coils; ++c) sens.maps.at(c, y, x) /= s;
        }
    return sens;
}

// Physics-informed k-space synthesis: attach a smooth synthetic phase to the
// magnitude image, modulate by simulated coil maps, Fourier transform, and
// add complex Gaussian noise. `snr` is the amplitude ratio of the RMS signal
// over the object support to the RMS noise of the combined SoS image, so the
// delivered noise level does not depend on the coil count (per-coil k-space
// noise variance is (rms/snr)^2 / n_coils).
inline ScanRecord synthesize_kspace(const std::vector<double>& magnitude, int ny, int nx,
                                    int n_coils, double snr, uint64_t seed) {
    if (int64_t(magnitude.size()) != int64_t(ny) * nx)
        throw ValidationError("synthesize_kspace: magnitude size does not match grid");
    if (snr <= 0) throw ValidationError("synthesize_kspace: snr must be positive");
    double peak = 0;
    for (double v : magnitude) {
        if (v < 0) throw ValidationError("synthesize_kspace: magnitude must be nonnegative");
        peak = std::max(peak, v);
    }

    Rng rng(derive_seed(seed, 0x73796eULL));
    const double p0 = rng.uniform(-fft::kPi, fft::kPi);
    const double ky = rng.uniform(-2.0, 2.0), kx = rng.uniform(-2.0, 2.0);
    const double q = rng.uniform(-1.0, 1.0);

    CImage<double> img(ny, nx);
    double signal_power = 0;
    int64_t support = 0;
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            const double u = double(y) / ny - 0.5, v = double(x) / nx - 0.5;
            const double m = magnitude[size_t(y) * nx + x];
            img.at(y, x) = std::polar(m, p0 + ky * u + kx * v + q * u * v);
            if (m > 1e-6 * peak) {
                signal_power += m * m;
                ++support;
            }
        }
    if (support > 0) signal_power /= double(support);

    ScanRecord rec;
    rec.sens = simulate_coils(n_coils, ny, nx, derive_seed(seed, 1));
    rec.kspace.data = coil_expand(img, rec.sens);
    fft2c_inplace(rec.kspace.data);

    if (std::isfinite(snr) && support > 0) {
        // combined-image noise rms = signal rms / snr; split across coils
        const double sigma = std::sqrt(signal_power) / (snr * std::sqrt(double(n_coils)));
        const double s = sigma / std::sqrt(2.0);
        for (auto& z : rec.kspace.data.v) z += std::complex<double>(s * rng.normal(), s * rng.normal());
    }

    auto recon = rec.kspace.data;
    ifft2c_inplace(recon);
    rec.reference = sos(recon);
    return rec;
}

// T1: 3-parameter inversion-recovery magnitude signal |A - B exp(-TI/T1)|
// with A = PD and B = 2A. T2: mono-exponential PD exp(-TE/T2).
inline std::vector<std::vector<double>> simulate_weighted_series(const PhantomFrame& fr,
                                                                 const std::string& modality,
                                                                 const std::vector<double>& timings_ms) {
    for (size_t i = 1; i < timings_ms.size(); ++i)
        if (timings_ms[i] < timings_ms[i - 1])
            throw ValidationError("simulate_weighted_series: timings must be sorted ascending");
    const bool t1w = modality == "t1map";
    if (!t1w && modality != "t2map")
        throw ValidationError("simulate_weighted_series: modality must be t1map or t2map");

    std::vector<std::vector<double>> out;
    for (double t : timings_ms) {
        std::vector<double> img(fr.pd.size(), 0.0);
        for (size_t i = 0; i < img.size(); ++i) {
            if (fr.pd[i] <= 0) continue;
            if (t1w) {
                if (fr.t1[i] <= 0) continue;
                img[i] = std::abs(fr.pd[i] * (1.0 - 2.0 * std::exp(-t / fr.t1[i])));
            } else {
                if (fr.t2[i] <= 0) continue;
                img[i] = fr.pd[i] * std::exp(-t / fr.t2[i]);
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

} // namespace cardiomm
