#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>

#include "cardiomm/eval/metrics.hpp"
#include "cardiomm/phantom/phantom.hpp"
#include "cardiomm/recon/classic.hpp"

using namespace cardiomm;

namespace {

struct SmoothCase {
    KSpaceVolume<double> kspace;
    CoilSensitivities<double> sens;
    CImage<double> truth;
    std::vector<double> ref_mag;
};

// smooth multi-coil phantom acquisition with known maps, noiseless
SmoothCase smooth_case(int n, int coils, uint64_t seed) {
    PhantomSpec spec;
    spec.grid = n;
    spec.seed = seed;
    auto ph = make_phantom(spec);
    auto mag = modality_image(ph.frames[0], "cine");

    SmoothCase cs;
    cs.sens = simulate_coils(coils, n, n, seed);
    cs.truth = CImage<double>(n, n);
    Rng rng(derive_seed(seed, 9));
    const double p0 = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            cs.truth.at(y, x) = std::polar(mag[size_t(y) * n + x], p0 + 0.8 * (double(x) / n - 0.5));
    cs.kspace.data = coil_expand(cs.truth, cs.sens);
    fft2c_inplace(cs.kspace.data);
    cs.ref_mag = mag;
    return cs;
}

double rel_err(const std::vector<std::complex<double>>& a, const std::vector<std::complex<double>>& b) {
    double num = 0, den = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return std::sqrt(num / den);
}

std::vector<double> magnitude(const CImage<double>& img) {
    std::vector<double> m(img.v.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = std::abs(img.v[i]);
    return m;
}

} // namespace

TEST_CASE("estimate_sens_acs: single-coil data gives unit-magnitude maps on support") {
    auto cs = smooth_case(48, 1, 3);
    auto mask = gen_uniform(48, 48, 2.0, 16);
    auto ymask = apply_mask(cs.kspace, mask);
    auto est = estimate_sens_acs(ymask, mask);
    int on_support = 0;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            const double m = std::abs(est.maps.at(0, y, x));
            if (m > 0) {
                CHECK(m == doctest::Approx(1.0).epsilon(1e-9));
                ++on_support;
            }
        }
    CHECK(on_support > 100);
}

TEST_CASE("estimate_sens_acs recovers known smooth maps inside the object support") {
    auto cs = smooth_case(64, 4, 5);
    auto mask = gen_uniform(64, 64, 2.0, 24);
    auto ymask = apply_mask(cs.kspace, mask);
    auto est = estimate_sens_acs(ymask, mask);

    // compare up to a global per-pixel phase shared by all coils: project
    // estimated maps onto the truth and measure the residual inside the heart
    double num = 0, den = 0;
    const int n = 64;
    for (int y = n / 4; y < 3 * n / 4; ++y)
        for (int x = n / 4; x < 3 * n / 4; ++x) {
            if (cs.ref_mag[size_t(y) * n + x] < 0.3) continue;
            std::complex<double> corr = 0;
            double ee = 0, tt = 0;
            for (int c = 0; c < 4; ++c) {
                corr += est.maps.at(c, y, x) * std::conj(cs.sens.maps.at(c, y, x));
                ee += std::norm(est.maps.at(c, y, x));
                tt += std::norm(cs.sens.maps.at(c, y, x));
            }
            const double phase_aligned = std::abs(corr);
            num += ee + tt - 2 * phase_aligned;
            den += tt;
        }
    CHECK(std::sqrt(num / den) < 0.02);
}

TEST_CASE("estimate_sens_acs output satisfies the normalization invariant on support") {
    auto cs = smooth_case(48, 6, 11);
    auto mask = gen_random(48, 48, 3.0, 16, 2);
    auto est = estimate_sens_acs(apply_mask(cs.kspace, mask), mask);
    CHECK(est.normalization_error() < 1e-6);
}

TEST_CASE("estimate_sens_acs rejects an empty ACS") {
    auto cs = smooth_case(32, 2, 1);
    auto mask = gen_uniform(32, 32, 2.0, 0);
    CHECK_THROWS_AS(estimate_sens_acs(cs.kspace, mask), ValidationError);
}

TEST_CASE("estimate_sens_acs is invariant to a global phase on y") {
    auto cs = smooth_case(40, 3, 7);
    auto mask = gen_uniform(40, 40, 2.0, 16);
    auto ym = apply_mask(cs.kspace, mask);
    auto est0 = estimate_sens_acs(ym, mask);

    const std::complex<double> rot = std::polar(1.0, 1.1);
    auto rotated = ym;
    for (auto& z : rotated.data.v) z *= rot;
    auto est1 = estimate_sens_acs(rotated, mask);

    // maps acquire exactly that phase; dividing it out recovers est0
    double worst = 0;
    for (size_t i = 0; i < est0.maps.v.size(); ++i)
        worst = std::max(worst, std::abs(est1.maps.v[i] / rot - est0.maps.v[i]));
    CHECK(worst < 1e-10);
}

TEST_CASE("sense_cg with full mask and true maps recovers the ground truth") {
    auto cs = smooth_case(48, 4, 13);
    auto mask = gen_uniform(48, 48, 1.0, 0);
    CgConfig cfg;
    cfg.lambda_reg = 0.0;
    cfg.max_iters = 50;
    cfg.tol = 1e-12;
    auto res = sense_cg(cs.kspace, mask, cs.sens, cfg);
    CHECK(rel_err(res.image.v, cs.truth.v) < 1e-6);
}

TEST_CASE("sense_cg on zero data returns zero") {
    auto cs = smooth_case(32, 3, 17);
    KSpaceVolume<double> zero;
    zero.data = CStack<double>(3, 32, 32);
    auto mask = gen_uniform(32, 32, 2.0, 8);
    auto res = sense_cg(zero, mask, cs.sens);
    for (const auto& z : res.image.v) CHECK(std::abs(z) == 0.0);
}

TEST_CASE("sense_cg data residual decreases monotonically at 4x uniform") {
    auto cs = smooth_case(64, 4, 19);
    auto mask = gen_uniform(64, 64, 4.0, 16);
    auto ym = apply_mask(cs.kspace, mask);
    CgConfig cfg;
    cfg.lambda_reg = 0.0;
    cfg.max_iters = 15;
    cfg.tol = 1e-12;
    auto res = sense_cg(ym, mask, cs.sens, cfg);
    REQUIRE(res.data_residuals.size() > 5);
    for (size_t i = 1; i < res.data_residuals.size(); ++i)
        CHECK(res.data_residuals[i] <= res.data_residuals[i - 1] + 1e-12);
}

TEST_CASE("sense_cg output satisfies the normal equations within tolerance") {
    auto cs = smooth_case(48, 4, 23);
    auto mask = gen_uniform(48, 48, 3.0, 12);
    auto ym = apply_mask(cs.kspace, mask);
    CgConfig cfg;
    auto res = sense_cg(ym, mask, cs.sens, cfg);

    auto ax = forward_model(res.image, cs.sens, mask);
    auto lhs = adjoint_model(ax, cs.sens, mask);
    for (size_t i = 0; i < lhs.v.size(); ++i) lhs.v[i] += cfg.lambda_reg * res.image.v[i];
    auto b = adjoint_model(ym, cs.sens, mask);
    double num = 0, den = 0;
    for (size_t i = 0; i < b.v.size(); ++i) {
        num += std::norm(lhs.v[i] - b.v[i]);
        den += std::norm(b.v[i]);
    }
    CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("zero_filled: full mask inverts exactly, zero data stays zero") {
    auto cs = smooth_case(32, 3, 29);
    auto full = gen_uniform(32, 32, 1.0, 0);
    auto img = zero_filled(cs.kspace, full);
    auto expect = coil_expand(cs.truth, cs.sens);
    double worst = 0;
    for (size_t i = 0; i < img.v.size(); ++i) worst = std::max(worst, std::abs(img.v[i] - expect.v[i]));
    CHECK(worst < 1e-10);

    KSpaceVolume<double> zero;
    zero.data = CStack<double>(3, 32, 32);
    auto zf = zero_filled(zero, full);
    for (const auto& z : zf.v) CHECK(std::abs(z) == 0.0);
}

TEST_CASE("SENSE beats zero-filled PSNR at 8x uniform on a smooth phantom") {
    auto cs = smooth_case(64, 6, 31);
    auto mask = gen_uniform(64, 64, 8.0, 16);
    auto ym = apply_mask(cs.kspace, mask);

    auto zf_mag = sos(zero_filled(ym, mask));
    CgConfig cfg;
    auto sense = sense_cg(ym, mask, cs.sens, cfg);
    const double p_zf = psnr(cs.ref_mag, zf_mag);
    const double p_sense = psnr(cs.ref_mag, magnitude(sense.image));
    INFO("zero-filled " << p_zf << " dB vs SENSE " << p_sense << " dB");
    CHECK(p_sense > p_zf);
}

TEST_CASE("more samples never hurt SENSE on the smooth-phantom suite") {
    auto cs = smooth_case(64, 6, 37);
    double prev = -1e9;
    for (double af : {8.0, 4.0, 2.0}) {
        auto mask = gen_uniform(64, 64, af, 16);
        auto ym = apply_mask(cs.kspace, mask);
        auto res = sense_cg(ym, mask, cs.sens);
        const double p = psnr(cs.ref_mag, magnitude(res.image));
        CHECK(p >= prev);
        prev = p;
    }
}

TEST_CASE("CgConfig validation") {
    CgConfig bad;
    bad.max_iters = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = CgConfig{};
    bad.tol = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = CgConfig{};
    bad.lambda_reg = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}
