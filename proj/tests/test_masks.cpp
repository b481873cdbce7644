#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cardiomm/core/rng.hpp"
#include "cardiomm/kspace/types.hpp"
#include "cardiomm/sampling/mask.hpp"

using namespace cardiomm;

namespace {

int64_t count_non_acs(const UndersamplingMask& m) {
    int64_t n = 0;
    for (int y = 0; y < m.ny; ++y)
        for (int x = 0; x < m.nx; ++x)
            if (m.at(y, x) && !m.in_acs(y, x)) ++n;
    return n;
}

bool all_ones(const UndersamplingMask& m) {
    for (auto v : m.grid)
        if (!v) return false;
    return true;
}

} // namespace

TEST_CASE("uniform mask reproduces the AF accounting exactly: ny=240 af=8 acs=20") {
    auto m = gen_uniform(240, 200, 8.0, 20);
    CHECK(count_non_acs(m) == 30 * 200); // 30 full non-ACS lines
    CHECK(effective_af(m) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("uniform mask: af=1 and acs=ny both saturate to all-ones") {
    CHECK(all_ones(gen_uniform(64, 48, 1.0, 8)));
    CHECK(all_ones(gen_uniform(64, 48, 12.0, 64)));
}

TEST_CASE("uniform effective AF is ny over the line count exactly") {
    for (int ny : {240, 256, 250})
        for (double af : {2.0, 4.0, 6.0, 8.0}) {
            auto m = gen_uniform(ny, 64, af, 20);
            const int64_t lines = count_non_acs(m) / 64;
            CHECK(count_non_acs(m) == lines * 64);
            CHECK(effective_af(m) == doctest::Approx(double(ny) / double(lines)).epsilon(1e-12));
        }
}

TEST_CASE("uniform offset rotates the pattern but keeps the count") {
    auto a = gen_uniform(128, 32, 4.0, 12, 0);
    auto b = gen_uniform(128, 32, 4.0, 12, 1);
    CHECK(count_non_acs(a) == count_non_acs(b));
    CHECK(a.grid != b.grid);
}

TEST_CASE("random mask is deterministic per seed and differs across seeds") {
    auto a = gen_random(256, 64, 8.0, 20, 1234);
    auto b = gen_random(256, 64, 8.0, 20, 1234);
    CHECK(a.grid == b.grid);

    int differing = 0;
    for (uint64_t s = 0; s < 10; ++s) {
        auto u = gen_random(256, 64, 8.0, 20, derive_seed(s, 1));
        auto v = gen_random(256, 64, 8.0, 20, derive_seed(s, 2));
        if (u.grid != v.grid) ++differing;
    }
    CHECK(differing == 10);
}

TEST_CASE("random effective AF within 2% of nominal for ny=256, af in {4,8,16,24}") {
    for (double af : {4.0, 8.0, 16.0, 24.0}) {
        auto m = gen_random(256, 246, af, 20, 99);
        const double eff = effective_af(m);
        CHECK(std::abs(eff - af) / af < 0.02);
    }
}

TEST_CASE("random mask ACS region is fully sampled") {
    auto m = gen_random(128, 96, 6.0, 16, 7);
    for (int y = (128 - 16) / 2; y < (128 + 16) / 2; ++y)
        for (int x = 0; x < 96; ++x) CHECK(m.at(y, x) == 1);
}

TEST_CASE("radial effective AF within 10% of nominal for 256x246, af in {8,16,24}") {
    for (double af : {8.0, 16.0, 24.0}) {
        auto m = gen_radial(256, 246, af, 20, 20);
        const double eff = effective_af(m);
        INFO("af " << af << " -> effective " << eff);
        CHECK(std::abs(eff - af) / af < 0.10);
    }
}

TEST_CASE("radial: the 20x20 ACS block is fully sampled") {
    auto m = gen_radial(256, 246, 16.0, 20, 20);
    const int y0 = (256 - 20) / 2, x0 = (246 - 20) / 2;
    for (int y = y0; y < y0 + 20; ++y)
        for (int x = x0; x < x0 + 20; ++x) CHECK(m.at(y, x) == 1);
}

TEST_CASE("radial: density approaches one near the center for large spoke counts") {
    auto m = gen_radial(128, 128, 1.02, 0, 0); // near-full budget -> many spokes
    int64_t hits = 0, total = 0;
    for (int y = 56; y < 72; ++y)
        for (int x = 56; x < 72; ++x) {
            ++total;
            hits += m.at(y, x);
        }
    CHECK(double(hits) / double(total) > 0.95);
}

TEST_CASE("radial with absurd AF errors out at zero spokes") {
    CHECK_THROWS_AS(gen_radial(16, 16, 400.0, 4, 4), ValidationError);
}

TEST_CASE("effective_af: full mask with zero ACS is 1, only-ACS mask errors") {
    auto full = gen_uniform(32, 16, 1.0, 0);
    CHECK(effective_af(full) == doctest::Approx(1.0));

    UndersamplingMask only_acs;
    only_acs.ny = 32;
    only_acs.nx = 16;
    only_acs.grid.assign(32 * 16, 0);
    only_acs.acs_h = 8;
    only_acs.fill_acs();
    CHECK_THROWS_AS(effective_af(only_acs), NumericalError);
}

TEST_CASE("apply_mask: full mask is identity, zero mask zeroes, support matches") {
    KSpaceVolume<double> ks;
    ks.data = CStack<double>(2, 16, 12);
    Rng rng(5);
    for (auto& z : ks.data.v) z = {rng.normal(), rng.normal()};

    auto full = gen_uniform(16, 12, 1.0, 0);
    auto same = apply_mask(ks, full);
    CHECK(same.data.v == ks.data.v);

    UndersamplingMask zero;
    zero.ny = 16;
    zero.nx = 12;
    zero.grid.assign(16 * 12, 0);
    auto gone = apply_mask(ks, zero);
    for (const auto& z : gone.data.v) CHECK(std::abs(z) == 0.0);

    auto rnd = gen_random(16, 12, 2.0, 4, 3);
    auto masked = apply_mask(ks, rnd);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 12; ++x) {
                if (rnd.at(y, x))
                    CHECK(masked.data.at(c, y, x) == ks.data.at(c, y, x));
                else
                    CHECK(std::abs(masked.data.at(c, y, x)) == 0.0);
            }

    KSpaceVolume<double> wrong;
    wrong.data = CStack<double>(1, 8, 8);
    CHECK_THROWS_AS(apply_mask(wrong, full), ValidationError);
}

TEST_CASE("mask generation is deterministic in all parameters") {
    auto a = gen_radial(100, 90, 12.0, 16, 16);
    auto b = gen_radial(100, 90, 12.0, 16, 16);
    CHECK(a.grid == b.grid);
}

TEST_CASE("undersampling text canonicalization is injective over the supported grid") {
    std::vector<std::string> seen;
    for (auto p : {MaskPattern::Uniform, MaskPattern::Random, MaskPattern::Radial})
        for (double af : {4.0, 8.0, 16.0, 24.0}) {
            auto s = compose_undersampling_text(p, af);
            CHECK(std::find(seen.begin(), seen.end(), s) == seen.end());
            seen.push_back(s);
        }
    CHECK(compose_undersampling_text(MaskPattern::Uniform, 8.0) == "pattern uniform; af 8x");
}
