#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cardiomm/core/errors.hpp"
#include "cardiomm/core/rng.hpp"
#include "cardiomm/kspace/types.hpp"

namespace cardiomm {

enum class MaskPattern { Uniform, Random, Radial };

inline const char* pattern_name(MaskPattern p) {
    switch (p) {
        case MaskPattern::Uniform: return "uniform";
        case MaskPattern::Random: return "random";
        case MaskPattern::Radial: return "radial";
    }
    return "?";
}

inline MaskPattern pattern_from_name(const std::string& s) {
    if (s == "uniform") return MaskPattern::Uniform;
    if (s == "random") return MaskPattern::Random;
    if (s == "radial") return MaskPattern::Radial;
    throw ValidationError("unknown undersampling pattern: " + s);
}

// Binary acquisition mask. The ACS region (centered lines or centered block)
// is always fully sampled and is excluded from acceleration accounting.
struct UndersamplingMask {
    int ny = 0, nx = 0;
    std::vector<uint8_t> grid; // [ny*nx], entries 0/1
    MaskPattern pattern = MaskPattern::Uniform;
    double nominal_af = 1.0;
    bool acs_is_block = false;
    int acs_h = 0; // line count, or block height
    int acs_w = 0; // block width (unused for line ACS)
    uint64_t seed = 0;

    uint8_t& at(int y, int x) { return grid[size_t(y) * nx + x]; }
    uint8_t at(int y, int x) const { return grid[size_t(y) * nx + x]; }

    bool in_acs(int y, int x) const {
        if (acs_h <= 0) return false;
        const int y0 = (ny - acs_h) / 2;
        if (y < y0 || y >= y0 + acs_h) return false;
        if (!acs_is_block) return true;
        const int x0 = (nx - acs_w) / 2;
        return x >= x0 && x < x0 + acs_w;
    }

    void fill_acs() {
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                if (in_acs(y, x)) at(y, x) = 1;
    }
};

// AF per the acquired-points definition: fully sampled count over acquired
// count, excluding the autocalibration region.
inline double effective_af(const UndersamplingMask& m) {
    int64_t acquired = 0;
    for (int y = 0; y < m.ny; ++y)
        for (int x = 0; x < m.nx; ++x)
            if (m.at(y, x) && !m.in_acs(y, x)) ++acquired;
    if (acquired == 0)
        throw NumericalError("effective_af: no acquired points outside the ACS region");
    return double(m.ny) * double(m.nx) / double(acquired);
}

// Uniform (equispaced) phase-encode undersampling: round(ny/af) full ky lines
// spread evenly over the non-ACS lines, so the effective AF equals
// ny / line-count exactly. `offset` rotates the line placement.
inline UndersamplingMask gen_uniform(int ny, int nx, double af, int acs_lines, int offset = 0) {
    if (af < 1.0) throw ValidationError("gen_uniform: af must be >= 1");
    if (acs_lines < 0 || acs_lines > ny) throw ValidationError("gen_uniform: acs_lines out of range");
    UndersamplingMask m;
    m.ny = ny;
    m.nx = nx;
    m.grid.assign(size_t(ny) * nx, 0);
    m.pattern = MaskPattern::Uniform;
    m.nominal_af = af;
    m.acs_h = acs_lines;
    m.fill_acs();

    const int64_t target = int64_t(std::llround(double(ny) / af));
    if (target < 1) throw ValidationError("gen_uniform: af too high, fewer than one sampled line");

    std::vector<int> free_lines;
    for (int y = 0; y < ny; ++y)
        if (!m.in_acs(y, 0)) free_lines.push_back(y);
    const int64_t nfree = int64_t(free_lines.size());
    if (target >= nfree) {
        std::fill(m.grid.begin(), m.grid.end(), 1);
        return m;
    }
    for (int64_t i = 0; i < target; ++i) {
        const int64_t pos = (i * nfree / target + offset) % nfree;
        const int y = free_lines[size_t(pos)];
        for (int x = 0; x < nx; ++x) m.at(y, x) = 1;
    }
    return m;
}

// Variable-density random line undersampling. ky lines are drawn without
// replacement from a center-weighted Gaussian (sigma = ny/6) over the non-ACS
// lines until the acquired-point budget round(ny*nx/af) is met; the remainder
// of the budget is spent as a partial line (random kx subset) so the
// effective AF tracks the nominal value to within one sample.
inline UndersamplingMask gen_random(int ny, int nx, double af, int acs_lines, uint64_t seed) {
    if (af < 1.0) throw ValidationError("gen_random: af must be >= 1");
    if (acs_lines < 0 || acs_lines > ny) throw ValidationError("gen_random: acs_lines out of range");
    UndersamplingMask m;
    m.ny = ny;
    m.nx = nx;
    m.grid.assign(size_t(ny) * nx, 0);
    m.pattern = MaskPattern::Random;
    m.nominal_af = af;
    m.acs_h = acs_lines;
    m.seed = seed;
    m.fill_acs();

    const int64_t budget = int64_t(std::llround(double(ny) * double(nx) / af));
    if (budget < 1) throw ValidationError("gen_random: af too high, empty sampling budget");
    int64_t full_lines = budget / nx;
    const int64_t partial = budget % nx;

    std::vector<int> free_lines;
    for (int y = 0; y < ny; ++y)
        if (!m.in_acs(y, 0)) free_lines.push_back(y);
    if (full_lines + (partial ? 1 : 0) >= int64_t(free_lines.size())) {
        std::fill(m.grid.begin(), m.grid.end(), 1);
        return m;
    }

    const double center = 0.5 * (ny - 1);
    const double sigma = double(ny) / 6.0;
    std::vector<double> weight(free_lines.size());
    double wsum = 0.0;
    for (size_t i = 0; i < free_lines.size(); ++i) {
        const double d = (free_lines[i] - center) / sigma;
        weight[i] = std::exp(-0.5 * d * d);
        wsum += weight[i];
    }

    Rng rng(derive_seed(seed, 0x6d61736bULL));
    std::vector<uint8_t> taken(free_lines.size(), 0);
    auto draw_line = [&]() -> size_t {
        for (;;) {
            double u = rng.uniform() * wsum;
            size_t i = 0;
            for (; i + 1 < weight.size(); ++i) {
                if (u < weight[i]) break;
                u -= weight[i];
            }
            if (!taken[i]) {
                taken[i] = 1;
                return i;
            }
        }
    };

    for (int64_t l = 0; l < full_lines; ++l) {
        const int y = free_lines[draw_line()];
        for (int x = 0; x < nx; ++x) m.at(y, x) = 1;
    }
    if (partial > 0) {
        const int y = free_lines[draw_line()];
        std::vector<int> cols(nx);
        for (int x = 0; x < nx; ++x) cols[x] = x;
        for (int64_t j = 0; j < partial; ++j) {
            const size_t pick = j + rng.below(uint64_t(nx - j));
            std::swap(cols[size_t(j)], cols[pick]);
            m.at(y, cols[size_t(j)]) = 1;
        }
    }
    return m;
}

// Golden-angle radial spokes rasterized onto the Cartesian grid with
// nearest-neighbor assignment, union with a centered fully sampled block.
// Spokes span the grid diagonal so corner coverage offsets the center
// overlap; the spoke count targets the acquired-point budget ny*nx/af and
// the realized AF is always recomputed from the grid.
inline UndersamplingMask gen_radial(int ny, int nx, double af, int acs_block_h, int acs_block_w) {
    if (af < 1.0) throw ValidationError("gen_radial: af must be >= 1");
    UndersamplingMask m;
    m.ny = ny;
    m.nx = nx;
    m.grid.assign(size_t(ny) * nx, 0);
    m.pattern = MaskPattern::Radial;
    m.nominal_af = af;
    m.acs_is_block = true;
    m.acs_h = acs_block_h;
    m.acs_w = acs_block_w;
    m.fill_acs();

    const double budget = double(ny) * double(nx) / af;
    if (std::llround(budget / double(std::max(ny, nx))) < 1)
        throw ValidationError("gen_radial: af too high, zero spokes");

    const double golden = 111.246117975 * fft::kPi / 180.0;
    const double cy = ny / 2.0, cx = nx / 2.0;
    const double radius = 0.5 * std::hypot(double(ny), double(nx));
    int64_t acquired = 0;
    const int64_t max_spokes = 8LL * std::max(ny, nx);
    for (int64_t t = 0; t < max_spokes; ++t) {
        const double ang = double(t) * golden;
        const double dy = std::sin(ang), dx = std::cos(ang);
        std::vector<int64_t> fresh;
        for (double s = -radius; s <= radius; s += 0.5) {
            const int y = int(std::lround(cy + s * dy));
            const int x = int(std::lround(cx + s * dx));
            if (y < 0 || y >= ny || x < 0 || x >= nx) continue;
            if (!m.at(y, x) && !m.in_acs(y, x)) {
                m.at(y, x) = 1;
                fresh.push_back(int64_t(y) * nx + x);
            }
        }
        const int64_t next = acquired + int64_t(fresh.size());
        if (next >= int64_t(std::llround(budget))) {
            // keep or revert the overshooting spoke, whichever lands closer
            if (std::abs(double(next) - budget) <= std::abs(double(acquired) - budget)) acquired = next;
            else
                for (int64_t idx : fresh) m.grid[size_t(idx)] = 0;
            break;
        }
        acquired = next;
    }
    m.fill_acs();
    return m;
}

// Elementwise mask application, broadcast over coils.
template <typename T>
KSpaceVolume<T> apply_mask(const KSpaceVolume<T>& ks, const UndersamplingMask& m) {
    if (ks.data.ny != m.ny || ks.data.nx != m.nx)
        throw ValidationError("apply_mask: k-space/mask shape mismatch");
    KSpaceVolume<T> out = ks;
    for (int c = 0; c < out.data.coils; ++c)
        for (int y = 0; y < m.ny; ++y)
            for (int x = 0; x < m.nx; ++x)
                if (!m.at(y, x)) out.data.at(c, y, x) = {0, 0};
    return out;
}

// Canonical description string for the undersampling text channel.
inline std::string compose_undersampling_text(MaskPattern pattern, double af) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "pattern %s; af %gx", pattern_name(pattern), af);
    return buf;
}

} // namespace cardiomm
