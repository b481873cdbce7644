#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cardiomm/core/errors.hpp"

namespace cardiomm {

// 8-bit binary PGM, values scaled to [lo, hi] (auto range when lo >= hi).
inline void write_pgm(const std::filesystem::path& path, const std::vector<double>& img, int ny,
                      int nx, double lo = 0.0, double hi = 0.0) {
    if (int64_t(img.size()) != int64_t(ny) * nx) throw ValidationError("write_pgm: size mismatch");
    if (lo >= hi) {
        lo = img.empty() ? 0.0 : *std::min_element(img.begin(), img.end());
        hi = img.empty() ? 1.0 : *std::max_element(img.begin(), img.end());
        if (hi <= lo) hi = lo + 1.0;
    }
    FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot write " + path.string());
    std::fprintf(f, "P5\n%d %d\n255\n", nx, ny);
    std::vector<unsigned char> row(static_cast<size_t>(nx));
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            const double v = (img[size_t(y) * nx + x] - lo) / (hi - lo);
            row[size_t(x)] = static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
        }
        std::fwrite(row.data(), 1, row.size(), f);
    }
    std::fclose(f);
}

} // namespace cardiomm
