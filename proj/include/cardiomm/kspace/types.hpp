#pragma once

#include <complex>
#include <string>
#include <vector>
#include <cmath>

#include "cardiomm/core/errors.hpp"
#include "cardiomm/kspace/fft.hpp"

namespace cardiomm {

// Coil-combined complex image, row-major [ny, nx].
template <typename T = double>
struct CImage {
    int ny = 0, nx = 0;
    std::vector<std::complex<T>> v;

    CImage() = default;
    CImage(int ny_, int nx_) : ny(ny_), nx(nx_), v(size_t(ny_) * nx_) {}
    std::complex<T>& at(int y, int x) { return v[size_t(y) * nx + x]; }
    const std::complex<T>& at(int y, int x) const { return v[size_t(y) * nx + x]; }
    size_t size() const { return v.size(); }
};

// Multi-coil complex grid, row-major [coils, ny, nx]. Used for both image-
// and frequency-domain data.
template <typename T = double>
struct CStack {
    int coils = 0, ny = 0, nx = 0;
    std::vector<std::complex<T>> v;

    CStack() = default;
    CStack(int c, int ny_, int nx_) : coils(c), ny(ny_), nx(nx_), v(size_t(c) * ny_ * nx_) {}
    std::complex<T>& at(int c, int y, int x) { return v[(size_t(c) * ny + y) * nx + x]; }
    const std::complex<T>& at(int c, int y, int x) const { return v[(size_t(c) * ny + y) * nx + x]; }
    std::complex<T>* coil(int c) { return v.data() + size_t(c) * ny * nx; }
    const std::complex<T>* coil(int c) const { return v.data() + size_t(c) * ny * nx; }
    size_t size() const { return v.size(); }
};

struct Geometry {
    double pixel_spacing_mm[2] = {1.0, 1.0}; // row, column
    double slice_thickness_mm = 8.0;
    int frame_index = -1; // -1 when not part of a series
};

// Multi-coil frequency-domain data plus acquisition geometry.
template <typename T = double>
struct KSpaceVolume {
    CStack<T> data;
    Geometry geometry;
    std::string provenance;
};

// Per-coil complex sensitivity maps, normalized so that the stacked maps
// form an isometry on their support: sum_j |S_j(p)|^2 = 1.
template <typename T = double>
struct CoilSensitivities {
    CStack<T> maps;

    // max deviation of sum_j |S_j|^2 from 1 over pixels where any map is nonzero
    double normalization_error() const {
        double worst = 0.0;
        for (int y = 0; y < maps.ny; ++y)
            for (int x = 0; x < maps.nx; ++x) {
                double s = 0.0;
                for (int c = 0; c < maps.coils; ++c) s += std::norm(maps.at(c, y, x));
                if (s > 0.0) worst = std::max(worst, std::abs(s - 1.0));
            }
        return worst;
    }
};

template <typename T>
void fft2c_inplace(CImage<T>& img) {
    fft::fft2c(img.v.data(), img.ny, img.nx);
}
template <typename T>
void ifft2c_inplace(CImage<T>& img) {
    fft::ifft2c(img.v.data(), img.ny, img.nx);
}
template <typename T>
void fft2c_inplace(CStack<T>& s) {
    for (int c = 0; c < s.coils; ++c) fft::fft2c(s.coil(c), s.ny, s.nx);
}
template <typename T>
void ifft2c_inplace(CStack<T>& s) {
    for (int c = 0; c < s.coils; ++c) fft::ifft2c(s.coil(c), s.ny, s.nx);
}

template <typename T>
CImage<T> fft2c(CImage<T> img) {
    fft2c_inplace(img);
    return img;
}
template <typename T>
CImage<T> ifft2c(CImage<T> img) {
    ifft2c_inplace(img);
    return img;
}
template <typename T>
CStack<T> fft2c(CStack<T> s) {
    fft2c_inplace(s);
    return s;
}
template <typename T>
CStack<T> ifft2c(CStack<T> s) {
    ifft2c_inplace(s);
    return s;
}

template <typename T>
double norm2(const std::vector<std::complex<T>>& v) {
    double s = 0.0;
    for (const auto& z : v) s += std::norm(z);
    return std::sqrt(s);
}

} // namespace cardiomm
