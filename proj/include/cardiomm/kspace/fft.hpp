#pragma once

#include <complex>
#include <vector>
#include <cmath>
#include <cstdint>

#include "cardiomm/core/errors.hpp"

namespace cardiomm::fft {

constexpr double kPi = 3.141592653589793238462643383279502884;

namespace detail {

template <typename T>
void fft_pow2(std::complex<T>* a, size_t n, bool inverse) {
    // iterative Cooley-Tukey, n a power of two, unscaled
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / double(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u(a[i + k]);
                const std::complex<double> v = std::complex<double>(a[i + k + len / 2]) * w;
                a[i + k] = std::complex<T>(u + v);
                a[i + k + len / 2] = std::complex<T>(u - v);
                w *= wl;
            }
        }
    }
}

inline size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Bluestein chirp-z for arbitrary n, unscaled. Twiddle angles are reduced
// mod 2n before multiplying by pi/n so large indices keep full precision.
template <typename T>
void fft_bluestein(std::complex<T>* a, size_t n, bool inverse) {
    const size_t m = next_pow2(2 * n - 1);
    std::vector<std::complex<double>> w(n);
    for (size_t k = 0; k < n; ++k) {
        const uint64_t k2 = (uint64_t(k) * uint64_t(k)) % (2 * n);
        const double ang = (inverse ? 1.0 : -1.0) * kPi * double(k2) / double(n);
        w[k] = {std::cos(ang), std::sin(ang)};
    }
    std::vector<std::complex<double>> fa(m, {0, 0}), fb(m, {0, 0});
    for (size_t k = 0; k < n; ++k) fa[k] = std::complex<double>(a[k]) * w[k];
    fb[0] = std::conj(w[0]);
    for (size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(w[k]);
    fft_pow2(fa.data(), m, false);
    fft_pow2(fb.data(), m, false);
    for (size_t k = 0; k < m; ++k) fa[k] *= fb[k];
    fft_pow2(fa.data(), m, true);
    const double inv_m = 1.0 / double(m);
    for (size_t k = 0; k < n; ++k) a[k] = std::complex<T>(fa[k] * w[k] * inv_m);
}

} // namespace detail

// In-place unscaled DFT: forward sums exp(-2pi i kn/N), inverse sums
// exp(+2pi i kn/N) with no 1/N factor.
template <typename T>
void fft_1d(std::complex<T>* a, size_t n, bool inverse) {
    if (n <= 1) return;
    if ((n & (n - 1)) == 0)
        detail::fft_pow2(a, n, inverse);
    else
        detail::fft_bluestein(a, n, inverse);
}

// Row-major [ny, nx] 2-D transform, unscaled.
template <typename T>
void fft_2d(std::complex<T>* data, size_t ny, size_t nx, bool inverse) {
    for (size_t y = 0; y < ny; ++y) fft_1d(data + y * nx, nx, inverse);
    std::vector<std::complex<T>> col(ny);
    for (size_t x = 0; x < nx; ++x) {
        for (size_t y = 0; y < ny; ++y) col[y] = data[y * nx + x];
        fft_1d(col.data(), ny, inverse);
        for (size_t y = 0; y < ny; ++y) data[y * nx + x] = col[y];
    }
}

// fftshift: index 0 moves to the center; ifftshift is its exact inverse
// (they differ for odd sizes).
template <typename T>
void shift_2d(std::complex<T>* data, size_t ny, size_t nx, bool inverse_shift) {
    const size_t sy = inverse_shift ? ny / 2 : (ny + 1) / 2;
    const size_t sx = inverse_shift ? nx / 2 : (nx + 1) / 2;
    std::vector<std::complex<T>> tmp(ny * nx);
    for (size_t y = 0; y < ny; ++y)
        for (size_t x = 0; x < nx; ++x)
            tmp[y * nx + x] = data[((y + sy) % ny) * nx + ((x + sx) % nx)];
    std::copy(tmp.begin(), tmp.end(), data);
}

// Centered orthonormal transforms: fftshift(F(ifftshift(x)))/sqrt(N) and its
// inverse. Unitary, so Parseval holds and the pair round-trips exactly.
template <typename T>
void fft2c(std::complex<T>* data, size_t ny, size_t nx) {
    shift_2d(data, ny, nx, true);
    fft_2d(data, ny, nx, false);
    shift_2d(data, ny, nx, false);
    const T s = T(1.0 / std::sqrt(double(ny) * double(nx)));
    for (size_t i = 0; i < ny * nx; ++i) data[i] *= s;
}

template <typename T>
void ifft2c(std::complex<T>* data, size_t ny, size_t nx) {
    shift_2d(data, ny, nx, true);
    fft_2d(data, ny, nx, true);
    shift_2d(data, ny, nx, false);
    const T s = T(1.0 / std::sqrt(double(ny) * double(nx)));
    for (size_t i = 0; i < ny * nx; ++i) data[i] *= s;
}

} // namespace cardiomm::fft
