#pragma once

#include <algorithm>
#include <complex>
#include <numeric>
#include <vector>

#include "cardiomm/kspace/types.hpp"

namespace cardiomm {

// x_C = sum_j conj(S_j) * x_j
template <typename T>
CImage<T> coil_combine(const CStack<T>& x, const CoilSensitivities<T>& sens) {
    const auto& s = sens.maps;
    if (x.coils != s.coils || x.ny != s.ny || x.nx != s.nx)
        throw ValidationError("coil_combine: image/sensitivity shape mismatch");
    CImage<T> out(x.ny, x.nx);
    for (int c = 0; c < x.coils; ++c)
        for (size_t i = 0; i < out.size(); ++i)
            out.v[i] += std::conj(s.v[size_t(c) * out.size() + i]) * x.v[size_t(c) * out.size() + i];
    return out;
}

// m_j = S_j * x
template <typename T>
CStack<T> coil_expand(const CImage<T>& x, const CoilSensitivities<T>& sens) {
    const auto& s = sens.maps;
    if (x.ny != s.ny || x.nx != s.nx)
        throw ValidationError("coil_expand: image/sensitivity shape mismatch");
    CStack<T> out(s.coils, x.ny, x.nx);
    for (int c = 0; c < s.coils; ++c)
        for (size_t i = 0; i < x.size(); ++i)
            out.v[size_t(c) * x.size() + i] = s.v[size_t(c) * x.size() + i] * x.v[i];
    return out;
}

// square root of sum of squares over coils
template <typename T>
std::vector<T> sos(const CStack<T>& x) {
    if (x.coils < 1) throw ValidationError("sos: need at least one coil");
    std::vector<T> out(size_t(x.ny) * x.nx, T(0));
    for (int c = 0; c < x.coils; ++c)
        for (size_t i = 0; i < out.size(); ++i) out[i] += std::norm(x.v[size_t(c) * out.size() + i]);
    for (auto& v : out) v = std::sqrt(v);
    return out;
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a Hermitian matrix (column-major n x n).
// Small n only; returns eigenvalues ascending with matching eigenvectors.
template <typename T>
void hermitian_eig(std::vector<std::complex<T>>& a, int n, std::vector<T>& eigval,
                   std::vector<std::complex<T>>& eigvec) {
    eigvec.assign(size_t(n) * n, {0, 0});
    for (int i = 0; i < n; ++i) eigvec[size_t(i) * n + i] = {1, 0};
    auto A = [&](int r, int c) -> std::complex<T>& { return a[size_t(c) * n + r]; };
    auto V = [&](int r, int c) -> std::complex<T>& { return eigvec[size_t(c) * n + r]; };

    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += std::norm(A(p, q));
        if (off < 1e-28) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const std::complex<T> apq = A(p, q);
                if (std::abs(apq) < T(1e-300)) continue;
                const T app = A(p, p).real(), aqq = A(q, q).real();
                // phase that makes the rotated off-diagonal real
                const std::complex<T> phase = apq / std::complex<T>(std::abs(apq));
                const T m = std::abs(apq);
                const T theta = T(0.5) * std::atan2(2 * m, aqq - app);
                const T c = std::cos(theta), s = std::sin(theta);
                const std::complex<T> sp = s * phase;
                for (int k = 0; k < n; ++k) {
                    const std::complex<T> akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - std::conj(sp) * akq;
                    A(k, q) = sp * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const std::complex<T> apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - sp * aqk;
                    A(q, k) = std::conj(sp) * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const std::complex<T> vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - std::conj(sp) * vkq;
                    V(k, q) = sp * vkp + c * vkq;
                }
            }
        }
    }
    eigval.resize(n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<T> raw(n);
    for (int i = 0; i < n; ++i) raw[i] = A(i, i).real();
    std::sort(order.begin(), order.end(), [&](int i, int j) { return raw[i] < raw[j]; });
    std::vector<std::complex<T>> sorted(size_t(n) * n);
    for (int i = 0; i < n; ++i) {
        eigval[i] = raw[order[i]];
        for (int r = 0; r < n; ++r) sorted[size_t(i) * n + r] = V(r, order[i]);
    }
    eigvec.swap(sorted);
}

} // namespace detail

template <typename T>
struct CoilCompression {
    KSpaceVolume<T> kspace;      // compressed data [keep, ky, kx]
    double energy_retained = 0;  // fraction of calibration energy kept
};

// SVD-based coil compression. The compression matrix is computed from the
// calibration samples (ACS region when given, otherwise all of k-space) via
// the coil-by-coil Gram matrix, and the full k-space is projected onto the
// dominant `keep` eigencoils.
template <typename T>
CoilCompression<T> coil_compress(const KSpaceVolume<T>& ks, int keep,
                                 int calib_y0 = 0, int calib_y1 = -1,
                                 int calib_x0 = 0, int calib_x1 = -1) {
    const auto& d = ks.data;
    if (keep <= 0) throw ValidationError("coil_compress: keep must be positive");
    if (keep > d.coils) throw ValidationError("coil_compress: keep exceeds coil count");
    if (calib_y1 < 0) calib_y1 = d.ny;
    if (calib_x1 < 0) calib_x1 = d.nx;

    const int n = d.coils;
    std::vector<std::complex<T>> gram(size_t(n) * n, {0, 0});
    for (int y = calib_y0; y < calib_y1; ++y)
        for (int x = calib_x0; x < calib_x1; ++x)
            for (int ci = 0; ci < n; ++ci)
                for (int cj = 0; cj < n; ++cj)
                    gram[size_t(cj) * n + ci] += d.at(ci, y, x) * std::conj(d.at(cj, y, x));

    std::vector<T> eigval;
    std::vector<std::complex<T>> eigvec;
    detail::hermitian_eig(gram, n, eigval, eigvec);

    double total = 0.0, kept = 0.0;
    for (int i = 0; i < n; ++i) total += std::max<double>(0.0, eigval[i]);
    for (int i = n - keep; i < n; ++i) kept += std::max<double>(0.0, eigval[i]);

    CoilCompression<T> out;
    out.energy_retained = total > 0 ? kept / total : 1.0;
    out.kspace.geometry = ks.geometry;
    out.kspace.provenance = ks.provenance;
    out.kspace.data = CStack<T>(keep, d.ny, d.nx);
    // project: out_k = V_k^H . d  with V the top eigencoils (descending order)
    for (int k = 0; k < keep; ++k) {
        const std::complex<T>* vk = eigvec.data() + size_t(n - 1 - k) * n;
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                std::complex<T> acc{0, 0};
                for (int c = 0; c < n; ++c) acc += std::conj(vk[c]) * d.at(c, y, x);
                out.kspace.data.at(k, y, x) = acc;
            }
    }
    return out;
}

} // namespace cardiomm
