#pragma once

#include <complex>
#include <vector>

#include "cardiomm/core/tensor.hpp"
#include "cardiomm/kspace/fft.hpp"

namespace cardiomm::ad {

namespace detail {

// Complex data rides through the graph as channel pairs: channel 2j holds the
// real part of coil j, channel 2j+1 the imaginary part.
template <typename T>
void fft_pairs(const T* in, T* out, int64_t N, int64_t C2, int64_t H, int64_t W, bool inverse) {
    std::vector<std::complex<T>> buf(size_t(H) * W);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C2; c += 2) {
            const T* re = in + ((n * C2 + c) * H * W);
            const T* im = re + H * W;
            for (int64_t i = 0; i < H * W; ++i) buf[size_t(i)] = {re[i], im[i]};
            if (inverse)
                fft::ifft2c(buf.data(), size_t(H), size_t(W));
            else
                fft::fft2c(buf.data(), size_t(H), size_t(W));
            T* ore = out + ((n * C2 + c) * H * W);
            T* oim = ore + H * W;
            for (int64_t i = 0; i < H * W; ++i) {
                ore[i] = buf[size_t(i)].real();
                oim[i] = buf[size_t(i)].imag();
            }
        }
}

template <typename T>
Tensor<T> fft_op_impl(const Tensor<T>& x, bool inverse) {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] % 2 != 0)
        throw ValidationError("fft op: expected NCHW with channel pairs (re,im), got " + shape_str(s));
    auto out = make_op_node<T>(s, {x.node()});
    fft_pairs(x.value().data(), out->value.data(), s[0], s[1], s[2], s[3], inverse);
    if (out->requires_grad) {
        // centered orthonormal transforms are unitary, so the vector-Jacobian
        // product of fft2c is ifft2c of the upstream gradient and vice versa
        out->backward_fn = [s, inverse](Node<T>* self) {
            auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            std::vector<T> tmp(self->grad.size());
            fft_pairs(self->grad.data(), tmp.data(), s[0], s[1], s[2], s[3], !inverse);
            T* gx = p->grad.data();
            for (size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
        };
    }
    return Tensor<T>(out);
}

} // namespace detail

template <typename T>
Tensor<T> fft2c_op(const Tensor<T>& x) {
    return detail::fft_op_impl(x, false);
}

template <typename T>
Tensor<T> ifft2c_op(const Tensor<T>& x) {
    return detail::fft_op_impl(x, true);
}

} // namespace cardiomm::ad
