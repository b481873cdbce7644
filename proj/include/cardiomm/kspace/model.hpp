#pragma once

#include "cardiomm/kspace/coil.hpp"
#include "cardiomm/kspace/types.hpp"
#include "cardiomm/sampling/mask.hpp"

namespace cardiomm {

// A x = U F S x : coil-combined image -> undersampled multi-coil k-space
template <typename T>
KSpaceVolume<T> forward_model(const CImage<T>& x, const CoilSensitivities<T>& sens,
                              const UndersamplingMask& mask) {
    if (x.ny != mask.ny || x.nx != mask.nx)
        throw ValidationError("forward_model: image/mask shape mismatch");
    KSpaceVolume<T> out;
    out.data = coil_expand(x, sens);
    fft2c_inplace(out.data);
    for (int c = 0; c < out.data.coils; ++c)
        for (int y = 0; y < mask.ny; ++y)
            for (int xx = 0; xx < mask.nx; ++xx)
                if (!mask.at(y, xx)) out.data.at(c, y, xx) = {0, 0};
    return out;
}

// A* y = S* F* U* y : undersampled multi-coil k-space -> coil-combined image
template <typename T>
CImage<T> adjoint_model(const KSpaceVolume<T>& y, const CoilSensitivities<T>& sens,
                        const UndersamplingMask& mask) {
    if (y.data.ny != mask.ny || y.data.nx != mask.nx)
        throw ValidationError("adjoint_model: k-space/mask shape mismatch");
    CStack<T> masked = y.data;
    for (int c = 0; c < masked.coils; ++c)
        for (int yy = 0; yy < mask.ny; ++yy)
            for (int xx = 0; xx < mask.nx; ++xx)
                if (!mask.at(yy, xx)) masked.at(c, yy, xx) = {0, 0};
    ifft2c_inplace(masked);
    CoilSensitivities<T> s{sens};
    return coil_combine(masked, s);
}

} // namespace cardiomm
