#pragma once

#include <string>
#include <vector>

#include "cardiomm/kspace/coil.hpp"
#include "cardiomm/kspace/types.hpp"
#include "cardiomm/sampling/mask.hpp"

namespace cardiomm {

// One acquisition: fully sampled k-space paired with its reference image,
// ground-truth sensitivities when synthetic, text metadata, and optional
// segmentation masks. The unit of training and evaluation.
struct ScanRecord {
    KSpaceVolume<double> kspace; // fully sampled
    std::vector<double> reference; // SoS magnitude [ny*nx]
    CoilSensitivities<double> sens; // empty maps when unknown

    std::string scan_id;
    std::string modality = "cine";
    std::string view = "sax";
    std::string field_strength = "3.0";
    std::string vendor = "simulated";

    int frame_index = -1;
    int num_frames = 1;
    double timing_ms = -1.0; // TI/TE for mapping series
    double heart_rate_bpm = 60.0;

    // optional per-frame segmentation (empty when absent), [ny*nx] each
    std::vector<uint8_t> lv_mask, rv_mask, myo_mask;

    bool has_mask = false;
    UndersamplingMask mask; // optional stored acquisition mask

    int ny() const { return kspace.data.ny; }
    int nx() const { return kspace.data.nx; }

    // reference-consistency invariant for synthetic records
    double reference_consistency_error() const {
        auto img = kspace.data;
        ifft2c_inplace(img);
        auto mag = sos(img);
        double worst = 0;
        for (size_t i = 0; i < mag.size(); ++i) worst = std::max(worst, std::abs(mag[i] - reference[i]));
        return worst;
    }
};

} // namespace cardiomm
