#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cardiomm/core/param_store.hpp"
#include "cardiomm/core/tensor.hpp"
#include "cardiomm/text/encode.hpp"

namespace cardiomm {

// Trainable projection head: bias-free linear map followed by L2
// normalization, so the output is invariant to positive scaling of the raw
// embedding. One head per text channel, shared across all network phases.
template <typename T>
struct ProjectionHead {
    ad::Tensor<T> weight; // [dim_out, kRawEmbedDim]
    int64_t dim_out = 0;

    static ProjectionHead create(ad::ParamStore<T>& store, const std::string& name, int64_t dim_out,
                                 Rng& rng) {
        ProjectionHead h;
        h.dim_out = dim_out;
        const double bound = 1.0 / std::sqrt(double(kRawEmbedDim));
        h.weight = store.create_uniform(name + ".w", {dim_out, kRawEmbedDim}, rng, -bound, bound);
        return h;
    }

    static ProjectionHead attach(const ad::ParamStore<T>& store, const std::string& name) {
        ProjectionHead h;
        h.weight = store.get(name + ".w");
        h.dim_out = h.weight.shape()[0];
        return h;
    }

    // raw [kRawEmbedDim] -> unit vector [1, dim_out] in the autodiff graph
    ad::Tensor<T> project(const std::vector<double>& raw) const {
        if (int64_t(raw.size()) != kRawEmbedDim)
            throw ValidationError("ProjectionHead: raw embedding has wrong dimension");
        std::vector<T> rv(raw.size());
        for (size_t i = 0; i < raw.size(); ++i) rv[i] = T(raw[i]);
        auto x = ad::Tensor<T>::from({1, kRawEmbedDim}, std::move(rv));
        auto t = ad::linear(x, weight, ad::Tensor<T>{});
        double nn = 0;
        for (T v : t.value()) nn += double(v) * double(v);
        if (nn <= 0) throw NumericalError("ProjectionHead: zero vector before normalization");
        auto norm = ad::sqrt(ad::sum_all(ad::square(t)));
        return ad::div(t, norm);
    }

    // convenience for evaluation paths with frozen weights
    std::vector<double> project_values(const std::vector<double>& raw) const {
        auto t = project(raw);
        std::vector<double> out(t.value().size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = double(t.value()[i]);
        return out;
    }
};

} // namespace cardiomm
