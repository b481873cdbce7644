#pragma once

#include <cmath>
#include <string>

#include "cardiomm/core/param_store.hpp"

namespace cardiomm {

struct AdamWConfig {
    double lr = 2e-4;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled-weight-decay adaptive moment update with bias correction.
// Parameters with no accumulated gradient this step are treated as zero-grad
// (their moments decay and the decoupled decay still applies).
template <typename T>
void adamw_step(ad::ParamStore<T>& store, const AdamWConfig& cfg) {
    for (auto& [name, e] : store.entries()) {
        auto& p = e.param.value();
        const size_t n = p.size();
        if (e.m.size() != n) {
            e.m.assign(n, T(0));
            e.v.assign(n, T(0));
        }
        e.step += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, double(e.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, double(e.step));
        const bool has_grad = !e.param.grad().empty();
        for (size_t i = 0; i < n; ++i) {
            const double g = has_grad ? double(e.param.grad()[i]) : 0.0;
            if (!std::isfinite(g))
                throw NumericalError("adamw_step: non-finite gradient in parameter " + name);
            e.m[i] = T(cfg.beta1 * double(e.m[i]) + (1.0 - cfg.beta1) * g);
            e.v[i] = T(cfg.beta2 * double(e.v[i]) + (1.0 - cfg.beta2) * g * g);
            const double mhat = double(e.m[i]) / bc1;
            const double vhat = double(e.v[i]) / bc2;
            const double update = mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * double(p[i]);
            p[i] = T(double(p[i]) - cfg.lr * update);
        }
    }
}

// step-decayed learning rate: lr0 * factor^floor(epoch / every)
inline double lr_at(int epoch, double lr0, double factor = 0.3, int every = 5) {
    if (epoch < 0) throw ValidationError("lr_at: epoch must be >= 0");
    return lr0 * std::pow(factor, double(epoch / every));
}

// scale all gradients so their global l2 norm is at most max_norm;
// returns the pre-clip norm
template <typename T>
double clip_grad_norm(ad::ParamStore<T>& store, double max_norm) {
    double total = 0;
    for (auto& [name, e] : store.entries())
        for (T g : e.param.grad()) total += double(g) * double(g);
    total = std::sqrt(total);
    if (max_norm > 0 && total > max_norm) {
        const T s = T(max_norm / total);
        for (auto& [name, e] : store.entries())
            for (T& g : e.param.grad()) g *= s;
    }
    return total;
}

} // namespace cardiomm
