#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cardiomm/core/tensor.hpp"

namespace cardiomm::ad {

struct GradCheckItem {
    std::string name;
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckItem> items;
    double worst = 0.0;
    double tol = 0.0;
    bool passed() const { return worst <= tol; }
};

// Central-difference audit of reverse-mode gradients. `fn` must be a
// deterministic function of the listed parameters and return a scalar loss.
// The relative-error denominator is floored so that near-zero gradients are
// judged on an absolute scale compatible with finite-difference noise.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& fn,
                           std::vector<std::pair<std::string, Tensor<T>>> params,
                           double eps = 1e-5, double tol = 1e-4, double denom_floor = 1e-3) {
    GradCheckReport report;
    report.tol = tol;

    for (auto& [name, p] : params) p.zero_grad();
    backward(fn());

    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) {
        if (p.grad().empty())
            analytic.emplace_back(p.value().size(), T(0));
        else
            analytic.push_back(p.grad());
    }

    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi].second;
        GradCheckItem item;
        item.name = params[pi].first;
        for (size_t i = 0; i < p.value().size(); ++i) {
            const T saved = p.value()[i];
            p.value()[i] = saved + T(eps);
            const double fp = double(fn().item());
            p.value()[i] = saved - T(eps);
            const double fm = double(fn().item());
            p.value()[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = double(analytic[pi][i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
            item.max_rel_err = std::max(item.max_rel_err, std::abs(a - numeric) / denom);
            ++item.checked;
        }
        report.worst = std::max(report.worst, item.max_rel_err);
        report.items.push_back(std::move(item));
    }
    for (auto& [name, p] : params) p.zero_grad();
    return report;
}

} // namespace cardiomm::ad
