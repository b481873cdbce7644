#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cardiomm/core/errors.hpp"
#include "cardiomm/core/rng.hpp"

namespace cardiomm {

namespace detail {

// regularized incomplete beta I_x(a,b) by Lentz continued fraction
inline double betacf(double a, double b, double x) {
    const double eps = 3e-16, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1, d = 1 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

inline double betai(double a, double b, double x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                               a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1) / (a + b + 2)) return bt * betacf(a, b, x) / a;
    return 1 - bt * betacf(b, a, 1 - x) / b;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

// midranks over a combined sample
inline std::vector<double> midranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * (double(i + 1) + double(j + 1));
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace detail

// two-sided p for Student's t with nu degrees of freedom
inline double t_two_sided_p(double t, double nu) {
    return detail::betai(0.5 * nu, 0.5, nu / (nu + t * t));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct AgreementReport {
    double pcc = std::numeric_limits<double>::quiet_NaN();
    double slope = 0, intercept = 0; // least-squares fit of b against a
    double md = 0;                   // mean difference b - a
    double loa_lo = 0, loa_hi = 0;   // md -/+ 1.96 sd of differences
    double mae = 0;
    size_t n = 0;
};

// Pearson correlation, linear regression, Bland-Altman mean difference with
// 95% limits of agreement, and mean absolute error. `a` is the reference,
// `b` the test measurement; differences are b - a.
inline AgreementReport agreement_stats(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("agreement_stats: length mismatch");
    if (a.size() < 3) throw ValidationError("agreement_stats: need n >= 3");
    const size_t n = a.size();
    AgreementReport r;
    r.n = n;
    const double ma = detail::mean_of(a), mb = detail::mean_of(b);
    double saa = 0, sbb = 0, sab = 0;
    for (size_t i = 0; i < n; ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (saa > 0 && sbb > 0) r.pcc = sab / std::sqrt(saa * sbb);
    if (saa > 0) {
        r.slope = sab / saa;
        r.intercept = mb - r.slope * ma;
    }
    double sd = 0;
    for (size_t i = 0; i < n; ++i) {
        const double d = b[i] - a[i];
        r.md += d;
        r.mae += std::abs(d);
    }
    r.md /= double(n);
    r.mae /= double(n);
    for (size_t i = 0; i < n; ++i) {
        const double d = b[i] - a[i] - r.md;
        sd += d * d;
    }
    sd = std::sqrt(sd / double(n - 1));
    r.loa_lo = r.md - 1.96 * sd;
    r.loa_hi = r.md + 1.96 * sd;
    return r;
}

// AUC by the rank (Mann-Whitney) formulation with midrank tie correction.
inline double auc(const std::vector<double>& scores_pos, const std::vector<double>& scores_neg) {
    if (scores_pos.empty() || scores_neg.empty())
        throw ValidationError("auc: both classes must be non-empty");
    std::vector<double> all(scores_pos);
    all.insert(all.end(), scores_neg.begin(), scores_neg.end());
    const auto ranks = detail::midranks(all);
    double rpos = 0;
    for (size_t i = 0; i < scores_pos.size(); ++i) rpos += ranks[i];
    const double np = double(scores_pos.size()), nn = double(scores_neg.size());
    return (rpos - np * (np + 1) / 2.0) / (np * nn);
}

// Two-sided bootstrap test on the AUC difference of two score sets over the
// same cases. Cases are resampled with replacement; the p-value is twice the
// smaller tail mass of the bootstrap difference distribution around zero
// (with add-one smoothing so p never collapses to exactly 0).
inline double bootstrap_auc_diff(const std::vector<double>& scores_a,
                                 const std::vector<double>& scores_b,
                                 const std::vector<int>& labels, int n_boot, uint64_t seed) {
    if (scores_a.size() != labels.size() || scores_b.size() != labels.size())
        throw ValidationError("bootstrap_auc_diff: length mismatch");
    if (n_boot < 1) throw ValidationError("bootstrap_auc_diff: n_boot must be >= 1");
    bool has_pos = false, has_neg = false;
    for (int l : labels) (l ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw ValidationError("bootstrap_auc_diff: single-class input");

    Rng rng(derive_seed(seed, 0x626f6f74ULL));
    const size_t n = labels.size();
    int64_t le = 0, ge = 0, used = 0;
    std::vector<double> pa, na, pb, nb;
    for (int it = 0; it < n_boot; ++it) {
        pa.clear();
        na.clear();
        pb.clear();
        nb.clear();
        for (size_t i = 0; i < n; ++i) {
            const size_t k = size_t(rng.below(n));
            if (labels[k]) {
                pa.push_back(scores_a[k]);
                pb.push_back(scores_b[k]);
            } else {
                na.push_back(scores_a[k]);
                nb.push_back(scores_b[k]);
            }
        }
        if (pa.empty() || na.empty()) continue; // degenerate resample
        const double d = auc(pa, na) - auc(pb, nb);
        if (d <= 0) ++le;
        if (d >= 0) ++ge;
        ++used;
    }
    if (used == 0) throw NumericalError("bootstrap_auc_diff: all resamples degenerate");
    const double p_lo = double(le + 1) / double(used + 1);
    const double p_hi = double(ge + 1) / double(used + 1);
    return std::min(1.0, 2.0 * std::min(p_lo, p_hi));
}

struct PairedTestReport {
    double t_stat = 0;
    double t_p = 1.0;
    double wilcoxon_p = 1.0;
};

// Paired two-sided t-test plus Wilcoxon signed-rank with normal
// approximation; zero differences are dropped for the rank test and the
// all-zero case returns the p = 1 sentinel for both.
inline PairedTestReport paired_tests(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("paired_tests: length mismatch");
    if (a.size() < 5) throw ValidationError("paired_tests: need n >= 5 pairs");
    const size_t n = a.size();
    std::vector<double> d(n);
    bool all_zero = true;
    for (size_t i = 0; i < n; ++i) {
        d[i] = a[i] - b[i];
        if (d[i] != 0) all_zero = false;
    }
    PairedTestReport r;
    if (all_zero) return r; // p = 1 sentinel path

    const double md = detail::mean_of(d);
    double ss = 0;
    for (double v : d) ss += (v - md) * (v - md);
    const double sd = std::sqrt(ss / double(n - 1));
    if (sd == 0) {
        r.t_stat = md > 0 ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
        r.t_p = 0.0;
    } else {
        r.t_stat = md / (sd / std::sqrt(double(n)));
        r.t_p = t_two_sided_p(r.t_stat, double(n - 1));
    }

    // Wilcoxon signed-rank, zeros dropped, midranks on |d|
    std::vector<double> absd, sign;
    for (double v : d)
        if (v != 0) {
            absd.push_back(std::abs(v));
            sign.push_back(v > 0 ? 1.0 : -1.0);
        }
    const size_t m = absd.size();
    const auto ranks = detail::midranks(absd);
    double wplus = 0;
    for (size_t i = 0; i < m; ++i)
        if (sign[i] > 0) wplus += ranks[i];
    const double mu = double(m) * (m + 1) / 4.0;
    // tie correction on the variance
    double tie = 0;
    {
        std::vector<double> sorted(absd);
        std::sort(sorted.begin(), sorted.end());
        size_t i = 0;
        while (i < m) {
            size_t j = i;
            while (j + 1 < m && sorted[j + 1] == sorted[i]) ++j;
            const double t = double(j - i + 1);
            tie += t * t * t - t;
            i = j + 1;
        }
    }
    const double var = double(m) * (m + 1) * (2.0 * m + 1) / 24.0 - tie / 48.0;
    if (var <= 0) {
        r.wilcoxon_p = 1.0;
        return r;
    }
    const double z = (std::abs(wplus - mu) - 0.5) / std::sqrt(var); // continuity corrected
    r.wilcoxon_p = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::max(0.0, z))));
    return r;
}

} // namespace cardiomm
