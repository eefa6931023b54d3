#pragma once

// Scalar diagnostics: metric-versus-value gaps, clustering agreement, and
// small statistics helpers shared by the harness and the tests.

#include "sinkbisim/bisim.hpp"
#include "sinkbisim/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

namespace sinkbisim {

/// max_{i,j} | d(i, j) - |V(i) - V(j)| |.
inline double metric_value_gap(const StateMetric& d, const ValueFunction& v) {
    detail::require(d.size() == static_cast<std::size_t>(v.values.size()), "metric_value_gap: size mismatch");
    const auto n = v.values.size();
    double gap = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j + 1; i < n; ++i) {
            gap = std::max(gap, std::abs(d(i, j) - std::abs(v.values(i) - v.values(j))));
        }
    }
    return gap;
}

/// min_{i,j} d(i, j) - |V(i) - V(j)|; nonnegative when d upper-bounds value differences.
inline double min_signed_metric_gap(const StateMetric& d, const ValueFunction& v) {
    detail::require(d.size() == static_cast<std::size_t>(v.values.size()), "min_signed_metric_gap: size mismatch");
    const auto n = v.values.size();
    double gap = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j + 1; i < n; ++i) {
            gap = std::min(gap, d(i, j) - std::abs(v.values(i) - v.values(j)));
        }
    }
    return gap;
}

/// Normalized mutual information, I(A; B) / ((H(A) + H(B)) / 2). Zero when
/// either labeling is constant.
inline double nmi(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    detail::require(a.size() == b.size(), "nmi: label vectors must have equal length");
    detail::require(!a.empty(), "nmi: empty labelings");
    const double n = static_cast<double>(a.size());
    std::map<std::size_t, double> ca, cb;
    std::map<std::pair<std::size_t, std::size_t>, double> joint;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1.0;
        cb[b[i]] += 1.0;
        joint[{a[i], b[i]}] += 1.0;
    }
    const auto entropy = [n](const auto& counts) {
        double h = 0.0;
        for (const auto& [label, c] : counts) h -= (c / n) * std::log(c / n);
        return h;
    };
    const double ha = entropy(ca);
    const double hb = entropy(cb);
    if (ca.size() == 1 || cb.size() == 1) return 0.0;
    double mi = 0.0;
    for (const auto& [key, c] : joint) {
        mi += (c / n) * std::log(c * n / (ca[key.first] * cb[key.second]));
    }
    const double denom = 0.5 * (ha + hb);
    return std::clamp(mi / denom, 0.0, 1.0);
}

/// Shannon entropy in bits.
inline double entropy_bits(const Vector& mu) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (mu(i) > 0.0) h -= mu(i) * std::log2(mu(i));
    }
    return std::max(h, 0.0);
}

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double stddev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double stderr_of_mean(const std::vector<double>& xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    return stddev(xs) / std::sqrt(static_cast<double>(xs.size()));
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t h = xs.size() / 2;
    return xs.size() % 2 == 1 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(const std::vector<double>& xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
    std::vector<double> r(xs.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    detail::require(x.size() == y.size() && x.size() >= 2, "pearson: need two equal-length samples");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks(x), ranks(y));
}

}  // namespace sinkbisim
