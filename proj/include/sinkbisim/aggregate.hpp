#pragma once

// State aggregation: greedy epsilon-partitioning, PAM with a fixed budget,
// and the abstract chain induced by a partition under uniform weighting.

#include "sinkbisim/bisim.hpp"
#include "sinkbisim/mdp.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace sinkbisim {

struct Abstraction {
    std::vector<std::size_t> labels;   ///< labels[s] in [0, num_partitions)
    std::size_t num_partitions = 0;
    std::vector<std::size_t> medoids;  ///< medoids[b] is the representative of partition b

    [[nodiscard]] std::size_t num_states() const noexcept { return labels.size(); }

    [[nodiscard]] std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> out(num_partitions, 0);
        for (auto l : labels) ++out.at(l);
        return out;
    }

    /// |S| x |S~| indicator matrix.
    [[nodiscard]] Matrix one_hot() const {
        Matrix phi = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(num_partitions));
        for (std::size_t s = 0; s < labels.size(); ++s) phi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(labels[s])) = 1.0;
        return phi;
    }

    /// Largest distance from a state to its partition's medoid.
    [[nodiscard]] double radius(const StateMetric& d) const {
        double r = 0.0;
        for (std::size_t s = 0; s < labels.size(); ++s) {
            r = std::max(r, d(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(medoids[labels[s]])));
        }
        return r;
    }

    void validate() const {
        detail::require(!labels.empty(), "Abstraction: no states");
        detail::require(medoids.size() == num_partitions, "Abstraction: one medoid per partition");
        std::vector<char> used(num_partitions, 0);
        for (auto l : labels) {
            detail::require(l < num_partitions, "Abstraction: label out of range");
            used[l] = 1;
        }
        for (auto u : used) detail::require(u != 0, "Abstraction: empty partition");
        for (std::size_t b = 0; b < num_partitions; ++b) {
            detail::require(medoids[b] < labels.size() && labels[medoids[b]] == b,
                            "Abstraction: medoid must belong to its partition");
        }
    }
};

/// Greedy epsilon-aggregation. Neighbour counts are computed once; the
/// unassigned state with the most epsilon-neighbours (lowest index on ties)
/// becomes a medoid and absorbs its unassigned epsilon-neighbours.
inline Abstraction epsilon_aggregate(const StateMetric& d, double epsilon) {
    detail::require(epsilon >= 0.0, "epsilon_aggregate: epsilon must be >= 0");
    const std::size_t n = d.size();
    detail::require(n > 0, "epsilon_aggregate: empty metric");
    const Matrix& dist = d.distances();
    constexpr std::int64_t kTaken = std::numeric_limits<std::int64_t>::min();
    std::vector<std::int64_t> count(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) <= epsilon) ++count[i];
        }
    }
    Abstraction out;
    out.labels.assign(n, 0);
    std::vector<char> assigned(n, 0);
    std::size_t remaining = n;
    while (remaining > 0) {
        std::size_t m = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (count[i] > count[m]) m = i;
        }
        const std::size_t label = out.num_partitions++;
        out.medoids.push_back(m);
        assigned[m] = 1;
        count[m] = kTaken;
        out.labels[m] = label;
        --remaining;
        for (std::size_t j = 0; j < n; ++j) {
            if (assigned[j] || dist(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) > epsilon) continue;
            assigned[j] = 1;
            count[j] = kTaken;
            out.labels[j] = label;
            --remaining;
        }
    }
    return out;
}

namespace detail {

struct PamState {
    std::vector<std::size_t> medoids;
    std::vector<double> nearest;
    std::vector<double> second;
    std::vector<std::size_t> nearest_slot;
    double cost = 0.0;
};

inline void pam_refresh(const Matrix& dist, PamState& st) {
    const auto n = static_cast<std::size_t>(dist.rows());
    const double inf = std::numeric_limits<double>::infinity();
    st.nearest.assign(n, inf);
    st.second.assign(n, inf);
    st.nearest_slot.assign(n, 0);
    st.cost = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t slot = 0; slot < st.medoids.size(); ++slot) {
            const double x = dist(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(st.medoids[slot]));
            if (x < st.nearest[j]) {
                st.second[j] = st.nearest[j];
                st.nearest[j] = x;
                st.nearest_slot[j] = slot;
            } else if (x < st.second[j]) {
                st.second[j] = x;
            }
        }
        st.cost += st.nearest[j];
    }
}

}  // namespace detail

struct PamReport {
    Abstraction abstraction;
    double total_cost = 0.0;
    std::size_t swap_passes = 0;
    std::vector<double> cost_history;  ///< after BUILD, then after each swap
};

/// PAM (BUILD then SWAP) with at most max_passes swaps, each pass applying the
/// single best improving (medoid, non-medoid) exchange. Ties go to the lowest
/// medoid slot, then the lowest candidate index. The procedure is
/// deterministic, so `seed` does not influence the result.
inline PamReport pam_partition_report(const StateMetric& d, std::size_t k, std::uint64_t seed = 0,
                                      std::size_t max_passes = 300) {
    (void)seed;
    const std::size_t n = d.size();
    detail::require(k >= 1 && k <= n, "pam_partition: need 1 <= k <= |S|");
    const Matrix& dist = d.distances();
    const auto at = [&](std::size_t i, std::size_t j) {
        return dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    };
    detail::PamState st;
    std::vector<char> is_medoid(n, 0);

    // BUILD: the most central state, then greedy additions by cost reduction.
    {
        std::size_t best = 0;
        double best_sum = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += at(i, j);
            if (s < best_sum) {
                best_sum = s;
                best = i;
            }
        }
        st.medoids.push_back(best);
        is_medoid[best] = 1;
        detail::pam_refresh(dist, st);
    }
    while (st.medoids.size() < k) {
        std::size_t best = n;
        double best_gain = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (is_medoid[i]) continue;
            double gain = 0.0;
            for (std::size_t j = 0; j < n; ++j) gain += std::max(st.nearest[j] - at(i, j), 0.0);
            if (gain > best_gain) {
                best_gain = gain;
                best = i;
            }
        }
        st.medoids.push_back(best);
        is_medoid[best] = 1;
        detail::pam_refresh(dist, st);
    }

    PamReport rep;
    rep.cost_history.push_back(st.cost);
    const double tol = 1e-12 * (1.0 + st.cost);
    for (std::size_t pass = 0; pass < max_passes && k < n; ++pass) {
        double best_delta = -tol;
        std::size_t best_slot = k;
        std::size_t best_h = n;
        for (std::size_t slot = 0; slot < k; ++slot) {
            for (std::size_t h = 0; h < n; ++h) {
                if (is_medoid[h]) continue;
                double delta = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double keep = st.nearest_slot[j] == slot ? st.second[j] : st.nearest[j];
                    delta += std::min(keep, at(j, h)) - st.nearest[j];
                }
                if (delta < best_delta) {
                    best_delta = delta;
                    best_slot = slot;
                    best_h = h;
                }
            }
        }
        if (best_slot == k) break;
        is_medoid[st.medoids[best_slot]] = 0;
        st.medoids[best_slot] = best_h;
        is_medoid[best_h] = 1;
        detail::pam_refresh(dist, st);
        rep.cost_history.push_back(st.cost);
        ++rep.swap_passes;
    }

    // Labels follow ascending medoid index; each medoid labels itself, other
    // states join their nearest medoid (lowest label on ties).
    std::vector<std::size_t> sorted = st.medoids;
    std::sort(sorted.begin(), sorted.end());
    Abstraction& ab = rep.abstraction;
    ab.num_partitions = k;
    ab.medoids = sorted;
    ab.labels.assign(n, 0);
    for (std::size_t s = 0; s < n; ++s) {
        const auto self = std::lower_bound(sorted.begin(), sorted.end(), s);
        if (self != sorted.end() && *self == s) {
            ab.labels[s] = static_cast<std::size_t>(self - sorted.begin());
            continue;
        }
        std::size_t best = 0;
        for (std::size_t b = 1; b < k; ++b) {
            if (at(s, sorted[b]) < at(s, sorted[best])) best = b;
        }
        ab.labels[s] = best;
    }
    rep.total_cost = 0.0;
    for (std::size_t s = 0; s < n; ++s) rep.total_cost += at(s, sorted[ab.labels[s]]);
    return rep;
}

inline Abstraction pam_partition(const StateMetric& d, std::size_t k, std::uint64_t seed = 0) {
    return pam_partition_report(d, k, seed).abstraction;
}

/// Abstract chain under uniform weighting within partitions.
struct AbstractMdpView {
    Vector rewards;       ///< R~_pi
    Matrix transitions;   ///< P~_pi
    std::vector<std::size_t> sizes;
};

inline AbstractMdpView build_abstract_chain(const Vector& r_pi, const Matrix& p_pi, const Abstraction& phi) {
    phi.validate();
    detail::require(phi.num_states() == static_cast<std::size_t>(r_pi.size()) && p_pi.rows() == r_pi.size(),
                    "build_abstract_view: abstraction does not cover the chain");
    const Matrix onehot = phi.one_hot();
    AbstractMdpView view;
    view.sizes = phi.sizes();
    Vector inv(static_cast<Eigen::Index>(phi.num_partitions));
    for (std::size_t b = 0; b < phi.num_partitions; ++b) inv(static_cast<Eigen::Index>(b)) = 1.0 / static_cast<double>(view.sizes[b]);
    view.rewards = inv.asDiagonal() * (onehot.transpose() * r_pi);
    view.transitions = inv.asDiagonal() * (onehot.transpose() * p_pi * onehot);
    // Clean accumulated rounding so rows are stochastic to working precision.
    for (Eigen::Index b = 0; b < view.transitions.rows(); ++b) {
        const double s = view.transitions.row(b).sum();
        view.transitions.row(b) /= s;
    }
    view.rewards = view.rewards.cwiseMax(0.0).cwiseMin(1.0);
    return view;
}

inline AbstractMdpView build_abstract_view(const FiniteMdp& mdp, const StochasticPolicy& policy,
                                           const Abstraction& phi) {
    return build_abstract_chain(expected_reward(mdp, policy), policy_transition(mdp, policy), phi);
}

/// Value of the policy on the abstract chain, per partition.
inline Vector evaluate_abstract(const AbstractMdpView& view, double gamma, double tol = 1e-10) {
    return evaluate_markov_chain(view.rewards, view.transitions, gamma, tol);
}

inline ValueFunction lift_values(const Vector& abstract_values, const Abstraction& phi) {
    detail::require(static_cast<std::size_t>(abstract_values.size()) == phi.num_partitions,
                    "lift_values: need one value per partition");
    ValueFunction v{Vector(static_cast<Eigen::Index>(phi.num_states()))};
    for (std::size_t s = 0; s < phi.num_states(); ++s) {
        detail::require(phi.labels[s] < phi.num_partitions, "lift_values: label out of range");
        v.values(static_cast<Eigen::Index>(s)) = abstract_values(static_cast<Eigen::Index>(phi.labels[s]));
    }
    return v;
}

}  // namespace sinkbisim
