#pragma once

// Bisimulation operators over state metrics.
//
//   F_pi(d)(i, j) = c_R |R_pi(i) - R_pi(j)| + c_T W(d)(P_pi(i), P_pi(j))
//   F(d)(i, j)    = max_a  c_R |R(i, a) - R(j, a)| + c_T W(d)(P_a(i), P_a(j))
//
// where W is the sharp (p, lambda)-Sinkhorn distance with ground cost d.

#include "sinkbisim/mdp.hpp"
#include "sinkbisim/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace sinkbisim {

/// Symmetric, nonnegative |S| x |S| matrix with zero diagonal.
class StateMetric {
public:
    static constexpr double kSymmetryTol = 1e-12;

    StateMetric() = default;

    explicit StateMetric(Matrix distances) : d_(std::move(distances)) {
        detail::require(d_.rows() == d_.cols(), "StateMetric: matrix must be square");
        detail::require(d_.allFinite(), "StateMetric: entries must be finite");
        for (Eigen::Index i = 0; i < d_.rows(); ++i) {
            detail::require(d_(i, i) == 0.0, "StateMetric: diagonal must be zero");
            for (Eigen::Index j = i + 1; j < d_.cols(); ++j) {
                detail::require(d_(i, j) >= 0.0, "StateMetric: entries must be nonnegative");
                detail::require(std::abs(d_(i, j) - d_(j, i)) <= kSymmetryTol, "StateMetric: matrix must be symmetric");
            }
        }
    }

    static StateMetric zero(std::size_t n) {
        const auto k = static_cast<Eigen::Index>(n);
        return StateMetric(Matrix::Zero(k, k));
    }

    [[nodiscard]] const Matrix& distances() const noexcept { return d_; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(d_.rows()); }
    [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return d_(i, j); }

    [[nodiscard]] double sup_distance(const StateMetric& other) const {
        detail::require(other.size() == size(), "StateMetric: size mismatch");
        return size() == 0 ? 0.0 : (d_ - other.d_).cwiseAbs().maxCoeff();
    }

private:
    Matrix d_;
};

struct BisimParams {
    double c_R = 1.0;
    double c_T = 0.9;
    double p = 1.0;
    double lambda = 1.0;  ///< kInfiniteLambda selects the product coupling

    void validate() const {
        detail::require(c_R >= 0.0 && std::isfinite(c_R), "BisimParams: c_R must be >= 0");
        detail::require(c_T >= 0.0 && c_T < 1.0, "BisimParams: c_T must lie in [0, 1)");
        detail::require(p >= 1.0 && std::isfinite(p), "BisimParams: p must be >= 1");
        detail::require(lambda > 0.0, "BisimParams: lambda must be positive");
    }

    /// Bound on every iterate started from the zero metric when rewards lie in [0, 1].
    [[nodiscard]] double metric_bound() const { return c_R / (1.0 - c_T); }
};

struct OperatorResult {
    StateMetric metric;
    std::size_t sinkhorn_iterations = 0;
    std::vector<PairFailure> failures;
    std::size_t cold_iterations = 0;
    double max_shadow_diff = 0.0;
};

struct FixedPointReport {
    std::size_t iterations_used = 0;
    double final_sup_diff = 0.0;
    StateMetric metric;
    std::size_t sinkhorn_iterations = 0;
    std::size_t failed_pairs = 0;
    std::size_t cold_iterations = 0;  ///< PairwiseOptions::shadow_cold only
    double max_shadow_diff = 0.0;
};

namespace detail {

inline Matrix reward_gap(const Vector& r, double c_R) {
    const auto n = r.size();
    Matrix out(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) out(i, j) = c_R * std::abs(r(i) - r(j));
    }
    return out;
}

}  // namespace detail

/// F_pi on an explicit Markov chain (R_pi, P_pi).
inline OperatorResult apply_F_chain(const Vector& r_pi, const Matrix& p_pi, const StateMetric& d,
                                    const BisimParams& params, PotentialCache* cache = nullptr,
                                    const PairwiseOptions& opts = {}) {
    params.validate();
    detail::require(d.size() == static_cast<std::size_t>(r_pi.size()) && p_pi.rows() == r_pi.size(),
                    "apply_F: metric size does not match the chain");
    auto w = pairwise_w_matrix(p_pi, d.distances(), params.p, params.lambda, cache, opts);
    Matrix next = detail::reward_gap(r_pi, params.c_R) + params.c_T * w.w;
    next.diagonal().setZero();
    return {StateMetric(std::move(next)), w.sinkhorn_iterations, std::move(w.failures), w.cold_iterations,
            w.max_shadow_diff};
}

inline OperatorResult apply_F_pi(const FiniteMdp& mdp, const StochasticPolicy& policy, const StateMetric& d,
                                 const BisimParams& params, PotentialCache* cache = nullptr,
                                 const PairwiseOptions& opts = {}) {
    return apply_F_chain(expected_reward(mdp, policy), policy_transition(mdp, policy), d, params, cache, opts);
}

/// F with a max over actions. `caches`, when given, holds one cache per action.
inline OperatorResult apply_F(const FiniteMdp& mdp, const StateMetric& d, const BisimParams& params,
                              std::vector<PotentialCache>* caches = nullptr, const PairwiseOptions& opts = {}) {
    params.validate();
    detail::require(d.size() == mdp.num_states(), "apply_F: metric size does not match the MDP");
    detail::require(caches == nullptr || caches->size() == mdp.num_actions(), "apply_F: need one cache per action");
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    Matrix best = Matrix::Zero(n, n);
    OperatorResult out;
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        auto w = pairwise_w_matrix(mdp.transition(a), d.distances(), params.p, params.lambda,
                                   caches ? &(*caches)[a] : nullptr, opts);
        const Matrix cand =
            detail::reward_gap(mdp.rewards().col(static_cast<Eigen::Index>(a)), params.c_R) + params.c_T * w.w;
        best = best.cwiseMax(cand);
        out.sinkhorn_iterations += w.sinkhorn_iterations;
        out.failures.insert(out.failures.end(), w.failures.begin(), w.failures.end());
    }
    best.diagonal().setZero();
    out.metric = StateMetric(std::move(best));
    return out;
}

/// Applies F_pi up to n times from d_init, stopping once consecutive iterates
/// differ by at most early_tol in sup norm.
inline FixedPointReport fixed_point_chain(const Vector& r_pi, const Matrix& p_pi, const StateMetric& d_init,
                                          std::size_t n, double early_tol, const BisimParams& params,
                                          PotentialCache* cache = nullptr, const PairwiseOptions& opts = {}) {
    detail::require(n >= 1, "fixed_point_metric: n must be >= 1");
    detail::require(early_tol >= 0.0, "fixed_point_metric: early_tol must be >= 0");
    FixedPointReport rep;
    rep.metric = d_init;
    for (std::size_t it = 0; it < n; ++it) {
        auto step = apply_F_chain(r_pi, p_pi, rep.metric, params, cache, opts);
        rep.final_sup_diff = step.metric.sup_distance(rep.metric);
        rep.metric = std::move(step.metric);
        rep.sinkhorn_iterations += step.sinkhorn_iterations;
        rep.failed_pairs += step.failures.size();
        rep.cold_iterations += step.cold_iterations;
        rep.max_shadow_diff = std::max(rep.max_shadow_diff, step.max_shadow_diff);
        rep.iterations_used = it + 1;
        if (rep.final_sup_diff <= early_tol) break;
    }
    return rep;
}

inline FixedPointReport fixed_point_metric(const FiniteMdp& mdp, const StochasticPolicy& policy,
                                           const StateMetric& d_init, std::size_t n, double early_tol = 1e-3,
                                           const BisimParams& params = {}, PotentialCache* cache = nullptr,
                                           const PairwiseOptions& opts = {}) {
    detail::require(d_init.size() == mdp.num_states(), "fixed_point_metric: metric size does not match the MDP");
    return fixed_point_chain(expected_reward(mdp, policy), policy_transition(mdp, policy), d_init, n, early_tol,
                             params, cache, opts);
}

/// Smallest n with n > log((1 - g) / (1 + g)) / log(g).
inline std::size_t min_applications(double gamma) {
    detail::require(gamma > 0.0 && gamma < 1.0, "min_applications: gamma must lie in (0, 1)");
    const double bound = std::log((1.0 - gamma) / (1.0 + gamma)) / std::log(gamma);
    return static_cast<std::size_t>(std::floor(bound)) + 1;
}

/// gamma^n / (1 - gamma).
inline double truncation_error(double gamma, std::size_t n) {
    return std::pow(gamma, static_cast<double>(n)) / (1.0 - gamma);
}

}  // namespace sinkbisim
