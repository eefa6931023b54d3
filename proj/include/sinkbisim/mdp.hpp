#pragma once

// Finite discounted MDPs: representation, Bellman operators, exact policy
// evaluation and improvement, and policy-distance utilities.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sinkbisim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kStochasticTol = 1e-12;
/// Policy evaluation switches from a dense LU solve to value iteration above this size.
inline constexpr std::size_t kDirectSolveLimit = 4096;

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

inline bool rows_stochastic(const Matrix& m, double tol) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double x = m(r, c);
            if (!(x >= 0.0) || !std::isfinite(x)) return false;
            sum += x;
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

}  // namespace detail

/// Dense finite MDP. transitions[a](s, s') = P(s' | s, a), rewards(s, a) in [0, 1].
class FiniteMdp {
public:
    FiniteMdp(std::vector<Matrix> transitions, Matrix rewards, double gamma)
        : transitions_(std::move(transitions)), rewards_(std::move(rewards)), gamma_(gamma) {
        detail::require(!transitions_.empty(), "FiniteMdp: need at least one action");
        const auto n = transitions_.front().rows();
        detail::require(n > 0, "FiniteMdp: need at least one state");
        detail::require(rewards_.rows() == n && rewards_.cols() == static_cast<Eigen::Index>(transitions_.size()),
                        "FiniteMdp: rewards must be |S| x |A|");
        for (std::size_t a = 0; a < transitions_.size(); ++a) {
            const auto& p = transitions_[a];
            detail::require(p.rows() == n && p.cols() == n, "FiniteMdp: transition matrices must be |S| x |S|");
            detail::require(detail::rows_stochastic(p, kStochasticTol),
                            "FiniteMdp: transition rows for action " + std::to_string(a) + " are not stochastic");
        }
        for (Eigen::Index i = 0; i < rewards_.size(); ++i) {
            const double r = rewards_.data()[i];
            detail::require(r >= 0.0 && r <= 1.0, "FiniteMdp: rewards must lie in [0, 1]");
        }
        detail::require(gamma_ >= 0.0 && gamma_ < 1.0, "FiniteMdp: discount must lie in [0, 1)");
    }

    [[nodiscard]] std::size_t num_states() const noexcept { return static_cast<std::size_t>(rewards_.rows()); }
    [[nodiscard]] std::size_t num_actions() const noexcept { return transitions_.size(); }
    [[nodiscard]] double gamma() const noexcept { return gamma_; }
    [[nodiscard]] const Matrix& transition(std::size_t action) const { return transitions_.at(action); }
    [[nodiscard]] const std::vector<Matrix>& transitions() const noexcept { return transitions_; }
    [[nodiscard]] const Matrix& rewards() const noexcept { return rewards_; }

    /// Upper bound on any value function: 1 / (1 - gamma).
    [[nodiscard]] double value_bound() const noexcept { return 1.0 / (1.0 - gamma_); }

private:
    std::vector<Matrix> transitions_;
    Matrix rewards_;
    double gamma_;
};

/// Row-stochastic |S| x |A| action distribution.
class StochasticPolicy {
public:
    explicit StochasticPolicy(Matrix probs) : probs_(std::move(probs)) {
        detail::require(probs_.rows() > 0 && probs_.cols() > 0, "StochasticPolicy: empty matrix");
        detail::require(detail::rows_stochastic(probs_, kStochasticTol), "StochasticPolicy: rows must be distributions");
    }

    static StochasticPolicy uniform(std::size_t num_states, std::size_t num_actions) {
        return StochasticPolicy(Matrix::Constant(static_cast<Eigen::Index>(num_states),
                                                 static_cast<Eigen::Index>(num_actions),
                                                 1.0 / static_cast<double>(num_actions)));
    }

    static StochasticPolicy deterministic(const std::vector<std::size_t>& actions, std::size_t num_actions) {
        Matrix m = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), static_cast<Eigen::Index>(num_actions));
        for (std::size_t s = 0; s < actions.size(); ++s) {
            detail::require(actions[s] < num_actions, "StochasticPolicy: action index out of range");
            m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(actions[s])) = 1.0;
        }
        return StochasticPolicy(std::move(m));
    }

    [[nodiscard]] const Matrix& probs() const noexcept { return probs_; }
    [[nodiscard]] std::size_t num_states() const noexcept { return static_cast<std::size_t>(probs_.rows()); }
    [[nodiscard]] std::size_t num_actions() const noexcept { return static_cast<std::size_t>(probs_.cols()); }
    [[nodiscard]] double operator()(std::size_t s, std::size_t a) const {
        return probs_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }

private:
    Matrix probs_;
};

struct ValueFunction {
    Vector values;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
    [[nodiscard]] double operator[](std::size_t s) const { return values(static_cast<Eigen::Index>(s)); }
};

namespace detail {

inline void check_dims(const FiniteMdp& mdp, const StochasticPolicy& policy) {
    require(policy.num_states() == mdp.num_states() && policy.num_actions() == mdp.num_actions(),
            "policy shape does not match the MDP");
}

inline void check_dims(const FiniteMdp& mdp, const Vector& v) {
    require(static_cast<std::size_t>(v.size()) == mdp.num_states(), "value function size does not match the MDP");
}

}  // namespace detail

/// R_pi(s) = sum_a pi(s, a) R(s, a).
inline Vector expected_reward(const FiniteMdp& mdp, const StochasticPolicy& policy) {
    detail::check_dims(mdp, policy);
    return mdp.rewards().cwiseProduct(policy.probs()).rowwise().sum();
}

/// P_pi(s, s') = sum_a pi(s, a) P(s' | s, a).
inline Matrix policy_transition(const FiniteMdp& mdp, const StochasticPolicy& policy) {
    detail::check_dims(mdp, policy);
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    Matrix out = Matrix::Zero(n, n);
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        out.noalias() += policy.probs().col(static_cast<Eigen::Index>(a)).asDiagonal() * mdp.transition(a);
    }
    return out;
}

/// Solves V = r + gamma P V for a Markov reward process. Dense LU below
/// kDirectSolveLimit states, value iteration above.
inline Vector evaluate_markov_chain(const Vector& rewards, const Matrix& transitions, double gamma, double tol) {
    detail::require(tol > 0.0, "policy evaluation: tol must be positive");
    detail::require(gamma >= 0.0 && gamma < 1.0, "policy evaluation: discount must lie in [0, 1)");
    const auto n = rewards.size();
    detail::require(transitions.rows() == n && transitions.cols() == n, "policy evaluation: shape mismatch");
    if (static_cast<std::size_t>(n) <= kDirectSolveLimit) {
        const Matrix system = Matrix::Identity(n, n) - gamma * transitions;
        Eigen::PartialPivLU<Matrix> lu(system);
        Vector v = lu.solve(rewards);
        if (!v.allFinite()) throw std::runtime_error("policy evaluation: singular system");
        // One refinement step keeps the residual at round-off level.
        const Vector residual = rewards - system * v;
        v += lu.solve(residual);
        return v;
    }
    Vector v = Vector::Zero(n);
    const double stop = tol * (1.0 - gamma);
    for (;;) {
        Vector next = rewards + gamma * (transitions * v);
        const double diff = (next - v).cwiseAbs().maxCoeff();
        v.swap(next);
        // ||v - T v|| <= gamma * diff after the swap.
        if (diff <= stop) return v;
    }
}

/// Exact V^pi with ||V - T_pi V||_inf <= tol (1 - gamma).
inline ValueFunction policy_evaluation(const FiniteMdp& mdp, const StochasticPolicy& policy, double tol = 1e-10) {
    return {evaluate_markov_chain(expected_reward(mdp, policy), policy_transition(mdp, policy), mdp.gamma(), tol)};
}

/// Q(s, a) = R(s, a) + gamma sum_s' P(s'|s,a) V(s').
inline Matrix q_values(const FiniteMdp& mdp, const Vector& v) {
    detail::check_dims(mdp, v);
    Matrix q = mdp.rewards();
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        q.col(static_cast<Eigen::Index>(a)).noalias() += mdp.gamma() * (mdp.transition(a) * v);
    }
    return q;
}

/// T_pi V.
inline Vector bellman_policy(const FiniteMdp& mdp, const StochasticPolicy& policy, const Vector& v) {
    detail::check_dims(mdp, policy);
    return q_values(mdp, v).cwiseProduct(policy.probs()).rowwise().sum();
}

/// T V = max_a Q(., a).
inline Vector bellman_optimal(const FiniteMdp& mdp, const Vector& v) {
    return q_values(mdp, v).rowwise().maxCoeff();
}

namespace detail {

/// Lowest-index argmax per row.
inline std::vector<std::size_t> row_argmax(const Matrix& q) {
    std::vector<std::size_t> out(static_cast<std::size_t>(q.rows()), 0);
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a) {
            if (q(s, a) > q(s, best)) best = a;
        }
        out[static_cast<std::size_t>(s)] = static_cast<std::size_t>(best);
    }
    return out;
}

}  // namespace detail

/// Deterministic greedy policy for V; ties go to the lowest action index.
inline StochasticPolicy greedy_policy(const FiniteMdp& mdp, const ValueFunction& v) {
    detail::require(v.values.allFinite(), "greedy_policy: value function must be finite");
    return StochasticPolicy::deterministic(detail::row_argmax(q_values(mdp, v.values)), mdp.num_actions());
}

/// V* by policy iteration with exact evaluation, followed by value-iteration
/// polishing until ||V - TV||_inf <= tol.
inline ValueFunction optimal_values(const FiniteMdp& mdp, double tol = 1e-10) {
    detail::require(tol > 0.0, "optimal_values: tol must be positive");
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    std::vector<std::size_t> actions(mdp.num_states(), 0);
    Vector v = Vector::Zero(n);
    // Policy iteration terminates in finitely many steps; the cap only guards
    // against tie flip-flopping under round-off.
    const std::size_t max_rounds = 10 * mdp.num_states() * mdp.num_actions() + 100;
    for (std::size_t round = 0; round < max_rounds; ++round) {
        v = policy_evaluation(mdp, StochasticPolicy::deterministic(actions, mdp.num_actions()), tol * 1e-2).values;
        const Matrix q = q_values(mdp, v);
        bool changed = false;
        for (Eigen::Index s = 0; s < n; ++s) {
            const auto current = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(s)]);
            Eigen::Index best = current;
            for (Eigen::Index a = 0; a < q.cols(); ++a) {
                if (q(s, a) > q(s, best) + 1e-13) best = a;
            }
            if (best != current) {
                actions[static_cast<std::size_t>(s)] = static_cast<std::size_t>(best);
                changed = true;
            }
        }
        if (!changed) break;
    }
    for (;;) {
        Vector next = bellman_optimal(mdp, v);
        const double residual = (next - v).cwiseAbs().maxCoeff();
        if (residual <= tol) break;
        v.swap(next);
    }
    return {v};
}

/// sup_s |(T_pi V)(s) - (T V)(s)|.
inline double bellman_residual(const FiniteMdp& mdp, const StochasticPolicy& policy, const ValueFunction& v) {
    detail::check_dims(mdp, policy);
    const Matrix q = q_values(mdp, v.values);
    const Vector tpi = q.cwiseProduct(policy.probs()).rowwise().sum();
    const Vector t = q.rowwise().maxCoeff();
    return (tpi - t).cwiseAbs().maxCoeff();
}

/// Worst-case per-state total variation distance, max_s 0.5 sum_a |pi - pi'|.
inline double tv_distance_policies(const StochasticPolicy& a, const StochasticPolicy& b) {
    detail::require(a.num_states() == b.num_states() && a.num_actions() == b.num_actions(),
                    "tv_distance_policies: shape mismatch");
    return 0.5 * (a.probs() - b.probs()).cwiseAbs().rowwise().sum().maxCoeff();
}

/// Row-wise (1 - alpha) pi + alpha pi_g.
inline StochasticPolicy mix_policies(const StochasticPolicy& pi, const StochasticPolicy& pi_g, double alpha) {
    detail::require(alpha >= 0.0 && alpha <= 1.0, "mix_policies: alpha must lie in [0, 1]");
    detail::require(pi.num_states() == pi_g.num_states() && pi.num_actions() == pi_g.num_actions(),
                    "mix_policies: shape mismatch");
    if (alpha == 0.0) return pi;
    if (alpha == 1.0) return pi_g;
    return StochasticPolicy((1.0 - alpha) * pi.probs() + alpha * pi_g.probs());
}

}  // namespace sinkbisim
