#pragma once

// Seeded generators for block-structured MDPs. States are grouped into m
// equivalence classes (ECs) of equal size; EC b holds states
// [b * k, (b + 1) * k) with k = |S| / m. Every transition specifies a target
// EC per (state, action), and the landing state inside that EC is drawn from
// a uniform simplex sample, so all states of one EC behave identically at
// the EC level.

#include "sinkbisim/mdp.hpp"
#include "sinkbisim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sinkbisim {

struct GeneratedMdp {
    FiniteMdp mdp;
    std::vector<std::size_t> ec_labels;
    std::size_t num_classes = 0;
    std::string family;
    std::uint64_t seed = 0;
};

/// Which reward level a0 earns in EC b (0-indexed) of the dense family.
enum class DenseRewardMapping {
    shifted,  ///< r_b: the first EC earns r_0 = e, the last earns r_{m-1} = 1
    aligned,  ///< r_{b+1}, clipped at r_{m-1}
};

namespace detail {

inline void check_blocks(std::size_t num_states, std::size_t m) {
    require(m >= 1 && num_states >= 1, "envgen: need at least one state and one class");
    require(num_states % m == 0, "envgen: num_states must be divisible by the number of classes");
}

inline std::vector<std::size_t> block_labels(std::size_t num_states, std::size_t m) {
    const std::size_t k = num_states / m;
    std::vector<std::size_t> out(num_states);
    for (std::size_t s = 0; s < num_states; ++s) out[s] = s / k;
    return out;
}

/// Adds `mass` spread over EC `target` by a fresh simplex sample.
inline void land_in_block(Matrix& p, std::size_t state, std::size_t target, std::size_t k, double mass,
                          CounterRng& rng) {
    const auto w = sample_simplex(k, rng);
    for (std::size_t t = 0; t < k; ++t) {
        p(static_cast<Eigen::Index>(state), static_cast<Eigen::Index>(target * k + t)) += mass * w[t];
    }
}

}  // namespace detail

/// Sparse-reward ring: a0 advances one EC (the last EC loops on itself), a1
/// resets to EC 0; reward 1 only for a0 in the last EC.
inline GeneratedMdp gen_ring_sparse(std::size_t num_states, std::size_t m, std::uint64_t seed, double gamma = 0.9) {
    detail::check_blocks(num_states, m);
    const std::size_t k = num_states / m;
    const auto n = static_cast<Eigen::Index>(num_states);
    std::vector<Matrix> p(2, Matrix::Zero(n, n));
    Matrix r = Matrix::Zero(n, 2);
    CounterRng rng(seed, streams::kTransitions);
    for (std::size_t s = 0; s < num_states; ++s) {
        const std::size_t b = s / k;
        detail::land_in_block(p[0], s, b + 1 < m ? b + 1 : b, k, 1.0, rng);
        detail::land_in_block(p[1], s, 0, k, 1.0, rng);
        if (b + 1 == m) r(static_cast<Eigen::Index>(s), 0) = 1.0;
    }
    return {FiniteMdp(std::move(p), std::move(r), gamma), detail::block_labels(num_states, m), m, "ring", seed};
}

/// r_0 = e, r_{i+1} = gamma r_i + e with e = (1 - gamma) / (1 - gamma^m), so r_{m-1} = 1.
inline std::vector<double> dense_reward_levels(double gamma, std::size_t m) {
    detail::require(m >= 1, "dense_reward_levels: m must be >= 1");
    detail::require(gamma >= 0.0 && gamma < 1.0, "dense_reward_levels: gamma must lie in [0, 1)");
    const double e = (1.0 - gamma) / (1.0 - std::pow(gamma, static_cast<double>(m)));
    std::vector<double> r(m);
    r[0] = e;
    for (std::size_t i = 1; i < m; ++i) r[i] = gamma * r[i - 1] + e;
    // The recursion telescopes to exactly 1; only rounding can push past it.
    for (auto& x : r) x = std::min(x, 1.0);
    return r;
}

/// Dense-reward chain: a0 advances one EC and earns a reward level, a1 stays
/// in the current EC with reward 0; the last EC is absorbing under both actions.
inline GeneratedMdp gen_dense_reward(std::size_t num_states, std::size_t m, double gamma, std::uint64_t seed,
                                     DenseRewardMapping mapping = DenseRewardMapping::shifted) {
    detail::check_blocks(num_states, m);
    const std::size_t k = num_states / m;
    const auto n = static_cast<Eigen::Index>(num_states);
    const auto levels = dense_reward_levels(gamma, m);
    std::vector<Matrix> p(2, Matrix::Zero(n, n));
    Matrix r = Matrix::Zero(n, 2);
    CounterRng rng(seed, streams::kTransitions);
    for (std::size_t s = 0; s < num_states; ++s) {
        const std::size_t b = s / k;
        detail::land_in_block(p[0], s, b + 1 < m ? b + 1 : b, k, 1.0, rng);
        detail::land_in_block(p[1], s, b, k, 1.0, rng);
        const std::size_t level = mapping == DenseRewardMapping::shifted ? b : std::min(b + 1, m - 1);
        r(static_cast<Eigen::Index>(s), 0) = levels[level];
    }
    return {FiniteMdp(std::move(p), std::move(r), gamma), detail::block_labels(num_states, m), m, "dense", seed};
}

/// Parameters drawn for the random chain, per EC.
struct ChainParams {
    std::vector<double> jump_prob;          ///< p_b ~ U(0, 0.25)
    std::vector<std::size_t> jump_target;   ///< EC reached with probability p_b
    std::vector<std::size_t> optimal_action;
};

inline ChainParams random_chain_params(std::size_t m, std::size_t num_actions, std::uint64_t seed) {
    detail::require(m >= 3, "gen_random_chain: need at least 3 classes");
    detail::require(num_actions >= 2, "gen_random_chain: need at least 2 actions");
    ChainParams cp;
    CounterRng rng(seed, streams::kChainParams);
    for (std::size_t b = 0; b < m; ++b) {
        cp.optimal_action.push_back((b + 1) % num_actions);
        double pb = 0.0;
        do {
            pb = rng.uniform(0.0, 0.25);
        } while (pb <= 0.0);
        cp.jump_prob.push_back(pb);
        const std::size_t next = b + 1 < m ? b + 1 : b;
        std::vector<std::size_t> pool;
        for (std::size_t c = 0; c < m; ++c) {
            if (c != b && c != next) pool.push_back(c);
        }
        cp.jump_target.push_back(pool[rng.below(pool.size())]);
    }
    return cp;
}

/// Random chain: in EC b the optimal action (b + 1) % |A| advances one EC
/// with probability 1 - p_b (the last EC stays put) and otherwise jumps to a
/// fixed, randomly chosen other EC; any other action resets to EC 0. Reward 1
/// only for the optimal action in the last EC.
inline GeneratedMdp gen_random_chain(std::size_t num_states, std::size_t m, std::size_t num_actions,
                                     std::uint64_t seed, double gamma = 0.9) {
    detail::check_blocks(num_states, m);
    const std::size_t k = num_states / m;
    const auto n = static_cast<Eigen::Index>(num_states);
    const ChainParams cp = random_chain_params(m, num_actions, seed);
    std::vector<Matrix> p(num_actions, Matrix::Zero(n, n));
    Matrix r = Matrix::Zero(n, static_cast<Eigen::Index>(num_actions));
    CounterRng rng(seed, streams::kTransitions);
    for (std::size_t s = 0; s < num_states; ++s) {
        const std::size_t b = s / k;
        const std::size_t best = cp.optimal_action[b];
        for (std::size_t a = 0; a < num_actions; ++a) {
            if (a != best) {
                detail::land_in_block(p[a], s, 0, k, 1.0, rng);
                continue;
            }
            const std::size_t next = b + 1 < m ? b + 1 : b;
            detail::land_in_block(p[a], s, next, k, 1.0 - cp.jump_prob[b], rng);
            detail::land_in_block(p[a], s, cp.jump_target[b], k, cp.jump_prob[b], rng);
        }
        if (b + 1 == m) r(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(best)) = 1.0;
    }
    return {FiniteMdp(std::move(p), std::move(r), gamma), detail::block_labels(num_states, m), m, "random_chain", seed};
}

/// Mixes every transition row with an independent uniform sample from the
/// (|S| - 1)-simplex: P <- (1 - weight) P + weight Q. EC labels are kept.
inline GeneratedMdp perturb_transitions(const GeneratedMdp& g, double weight, std::uint64_t seed) {
    detail::require(weight >= 0.0 && weight <= 1.0, "perturb_transitions: weight must lie in [0, 1]");
    const std::size_t n = g.mdp.num_states();
    std::vector<Matrix> p = g.mdp.transitions();
    if (weight > 0.0) {
        CounterRng rng(seed, streams::kPerturbation);
        for (auto& pa : p) {
            for (std::size_t s = 0; s < n; ++s) {
                const auto q = sample_simplex(n, rng);
                for (std::size_t t = 0; t < n; ++t) {
                    auto& x = pa(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
                    x = (1.0 - weight) * x + weight * q[t];
                }
            }
        }
    }
    GeneratedMdp out{FiniteMdp(std::move(p), g.mdp.rewards(), g.mdp.gamma()), g.ec_labels, g.num_classes, g.family,
                     g.seed};
    return out;
}

enum class Family { ring, dense, random_chain };

inline Family parse_family(const std::string& name) {
    if (name == "ring") return Family::ring;
    if (name == "dense") return Family::dense;
    if (name == "random_chain") return Family::random_chain;
    throw std::invalid_argument("unknown MDP family: " + name);
}

inline std::string family_name(Family f) {
    switch (f) {
        case Family::ring: return "ring";
        case Family::dense: return "dense";
        case Family::random_chain: return "random_chain";
    }
    return "ring";
}

struct EnvConfig {
    Family family = Family::ring;
    std::size_t num_states = 200;
    std::size_t num_classes = 20;
    std::size_t num_actions = 10;  ///< random_chain only
    double gamma = 0.9;
    double perturbation = 0.0;
    DenseRewardMapping mapping = DenseRewardMapping::shifted;
};

inline GeneratedMdp generate(const EnvConfig& cfg, std::uint64_t seed) {
    GeneratedMdp g = [&] {
        switch (cfg.family) {
            case Family::dense: return gen_dense_reward(cfg.num_states, cfg.num_classes, cfg.gamma, seed, cfg.mapping);
            case Family::random_chain:
                return gen_random_chain(cfg.num_states, cfg.num_classes, cfg.num_actions, seed, cfg.gamma);
            case Family::ring: break;
        }
        return gen_ring_sparse(cfg.num_states, cfg.num_classes, seed, cfg.gamma);
    }();
    if (cfg.perturbation > 0.0) g = perturb_transitions(g, cfg.perturbation, seed);
    return g;
}

}  // namespace sinkbisim
