#pragma once

// Approximate policy iteration driven by bisimulation-metric aggregation.
//
// Each step: metric for pi_k (cold from zero for the naive variant, warm from
// the previous metric otherwise), partition, evaluate pi_k on the abstract
// chain, lift, take a noisy greedy step on the lifted values, then replace or
// mix the policy.

#include "sinkbisim/aggregate.hpp"
#include "sinkbisim/bisim.hpp"
#include "sinkbisim/envgen.hpp"
#include "sinkbisim/mdp.hpp"
#include "sinkbisim/measures.hpp"
#include "sinkbisim/rng.hpp"
#include "sinkbisim/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace sinkbisim {

enum class AlphaMode { naive, fixed, decay };
enum class PartitionMode { epsilon, pam };

struct AlphaSchedule {
    AlphaMode mode = AlphaMode::fixed;
    double alpha = 1.0;                        ///< fixed mode
    double alpha_min = 1.0 / 64.0;             ///< decay floor
    double power = 0.8;                        ///< decay exponent

    void validate() const {
        if (mode == AlphaMode::fixed) {
            detail::require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
        }
        if (mode == AlphaMode::decay) {
            detail::require(alpha_min > 0.0 && alpha_min <= 1.0, "alpha_min must lie in (0, 1]");
            detail::require(power > 0.0, "decay power must be positive");
        }
    }
};

/// alpha_k for k >= 1: constant, max(alpha_min, k^-power), or 1 for the naive variant.
inline double alpha_schedule(const AlphaSchedule& s, std::size_t k) {
    detail::require(k >= 1, "alpha_schedule: k must be >= 1");
    s.validate();
    switch (s.mode) {
        case AlphaMode::naive: return 1.0;
        case AlphaMode::fixed: return s.alpha;
        case AlphaMode::decay: return std::max(s.alpha_min, std::pow(static_cast<double>(k), -s.power));
    }
    return 1.0;
}

struct ApiConfig {
    EnvConfig env;
    BisimParams bisim;                  ///< c_T is normally the discount
    double epsilon = 0.1;
    std::size_t n = 28;                 ///< operator applications per step
    double early_tol = 1e-3;
    AlphaSchedule alpha;
    PartitionMode partition = PartitionMode::epsilon;
    std::size_t pam_k = 30;
    double delta_lo = 0.05;
    double delta_hi = 0.1;
    std::size_t num_steps = 1000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    bool warm_potentials = true;        ///< reuse Sinkhorn potentials across solves
    bool fallback_to_product = true;    ///< failed pairs take the product-coupling value
    /// Compute NMI of an m-medoid partition of the metric against the EC
    /// labels every this many steps (0: final step only).
    std::size_t nmi_every = 0;
    /// Re-solve every warm-started pair cold as well (diagnostic, slow).
    bool shadow_cold = false;
    SinkhornOptions sinkhorn;

    void validate() const {
        bisim.validate();
        alpha.validate();
        detail::require(epsilon >= 0.0, "ApiConfig: epsilon must be >= 0");
        detail::require(n >= 1, "ApiConfig: n must be >= 1");
        detail::require(early_tol >= 0.0, "ApiConfig: early_tol must be >= 0");
        detail::require(delta_lo > 0.0 && delta_lo < delta_hi && delta_hi < 1.0,
                        "ApiConfig: delta range must satisfy 0 < lo < hi < 1");
        detail::require(partition != PartitionMode::pam || pam_k >= 1, "ApiConfig: pam_k must be >= 1");
        detail::require(threads >= 1, "ApiConfig: threads must be >= 1");
    }
};

struct StepRecord {
    std::size_t step = 0;
    std::uint64_t seed = 0;
    double gap_vstar = 0.0;            ///< ||V* - V^{pi_k}||
    double metric_value_gap = 0.0;     ///< max |d_k - |V^{pi_k}(i) - V^{pi_k}(j)||
    std::size_t num_partitions = 0;
    double alpha_k = 1.0;              ///< mixture weight used to form pi_{k+1}
    double delta_achieved = 0.0;       ///< ||T_{pi_g} V~ - T V~||
    std::size_t sinkhorn_iters = 0;
    double wall_ms = 0.0;
    double metric_sup_change = 0.0;    ///< ||d_k - d_{k-1}||, with d_{-1} = 0
    double delta_pe = 0.0;             ///< ||V^{pi_k} - lifted V~||
    double partition_radius = 0.0;     ///< max distance of a state to its medoid
    std::size_t metric_iterations = 0;
    std::size_t failed_pairs = 0;
    bool calibrated = true;
    double nmi = std::numeric_limits<double>::quiet_NaN();
    std::size_t cold_sinkhorn_iters = 0;  ///< shadow_cold only
    double shadow_diff = 0.0;             ///< shadow_cold only
};

struct NoisyGreedyResult {
    StochasticPolicy policy;
    double achieved_delta = 0.0;
    double sigma = 0.0;
    bool calibrated = false;
    std::size_t evaluations = 0;
};

namespace detail {

inline StochasticPolicy perturbed_policy(const StochasticPolicy& greedy, const Matrix& noise, double sigma) {
    Matrix probs = (greedy.probs() + sigma * noise).cwiseMax(0.0);
    for (Eigen::Index s = 0; s < probs.rows(); ++s) {
        const double total = probs.row(s).sum();
        if (total > 0.0) {
            probs.row(s) /= total;
        } else {
            probs.row(s) = greedy.probs().row(s);
        }
    }
    return StochasticPolicy(std::move(probs));
}

}  // namespace detail

/// Greedy policy for V perturbed by Gaussian noise of scale sigma (clipped and
/// renormalized), with sigma searched so that ||T_pi V - T V|| lands in
/// [lo, hi]. One noise draw is shared by all sigma candidates; the search
/// doubles sigma until the residual reaches the range, then bisects, for at
/// most max_evals residual evaluations. If the range is never hit the candidate
/// closest to it is returned with calibrated = false.
inline NoisyGreedyResult noisy_greedy(const FiniteMdp& mdp, const ValueFunction& v, double lo, double hi,
                                      CounterRng& rng, std::size_t max_evals = 50, double sigma0 = 0.1) {
    detail::require(lo > 0.0 && lo < hi, "noisy_greedy: need 0 < lo < hi");
    detail::require(max_evals >= 1, "noisy_greedy: max_evals must be >= 1");
    const StochasticPolicy greedy = greedy_policy(mdp, v);
    const auto ns = static_cast<Eigen::Index>(mdp.num_states());
    const auto na = static_cast<Eigen::Index>(mdp.num_actions());
    Matrix noise(ns, na);
    for (Eigen::Index s = 0; s < ns; ++s) {
        for (Eigen::Index a = 0; a < na; ++a) noise(s, a) = rng.normal();
    }

    NoisyGreedyResult best{greedy, bellman_residual(mdp, greedy, v), 0.0, false, 1};
    double best_miss = lo - best.achieved_delta;
    std::size_t evals = 1;
    const auto miss = [&](double r) { return r < lo ? lo - r : (r > hi ? r - hi : 0.0); };
    const auto try_sigma = [&](double sigma) {
        StochasticPolicy cand = detail::perturbed_policy(greedy, noise, sigma);
        const double r = bellman_residual(mdp, cand, v);
        ++evals;
        if (miss(r) < best_miss) {
            best_miss = miss(r);
            best = {std::move(cand), r, sigma, false, 0};
        }
        return r;
    };
    if (best_miss <= 0.0) {
        best.calibrated = true;
        best.evaluations = evals;
        return best;
    }

    // sigma = 0 is the greedy policy, whose residual is below the range.
    double low = 0.0;
    double high = std::numeric_limits<double>::infinity();
    double sigma = sigma0;
    while (evals < max_evals) {
        const double r = try_sigma(sigma);
        if (miss(r) <= 0.0) break;
        (r < lo ? low : high) = sigma;
        sigma = std::isinf(high) ? 2.0 * sigma : 0.5 * (low + high);
    }
    best.calibrated = best_miss <= 0.0;
    best.evaluations = evals;
    return best;
}

struct ApiRun {
    std::vector<StepRecord> steps;
    StochasticPolicy final_policy = StochasticPolicy::uniform(1, 1);
    StateMetric final_metric;
    Abstraction final_abstraction;
    ValueFunction v_star;
    std::vector<std::string> warnings;
    std::vector<std::size_t> ec_labels;
};

/// Runs API on a given MDP. The naive variant recomputes the metric from zero
/// every step and replaces the policy; the alpha variants warm-start the
/// metric and mix policies.
inline ApiRun run_api_on(const FiniteMdp& mdp, const ApiConfig& cfg,
                         const std::vector<std::size_t>& ec_labels = {}) {
    cfg.validate();
    using Clock = std::chrono::steady_clock;
    const std::size_t ns = mdp.num_states();
    const bool naive = cfg.alpha.mode == AlphaMode::naive;
    detail::require(cfg.partition != PartitionMode::pam || cfg.pam_k <= ns, "ApiConfig: pam_k exceeds |S|");

    ApiRun run;
    run.ec_labels = ec_labels;
    run.v_star = optimal_values(mdp);
    StochasticPolicy pi = StochasticPolicy::uniform(ns, mdp.num_actions());
    StateMetric metric = StateMetric::zero(ns);
    std::optional<PotentialCache> cache;
    if (cfg.warm_potentials) cache.emplace(ns);
    PairwiseOptions popts;
    popts.sinkhorn = cfg.sinkhorn;
    popts.threads = cfg.threads;
    popts.fallback_to_product = cfg.fallback_to_product;
    popts.shadow_cold = cfg.shadow_cold;
    const CounterRng noise_root(cfg.seed, streams::kGreedyNoise);
    const std::size_t m = ec_labels.empty() ? 0 : *std::max_element(ec_labels.begin(), ec_labels.end()) + 1;

    for (std::size_t k = 0; k < cfg.num_steps; ++k) {
        StepRecord rec;
        rec.step = k;
        rec.seed = cfg.seed;
        const auto t0 = Clock::now();

        const Vector r_pi = expected_reward(mdp, pi);
        const Matrix p_pi = policy_transition(mdp, pi);
        const StateMetric start = naive ? StateMetric::zero(ns) : metric;
        FixedPointReport fp = fixed_point_chain(r_pi, p_pi, start, cfg.n, cfg.early_tol, cfg.bisim,
                                                cache ? &*cache : nullptr, popts);
        rec.metric_iterations = fp.iterations_used;
        rec.sinkhorn_iters = fp.sinkhorn_iterations;
        rec.failed_pairs = fp.failed_pairs;
        rec.cold_sinkhorn_iters = fp.cold_iterations;
        rec.shadow_diff = fp.max_shadow_diff;
        rec.metric_sup_change = fp.metric.sup_distance(metric);
        metric = std::move(fp.metric);
        if (fp.failed_pairs > 0) {
            run.warnings.push_back("step " + std::to_string(k) + ": " + std::to_string(fp.failed_pairs) +
                                   " transport pairs failed");
        }

        Abstraction phi = cfg.partition == PartitionMode::epsilon ? epsilon_aggregate(metric, cfg.epsilon)
                                                                  : pam_partition(metric, cfg.pam_k, cfg.seed);
        rec.num_partitions = phi.num_partitions;
        rec.partition_radius = phi.radius(metric);
        const AbstractMdpView view = build_abstract_chain(r_pi, p_pi, phi);
        const ValueFunction v_tilde = lift_values(evaluate_abstract(view, mdp.gamma()), phi);

        CounterRng noise = noise_root.split(static_cast<std::uint64_t>(k));
        NoisyGreedyResult g = noisy_greedy(mdp, v_tilde, cfg.delta_lo, cfg.delta_hi, noise);
        rec.delta_achieved = g.achieved_delta;
        rec.calibrated = g.calibrated;
        if (!g.calibrated) {
            run.warnings.push_back("step " + std::to_string(k) + ": noise calibration missed the residual range");
        }
        rec.alpha_k = alpha_schedule(cfg.alpha, k + 1);
        StochasticPolicy next = mix_policies(pi, g.policy, rec.alpha_k);
        rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

        // Diagnostics against exact values of pi_k; not timed.
        const Vector v_pi = evaluate_markov_chain(r_pi, p_pi, mdp.gamma(), 1e-10);
        rec.gap_vstar = (run.v_star.values - v_pi).cwiseAbs().maxCoeff();
        rec.metric_value_gap = metric_value_gap(metric, ValueFunction{v_pi});
        rec.delta_pe = (v_pi - v_tilde.values).cwiseAbs().maxCoeff();
        const bool last = k + 1 == cfg.num_steps;
        if (m > 0 && m <= ns && (last || (cfg.nmi_every > 0 && k % cfg.nmi_every == 0))) {
            rec.nmi = nmi(pam_partition(metric, m, cfg.seed).labels, ec_labels);
        }

        run.steps.push_back(rec);
        if (last) run.final_abstraction = std::move(phi);
        pi = std::move(next);
    }
    run.final_policy = pi;
    run.final_metric = metric;
    return run;
}

/// Generates the configured MDP for cfg.seed and runs API on it.
inline ApiRun run_api(const ApiConfig& cfg) {
    const GeneratedMdp g = generate(cfg.env, cfg.seed);
    return run_api_on(g.mdp, cfg, g.ec_labels);
}

/// Upper bound on the asymptotic optimality gap:
/// delta / (1 - g)^2 + 2 g (2 eps + c_n) / (1 - g)^3 with c_n = g^n / (1 - g).
inline double asymptotic_gap_bound(double gamma, double delta, double epsilon, std::size_t n) {
    const double one = 1.0 - gamma;
    return delta / (one * one) + 2.0 * gamma * (2.0 * epsilon + truncation_error(gamma, n)) / (one * one * one);
}

/// Bound on ||V^{pi_{k+1}} - V*|| from one mixture step:
/// (1 - a + a g) gap_k + a (delta_gi + 2 g delta_pe) / (1 - g).
inline double single_step_bound(double gamma, double alpha, double gap_k, double delta_gi, double delta_pe) {
    return (1.0 - alpha + alpha * gamma) * gap_k + alpha * (delta_gi + 2.0 * gamma * delta_pe) / (1.0 - gamma);
}

}  // namespace sinkbisim
