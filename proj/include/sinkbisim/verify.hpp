#pragma once

// Property and reproduction checks, one per acceptance criterion. Shared by
// the acceptance binary and the `verify` CLI subcommand. Oracles used here
// (exact simplex transport, double-loop product costs, exact policy
// evaluation) are independent of the Sinkhorn code paths under test.

#include "sinkbisim/aggregate.hpp"
#include "sinkbisim/api.hpp"
#include "sinkbisim/bisim.hpp"
#include "sinkbisim/envgen.hpp"
#include "sinkbisim/exact_transport.hpp"
#include "sinkbisim/measures.hpp"
#include "sinkbisim/rng.hpp"
#include "sinkbisim/sharpness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace sinkbisim::verify {

struct CheckResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Sizes for the experiment-level checks (8 to 13).
struct Scale {
    std::size_t num_states = 60;
    std::size_t num_classes = 20;
    std::size_t num_seeds = 10;
    std::size_t steps = 500;        ///< API runs behind checks 8 to 11 and 13
    std::size_t warm_steps = 300;   ///< check 7
    std::size_t window = 200;       ///< trailing window for oscillation and final-gap statistics
    std::size_t bound_window = 250; ///< trailing window for the asymptotic bound
    /// Medoid runs behind check 13. Perturbed rows are dense, so each Sinkhorn
    /// solve costs O(|S|^2) and a step O(|S|^4); they get their own size.
    std::size_t pam_states = 40;
    std::size_t pam_steps = 300;
    std::size_t pam_window = 100;
    unsigned threads = 1;
    SharpnessConfig sharpness{};

    /// Small enough for a quick smoke run; not the acceptance scale.
    static Scale quick() {
        Scale s;
        s.num_states = 40;
        s.num_seeds = 3;
        s.steps = 300;
        s.warm_steps = 300;
        s.window = 100;
        s.bound_window = 250;
        s.sharpness.mu1_per_bucket = 4;
        s.sharpness.mu2_per_mu1 = 10;
        return s;
    }
};

namespace detail {

inline std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

inline std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

inline std::string fmt(const char* f, double a, double b, double c) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

inline Vector dirichlet_vector(std::size_t dim, double conc, CounterRng& rng) {
    const auto s = sample_dirichlet(dim, conc, rng);
    return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(dim));
}

/// Probability vector supported on a random subset of 1..max_support coordinates.
inline Vector random_sparse_distribution(std::size_t dim, std::size_t max_support, CounterRng& rng) {
    const std::size_t k = 1 + rng.below(std::min(dim, max_support));
    std::vector<std::size_t> idx(dim);
    for (std::size_t i = 0; i < dim; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(dim - i)]);
    const auto w = sample_simplex(k, rng);
    Vector out = Vector::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < k; ++i) out(static_cast<Eigen::Index>(idx[i])) = w[i];
    return out;
}

/// Euclidean distances between `n` uniform points in [0, 1]^dim, times `scale`.
inline Matrix random_point_metric(std::size_t n, std::size_t dim, double scale, CounterRng& rng) {
    Matrix pts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.uniform();
    return scale * euclidean_distances(pts);
}

inline FiniteMdp random_mdp(std::size_t ns, std::size_t na, double gamma, CounterRng& rng) {
    std::vector<Matrix> p(na, Matrix::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ns)));
    for (auto& pa : p) {
        for (std::size_t s = 0; s < ns; ++s) pa.row(static_cast<Eigen::Index>(s)) = dirichlet_vector(ns, 0.5, rng);
    }
    Matrix r(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform();
    return FiniteMdp(std::move(p), std::move(r), gamma);
}

inline StochasticPolicy random_policy(std::size_t ns, std::size_t na, CounterRng& rng) {
    Matrix m(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
    for (std::size_t s = 0; s < ns; ++s) m.row(static_cast<Eigen::Index>(s)) = dirichlet_vector(na, 1.0, rng);
    return StochasticPolicy(std::move(m));
}

/// sum_ij a_i b_j C_ij^p, by explicit loops.
inline double product_cost_loops(const Matrix& c, const Vector& a, const Vector& b, double p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        for (Eigen::Index j = 0; j < b.size(); ++j) s += a(i) * b(j) * std::pow(c(i, j), p);
    }
    return s;
}

template <class F>
CheckResult timed(int id, std::string name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r{id, std::move(name), false, {}, 0.0};
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace detail

// ------------------------------------------------------------ transport

inline CheckResult check_transport_correctness() {
    return detail::timed(1, "transport correctness vs exact simplex", [](CheckResult& r) {
        CounterRng rng(101, streams::kTests);
        const double lambdas[] = {0.02, 0.1, 1.0, 10.0};
        // Near-tied costs can need a few times the default iteration cap at lambda = 1e-3.
        SinkhornOptions sharp;
        sharp.max_iters = 200000;
        double worst_small = 0.0, worst_below = 0.0, worst_drop = 0.0;
        std::size_t unconverged = 0;
        for (int t = 0; t < 200; ++t) {
            const std::size_t n = 2 + rng.below(15);
            const CostMatrix cost(detail::random_point_metric(n, 3, 1.0, rng));
            const Vector a = detail::random_sparse_distribution(n, 16, rng);
            const Vector b = detail::random_sparse_distribution(n, 16, rng);
            const double exact = exact_wasserstein(cost, a, b, 1.0);
            const auto tight = sinkhorn_distance(cost, a, b, 1.0, 1e-3, sharp);
            unconverged += tight.converged ? 0 : 1;
            worst_small = std::max(worst_small, std::abs(tight.distance - exact));
            double prev = -1.0;
            for (double lam : lambdas) {
                const auto s = sinkhorn_distance(cost, a, b, 1.0, lam);
                unconverged += s.converged ? 0 : 1;
                worst_below = std::max(worst_below, exact - s.distance);
                if (prev >= 0.0) worst_drop = std::max(worst_drop, prev - s.distance);
                prev = s.distance;
            }
        }
        r.passed = worst_small <= 1e-4 && worst_below <= 1e-9 && worst_drop <= 1e-9 && unconverged == 0;
        r.detail = detail::fmt("max|W^1e-3 - W| = %.3g (tol 1e-4), max(W - W^lam) = %.3g, max decrease in lam = %.3g",
                               worst_small, worst_below, worst_drop) +
                   ", unconverged = " + std::to_string(unconverged);
    });
}

inline CheckResult check_indicator_identity() {
    return detail::timed(2, "indicator cost gives TV^(1/p)", [](CheckResult& r) {
        CounterRng rng(102, streams::kTests);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const std::size_t n = 2 + rng.below(15);
            const CostMatrix ind(Matrix::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) -
                                 Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
            const Vector a = detail::random_sparse_distribution(n, 16, rng);
            const Vector b = detail::random_sparse_distribution(n, 16, rng);
            const double tv = 0.5 * (a - b).cwiseAbs().sum();
            for (double p : {1.0, 2.0, 3.0}) {
                worst = std::max(worst, std::abs(exact_wasserstein(ind, a, b, p) - std::pow(tv, 1.0 / p)));
            }
        }
        r.passed = worst <= 1e-9;
        r.detail = detail::fmt("max error = %.3g (tol 1e-9)", worst);
    });
}

inline CheckResult check_product_limit() {
    return detail::timed(3, "large-lambda and infinite-lambda product coupling", [](CheckResult& r) {
        CounterRng rng(103, streams::kTests);
        double worst_big = 0.0, worst_inf = 0.0, worst_pair = 0.0;
        for (int t = 0; t < 100; ++t) {
            const std::size_t n = 2 + rng.below(15);
            const double p = 1.0 + static_cast<double>(t % 2);
            const Matrix c = detail::random_point_metric(n, 3, 1.0, rng);
            const CostMatrix cost(c);
            const Vector a = detail::random_sparse_distribution(n, 16, rng);
            const Vector b = detail::random_sparse_distribution(n, 16, rng);
            const double loops = std::pow(detail::product_cost_loops(c, a, b, p), 1.0 / p);
            worst_big = std::max(worst_big, std::abs(sinkhorn_distance(cost, a, b, p, 1e6).distance -
                                                     product_coupling_distance(cost, a, b, p)));
            const double inf = sinkhorn_distance(cost, a, b, p, kInfiniteLambda).distance;
            worst_inf = std::max(worst_inf, std::abs(inf - loops) / std::max(1.0, loops));
        }
        // Whole-matrix closed form against per-pair loops.
        for (int t = 0; t < 10; ++t) {
            const std::size_t n = 12;
            const Matrix c = detail::random_point_metric(n, 2, 2.0, rng);
            Matrix pm(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            for (std::size_t s = 0; s < n; ++s) pm.row(static_cast<Eigen::Index>(s)) = detail::dirichlet_vector(n, 0.5, rng);
            const auto w = pairwise_w_matrix(pm, c, 1.0, kInfiniteLambda);
            for (Eigen::Index i = 0; i < pm.rows(); ++i) {
                for (Eigen::Index j = i + 1; j < pm.rows(); ++j) {
                    const double ref =
                        detail::product_cost_loops(c, pm.row(i).transpose(), pm.row(j).transpose(), 1.0);
                    worst_pair = std::max(worst_pair, std::abs(w.w(i, j) - ref) / std::max(1.0, ref));
                }
            }
        }
        r.passed = worst_big <= 1e-5 && worst_inf <= 1e-13 && worst_pair <= 1e-13;
        r.detail = detail::fmt("max|W^1e6 - product| = %.3g (tol 1e-5), inf path rel err = %.3g, pairwise rel err = %.3g",
                               worst_big, worst_inf, worst_pair);
    });
}

// -------------------------------------------------------------- metrics

inline CheckResult check_contraction() {
    return detail::timed(4, "F_pi contracts by c_T", [](CheckResult& r) {
        CounterRng rng(104, streams::kTests);
        const double lambdas[] = {0.1, 1.0, kInfiniteLambda};
        double worst_excess = -1e300, worst_ratio = 0.0;
        for (int t = 0; t < 50; ++t) {
            const std::size_t ns = 12;
            const FiniteMdp mdp = detail::random_mdp(ns, 3, 0.9, rng);
            const StochasticPolicy pi = detail::random_policy(ns, 3, rng);
            const double scale = rng.uniform(0.1, 10.0);
            const StateMetric d(detail::random_point_metric(ns, 3, scale, rng));
            const StateMetric d2(detail::random_point_metric(ns, 3, scale * rng.uniform(0.5, 1.5), rng));
            BisimParams bp;
            bp.c_T = 0.9;
            bp.lambda = lambdas[t % 3];
            bp.p = 1.0 + static_cast<double>((t / 3) % 2);
            const auto f1 = apply_F_pi(mdp, pi, d, bp);
            const auto f2 = apply_F_pi(mdp, pi, d2, bp);
            const double lhs = f1.metric.sup_distance(f2.metric);
            const double in = d.sup_distance(d2);
            worst_excess = std::max(worst_excess, lhs - bp.c_T * in);
            worst_ratio = std::max(worst_ratio, lhs / in);
        }
        r.passed = worst_excess <= 1e-9;
        r.detail = detail::fmt("max(||F d - F d'|| - c_T ||d - d'||) = %.3g (tol 1e-9), worst ratio = %.4f",
                               worst_excess, worst_ratio);
    });
}

inline CheckResult check_value_lipschitz() {
    return detail::timed(5, "value Lipschitz and aggregation bound", [](CheckResult& r) {
        CounterRng rng(105, streams::kTests);
        double worst_lip = -1e300, worst_vfa = -1e300;
        for (int t = 0; t < 20; ++t) {
            const std::size_t ns = 12;
            const FiniteMdp mdp = detail::random_mdp(ns, 3, 0.9, rng);
            const StochasticPolicy pi = detail::random_policy(ns, 3, rng);
            BisimParams bp;
            bp.c_R = 1.0;
            bp.c_T = 0.9;
            const auto fp = fixed_point_metric(mdp, pi, StateMetric::zero(ns), 5000, 1e-10, bp);
            const ValueFunction v = policy_evaluation(mdp, pi);
            worst_lip = std::max(worst_lip, -min_signed_metric_gap(fp.metric, v));
            const Vector r_pi = expected_reward(mdp, pi);
            const Matrix p_pi = policy_transition(mdp, pi);
            for (double eps : {0.05, 0.1}) {
                const Abstraction phi = epsilon_aggregate(fp.metric, eps);
                const ValueFunction vt = lift_values(evaluate_abstract(build_abstract_chain(r_pi, p_pi, phi), 0.9), phi);
                const double err = (v.values - vt.values).cwiseAbs().maxCoeff();
                worst_vfa = std::max(worst_vfa, err - 2.0 * eps / (1.0 - 0.9));
            }
        }
        r.passed = worst_lip <= 2e-3 && worst_vfa <= 2e-2;
        r.detail = detail::fmt("max(|dV| - d) = %.3g (tol 2e-3), max(||V - V~|| - 2eps/(1-g)) = %.3g (tol 2e-2)",
                               worst_lip + 0.0, worst_vfa + 0.0);
    });
}

inline CheckResult check_policy_distance_bound() {
    return detail::timed(6, "metric difference bounded by policy TV", [](CheckResult& r) {
        CounterRng rng(106, streams::kTests);
        double worst = -1e300;
        double min_slack_ratio = 1e300;
        for (int t = 0; t < 20; ++t) {
            const std::size_t ns = 8;
            const FiniteMdp mdp = detail::random_mdp(ns, 2, 0.9, rng);
            const StochasticPolicy pi = detail::random_policy(ns, 2, rng);
            // Small mixture steps keep TV small enough for the bound to bite.
            const double beta = std::pow(10.0, -rng.uniform(0.0, 3.0));
            const StochasticPolicy pi2 = mix_policies(pi, detail::random_policy(ns, 2, rng), beta);
            const double tv = tv_distance_policies(pi, pi2);
            for (double p : {1.0, 2.0}) {
                BisimParams bp;
                bp.c_R = 1.0;
                bp.c_T = 0.9;
                bp.p = p;
                bp.lambda = 1e-3;
                PotentialCache c1(ns), c2(ns);
                const auto d1 = fixed_point_metric(mdp, pi, StateMetric::zero(ns), 5000, 1e-10, bp, &c1);
                const auto d2 = fixed_point_metric(mdp, pi2, d1.metric, 5000, 1e-10, bp, &c2);
                const double lhs = d1.metric.sup_distance(d2.metric);
                const double rhs = 2.0 * bp.c_R / ((1.0 - bp.c_T) * (1.0 - bp.c_T)) * std::pow(tv, 1.0 / p);
                worst = std::max(worst, lhs - rhs);
                if (lhs > 0.0) min_slack_ratio = std::min(min_slack_ratio, rhs / lhs);
            }
        }
        r.passed = worst <= 1e-6;
        r.detail = detail::fmt("max(lhs - bound) = %.3g (tol 1e-6), tightest bound/lhs = %.3g", worst,
                               min_slack_ratio);
    });
}

// ---------------------------------------------------------- experiments

/// Lazily runs and memoizes the multi-seed API experiments.
class Experiments {
public:
    using Run = std::vector<StepRecord>;

    explicit Experiments(Scale s) : scale_(std::move(s)) {}

    [[nodiscard]] const Scale& scale() const noexcept { return scale_; }

    [[nodiscard]] ApiConfig base() const {
        ApiConfig c;
        c.env.family = Family::ring;
        c.env.num_states = scale_.num_states;
        c.env.num_classes = scale_.num_classes;
        c.env.gamma = 0.9;
        c.bisim.c_R = 1.0;
        c.bisim.c_T = 0.9;
        c.bisim.p = 1.0;
        c.bisim.lambda = 1.0;
        c.epsilon = 0.1;
        c.n = 28;
        c.early_tol = 1e-3;
        c.num_steps = scale_.steps;
        c.threads = scale_.threads;
        return c;
    }

    const std::vector<Run>& runs(const std::string& key, const ApiConfig& cfg) {
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second.runs;
        Entry e;
        e.cfg = cfg;
        for (std::size_t s = 1; s <= scale_.num_seeds; ++s) {
            ApiConfig c = cfg;
            c.seed = s;
            e.runs.push_back(run_api(c).steps);
        }
        return cache_.emplace(key, std::move(e)).first->second.runs;
    }

    const std::vector<Run>& fixed_alpha(double alpha) {
        ApiConfig c = base();
        c.alpha.mode = AlphaMode::fixed;
        c.alpha.alpha = alpha;
        return runs("fixed alpha=" + std::to_string(alpha), c);
    }

    const std::vector<Run>& naive(std::size_t n) {
        ApiConfig c = base();
        c.alpha.mode = AlphaMode::naive;
        c.n = n;
        return runs("naive n=" + std::to_string(n), c);
    }

    const std::vector<Run>& decay(std::size_t n, double alpha_min) {
        ApiConfig c = base();
        c.alpha.mode = AlphaMode::decay;
        c.alpha.alpha_min = alpha_min;
        c.n = n;
        return runs("decay n=" + std::to_string(n) + " min=" + std::to_string(alpha_min), c);
    }

    const std::vector<Run>& lambda_ablation(double lambda) {
        ApiConfig c = base();
        c.alpha.mode = AlphaMode::decay;
        c.alpha.alpha_min = 0.01;
        c.bisim.lambda = lambda;
        return runs("lambda=" + std::to_string(lambda), c);
    }

    const std::vector<Run>& pam(double lambda, double weight) {
        ApiConfig c = base();
        c.alpha.mode = AlphaMode::decay;
        c.alpha.alpha_min = 0.01;
        c.bisim.lambda = lambda;
        c.env.perturbation = weight;
        c.partition = PartitionMode::pam;
        c.pam_k = 30;
        c.env.num_states = scale_.pam_states;
        c.num_steps = scale_.pam_steps;
        return runs("pam lambda=" + std::to_string(lambda) + " weight=" + std::to_string(weight), c);
    }

    /// (config, runs) of every memoized experiment.
    template <class F>
    void for_each(F&& f) const {
        for (const auto& [key, e] : cache_) f(key, e.cfg, e.runs);
    }

private:
    struct Entry {
        ApiConfig cfg;
        std::vector<Run> runs;
    };
    Scale scale_;
    std::map<std::string, Entry> cache_;
};

namespace detail {

/// Seed mean of one StepRecord field, per step.
template <class F>
std::vector<double> seed_mean(const std::vector<Experiments::Run>& runs, F field) {
    std::vector<double> out(runs.front().size(), 0.0);
    for (const auto& run : runs) {
        for (std::size_t k = 0; k < run.size(); ++k) out[k] += field(run[k]);
    }
    for (auto& x : out) x /= static_cast<double>(runs.size());
    return out;
}

inline double tail_max(const std::vector<double>& xs, std::size_t window) {
    const std::size_t from = xs.size() > window ? xs.size() - window : 0;
    return *std::max_element(xs.begin() + static_cast<std::ptrdiff_t>(from), xs.end());
}

inline double tail_mean(const std::vector<double>& xs, std::size_t window) {
    const std::size_t from = xs.size() > window ? xs.size() - window : 0;
    return mean(std::vector<double>(xs.begin() + static_cast<std::ptrdiff_t>(from), xs.end()));
}

/// Mean over seeds of the per-seed standard deviation of |S~| in the trailing window.
inline double partition_oscillation(const std::vector<Experiments::Run>& runs, std::size_t window) {
    std::vector<double> sds;
    for (const auto& run : runs) {
        std::vector<double> xs;
        for (std::size_t k = run.size() > window ? run.size() - window : 0; k < run.size(); ++k) {
            xs.push_back(static_cast<double>(run[k].num_partitions));
        }
        sds.push_back(stddev(xs));
    }
    return mean(sds);
}

inline double gap_of(const StepRecord& r) { return r.gap_vstar; }

}  // namespace detail

inline CheckResult check_warm_start(const Scale& scale) {
    return detail::timed(7, "warm-started potentials match cold starts", [&](CheckResult& r) {
        Experiments ex(scale);
        ApiConfig c = ex.base();
        c.alpha.mode = AlphaMode::fixed;
        c.alpha.alpha = 0.0625;
        c.num_steps = scale.warm_steps;
        c.shadow_cold = true;
        // At the default tolerance each solve is only accurate to about tol * max cost.
        c.sinkhorn.tol = 1e-11;
        c.seed = 1;
        const auto run = run_api(c);
        double worst = 0.0;
        std::size_t warm = 0, cold = 0;
        for (const auto& s : run.steps) {
            worst = std::max(worst, s.shadow_diff);
            if (s.step >= 50 && s.step <= 300) {
                warm += s.sinkhorn_iters;
                cold += s.cold_sinkhorn_iters;
            }
        }
        r.passed = worst <= 1e-8 && warm < cold;
        r.detail = detail::fmt("max|warm - cold| = %.3g (tol 1e-8)", worst) + ", iterations over steps 50-300: warm " +
                   std::to_string(warm) + " vs cold " + std::to_string(cold);
    });
}

inline CheckResult check_alpha_ablation(Experiments& ex) {
    return detail::timed(8, "alpha ablation: partitions, oscillation, gap ordering", [&](CheckResult& r) {
        const auto& sc = ex.scale();
        const std::size_t m = sc.num_classes;
        std::string d;
        bool ok = true;
        for (double a : {0.0625, 0.25}) {
            std::size_t hits = 0;
            for (const auto& run : ex.fixed_alpha(a)) hits += run.back().num_partitions == m ? 1 : 0;
            const bool pass = 10 * hits >= 8 * sc.num_seeds;
            ok = ok && pass;
            d += detail::fmt("alpha=%g: final |S~|=m in ", a) + std::to_string(hits) + "/" +
                 std::to_string(sc.num_seeds) + "; ";
        }
        const double osc1 = detail::partition_oscillation(ex.fixed_alpha(1.0), sc.window);
        const double osc0 = detail::partition_oscillation(ex.fixed_alpha(0.0625), sc.window);
        ok = ok && osc1 > osc0;
        d += detail::fmt("sd|S~| alpha=1: %.3f vs alpha=0.0625: %.3f; ", osc1, osc0);
        const double g0 = detail::tail_max(detail::seed_mean(ex.fixed_alpha(0.0625), detail::gap_of), sc.window);
        const double g1 = detail::tail_max(detail::seed_mean(ex.fixed_alpha(0.25), detail::gap_of), sc.window);
        const double g2 = detail::tail_max(detail::seed_mean(ex.fixed_alpha(1.0), detail::gap_of), sc.window);
        ok = ok && g0 <= g1 && g1 <= g2;
        d += detail::fmt("final-window max gap: %.4f <= %.4f <= %.4f", g0, g1, g2);
        r.passed = ok;
        r.detail = d;
    });
}

inline CheckResult check_naive_api(Experiments& ex) {
    return detail::timed(9, "naive API vs warm-started API", [&](CheckResult& r) {
        const auto& sc = ex.scale();
        const double vmax = 1.0 / (1.0 - 0.9);
        const double naive1 = detail::seed_mean(ex.naive(1), detail::gap_of).back();
        const double decay1 = detail::seed_mean(ex.decay(1, 1.0 / 64.0), detail::gap_of).back();
        const double naive28 = detail::tail_mean(detail::seed_mean(ex.naive(28), detail::gap_of), sc.window);
        const double api1 = detail::tail_mean(detail::seed_mean(ex.fixed_alpha(1.0), detail::gap_of), sc.window);
        r.passed = naive1 > decay1 && std::abs(naive28 - api1) < 0.1 * vmax;
        r.detail = detail::fmt("n=1 final gap: naive %.4f vs decaying alpha %.4f; ", naive1, decay1) +
                   detail::fmt("n=28 final-window mean gap: naive %.4f vs API(1.0) %.4f (tol %.2f)", naive28, api1,
                               0.1 * vmax);
    });
}

inline CheckResult check_lambda_ablation(Experiments& ex) {
    return detail::timed(10, "lambda ablation: same dynamics, coarser metrics", [&](CheckResult& r) {
        const double vmax = 1.0 / (1.0 - 0.9);
        const double lambdas[] = {0.1, 1.0, kInfiniteLambda};
        std::vector<std::vector<double>> gaps;
        std::vector<double> parts, mvg;
        for (double lam : lambdas) {
            const auto& runs = ex.lambda_ablation(lam);
            gaps.push_back(detail::seed_mean(runs, detail::gap_of));
            parts.push_back(
                detail::seed_mean(runs, [](const StepRecord& s) { return double(s.num_partitions); }).back());
            mvg.push_back(detail::seed_mean(runs, [](const StepRecord& s) { return s.metric_value_gap; }).back());
        }
        double maxdiff = 0.0;
        for (std::size_t a = 0; a < gaps.size(); ++a) {
            for (std::size_t b = a + 1; b < gaps.size(); ++b) {
                for (std::size_t k = 0; k < gaps[a].size(); ++k) {
                    maxdiff = std::max(maxdiff, std::abs(gaps[a][k] - gaps[b][k]));
                }
            }
        }
        const bool parts_ok = parts[0] <= parts[1] && parts[1] <= parts[2];
        const bool mvg_ok = mvg[0] <= mvg[1] && mvg[1] <= mvg[2];
        r.passed = maxdiff < 0.1 * vmax && parts_ok && mvg_ok;
        r.detail = detail::fmt("max seed-mean gap difference %.4f (tol %.2f); ", maxdiff, 0.1 * vmax) +
                   detail::fmt("final |S~| %.2f, %.2f, %.2f; ", parts[0], parts[1], parts[2]) +
                   detail::fmt("final metric-value gap %.4f, %.4f, %.4f (lambda 0.1, 1, inf)", mvg[0], mvg[1], mvg[2]);
    });
}

/// `prepare` runs first (inside the timer), to make sure every experiment that should count has run.
inline CheckResult check_asymptotic_bound(Experiments& ex, const std::function<void()>& prepare = {}) {
    return detail::timed(11, "asymptotic gap bound on every API(alpha) run", [&](CheckResult& r) {
        if (prepare) prepare();
        const auto& sc = ex.scale();
        std::size_t checked = 0, violations = 0;
        double tightest = 1e300;
        ex.for_each([&](const std::string&, const ApiConfig& cfg, const std::vector<Experiments::Run>& runs) {
            if (cfg.alpha.mode == AlphaMode::naive) return;
            for (const auto& run : runs) {
                const std::size_t from = run.size() > sc.bound_window ? run.size() - sc.bound_window : 0;
                double delta = 0.0, eps = cfg.epsilon, worst_gap = 0.0;
                for (std::size_t k = from; k < run.size(); ++k) {
                    delta = std::max(delta, run[k].delta_achieved);
                    worst_gap = std::max(worst_gap, run[k].gap_vstar);
                    // With medoid partitions the radius plays the role of epsilon.
                    if (cfg.partition == PartitionMode::pam) eps = std::max(eps, run[k].partition_radius);
                }
                const double bound = asymptotic_gap_bound(cfg.env.gamma, delta, eps, cfg.n);
                ++checked;
                violations += worst_gap <= bound ? 0 : 1;
                tightest = std::min(tightest, bound - worst_gap);
            }
        });
        r.passed = checked > 0 && violations == 0;
        r.detail = std::to_string(checked) + " runs checked, " + std::to_string(violations) +
                   " violations, smallest slack " + detail::fmt("%.3f", tightest);
    });
}

inline CheckResult check_sharpness(const Scale& scale) {
    return detail::timed(12, "entropic sharpness degrades with marginal entropy", [&](CheckResult& r) {
        const SharpnessReport rep = sinkhorn_sharpness_bench(scale.sharpness);
        std::map<std::pair<std::size_t, double>, std::map<double, std::vector<double>>> cells;
        double worst_zero = 0.0;
        double min_err = 0.0;
        for (const auto& rec : rep.records) {
            cells[{rec.dim, rec.lambda}][rec.bucket].push_back(rec.rel_error);
            if (rec.bucket == 0.0) worst_zero = std::max(worst_zero, std::abs(rec.rel_error));
            min_err = std::min(min_err, rec.rel_error);
        }
        bool ok = !rep.records.empty() && worst_zero <= 1e-6;
        double weakest = 1.0;
        for (const auto& [key, buckets] : cells) {
            std::vector<double> hs, meds;
            for (const auto& [h, errs] : buckets) {
                hs.push_back(h);
                meds.push_back(median(errs));
            }
            const double rho = spearman(hs, meds);
            weakest = std::min(weakest, rho);
            ok = ok && rho > 0.0;
        }
        r.passed = ok;
        r.detail = std::to_string(rep.records.size()) + " records, " + std::to_string(cells.size()) + " cells; " +
                   detail::fmt("max |rel err| at H=0: %.3g (tol 1e-6), weakest Spearman rho %.3f, min rel err %.3g",
                               worst_zero, weakest, min_err);
    });
}

inline CheckResult check_pam_nmi(Experiments& ex) {
    return detail::timed(13, "medoid budget: NMI and perturbation trend", [&](CheckResult& r) {
        const auto& sc = ex.scale();
        const double weights[] = {0.0, 0.05, 0.5};
        bool ok = true;
        std::string d;
        std::vector<double> spread;
        for (double w : weights) {
            const auto nmi_of = [](const StepRecord& s) { return s.nmi; };
            const double nmi_sink = detail::seed_mean(ex.pam(0.25, w), nmi_of).back();
            const double nmi_prod = detail::seed_mean(ex.pam(kInfiniteLambda, w), nmi_of).back();
            const double g_sink =
                detail::tail_mean(detail::seed_mean(ex.pam(0.25, w), detail::gap_of), sc.pam_window);
            const double g_prod =
                detail::tail_mean(detail::seed_mean(ex.pam(kInfiniteLambda, w), detail::gap_of), sc.pam_window);
            ok = ok && nmi_sink >= nmi_prod;
            spread.push_back(g_prod - g_sink);
            d += detail::fmt("w=%g: NMI %.3f vs %.3f", w, nmi_sink, nmi_prod) +
                 detail::fmt(", gap %.3f vs %.3f; ", g_sink, g_prod);
        }
        ok = ok && spread.back() > spread.front();
        d += detail::fmt("gap spread (inf - 0.25) at w=0: %.4f, at w=0.5: %.4f", spread.front(), spread.back());
        r.passed = ok;
        r.detail = d;
    });
}

/// Runs the selected checks (all when `only` is empty) in criterion order.
inline std::vector<CheckResult> run_all(const Scale& scale, const std::vector<int>& only = {},
                                        const std::function<void(const CheckResult&)>& on_result = {}) {
    Experiments ex(scale);
    const auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
    std::vector<std::pair<int, std::function<CheckResult()>>> checks{
        {1, [] { return check_transport_correctness(); }},
        {2, [] { return check_indicator_identity(); }},
        {3, [] { return check_product_limit(); }},
        {4, [] { return check_contraction(); }},
        {5, [] { return check_value_lipschitz(); }},
        {6, [] { return check_policy_distance_bound(); }},
        {7, [&] { return check_warm_start(scale); }},
        {8, [&] { return check_alpha_ablation(ex); }},
        {9, [&] { return check_naive_api(ex); }},
        {10, [&] { return check_lambda_ablation(ex); }},
        {11, [&] {
             return check_asymptotic_bound(ex, [&] {
                 ex.fixed_alpha(0.0625), ex.fixed_alpha(0.25), ex.fixed_alpha(1.0);
                 ex.decay(1, 1.0 / 64.0);
                 ex.lambda_ablation(0.1), ex.lambda_ablation(1.0), ex.lambda_ablation(kInfiniteLambda);
                 for (double w : {0.0, 0.05, 0.5}) ex.pam(0.25, w), ex.pam(kInfiniteLambda, w);
             });
         }},
        {12, [&] { return check_sharpness(scale); }},
        {13, [&] { return check_pam_nmi(ex); }},
    };
    std::vector<CheckResult> out;
    for (auto& [id, fn] : checks) {
        if (!want(id)) continue;
        out.push_back(fn());
        if (on_result) on_result(out.back());
    }
    return out;
}

}  // namespace sinkbisim::verify
