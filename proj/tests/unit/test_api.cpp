#include "sinkbisim/api.hpp"

#include <gtest/gtest.h>

using namespace sinkbisim;

namespace {

ApiConfig small_config() {
    ApiConfig c;
    c.env.num_states = 40;
    c.env.num_classes = 8;
    c.num_steps = 40;
    c.seed = 3;
    return c;
}

}  // namespace

TEST(AlphaSchedule, Examples) {
    AlphaSchedule s;
    s.mode = AlphaMode::decay;
    s.alpha_min = 1.0 / 64.0;
    EXPECT_DOUBLE_EQ(alpha_schedule(s, 1), 1.0);
    EXPECT_DOUBLE_EQ(alpha_schedule(s, 1000000), 1.0 / 64.0);
    s.alpha_min = 0.01;
    EXPECT_NEAR(alpha_schedule(s, 32), 0.0625, 1e-12);
    s.mode = AlphaMode::fixed;
    s.alpha = 0.25;
    EXPECT_DOUBLE_EQ(alpha_schedule(s, 7), 0.25);
    s.alpha = 0.0;
    EXPECT_THROW(alpha_schedule(s, 1), std::invalid_argument);
    EXPECT_THROW(alpha_schedule(AlphaSchedule{}, 0), std::invalid_argument);
}

TEST(NoisyGreedy, CalibratesResidual) {
    const GeneratedMdp g = gen_ring_sparse(40, 8, 1);
    CounterRng vr(2, streams::kTests);
    Vector v(40);
    for (int i = 0; i < 40; ++i) v(i) = 5.0 * vr.uniform();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CounterRng rng(seed, streams::kGreedyNoise);
        const auto r = noisy_greedy(g.mdp, ValueFunction{v}, 0.05, 0.1, rng);
        EXPECT_TRUE(r.calibrated);
        EXPECT_GE(r.achieved_delta, 0.05);
        EXPECT_LE(r.achieved_delta, 0.1);
        EXPECT_LE(r.evaluations, 50u);
        EXPECT_NEAR(bellman_residual(g.mdp, r.policy, ValueFunction{v}), r.achieved_delta, 1e-12);
        EXPECT_LT((r.policy.probs().rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    }
    const StochasticPolicy greedy = greedy_policy(g.mdp, ValueFunction{v});
    EXPECT_EQ(bellman_residual(g.mdp, greedy, ValueFunction{v}), 0.0);
}

TEST(NoisyGreedy, ResidualGrowsWithSigma) {
    const GeneratedMdp g = gen_dense_reward(40, 8, 0.9, 1);
    const ValueFunction v = optimal_values(g.mdp);
    const StochasticPolicy greedy = greedy_policy(g.mdp, v);
    std::vector<double> avg;
    for (double sigma : {0.05, 0.2, 0.8}) {
        double tot = 0.0;
        for (std::uint64_t t = 0; t < 100; ++t) {
            CounterRng rng(t, streams::kTests);
            Matrix noise(40, 2);
            for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
            tot += bellman_residual(g.mdp, detail::perturbed_policy(greedy, noise, sigma), v);
        }
        avg.push_back(tot / 100.0);
    }
    EXPECT_LE(avg[0], avg[1]);
    EXPECT_LE(avg[1], avg[2]);
}

TEST(RunApi, RecordsAreConsistent) {
    ApiConfig c = small_config();
    c.alpha.mode = AlphaMode::fixed;
    c.alpha.alpha = 0.25;
    const ApiRun run = run_api(c);
    ASSERT_EQ(run.steps.size(), 40u);
    for (const auto& s : run.steps) {
        EXPECT_GE(s.num_partitions, 1u);
        EXPECT_LE(s.num_partitions, 40u);
        EXPECT_LE(s.partition_radius, c.epsilon);
        EXPECT_GE(s.gap_vstar, 0.0);
        EXPECT_DOUBLE_EQ(s.alpha_k, 0.25);
        EXPECT_LE(s.metric_iterations, c.n);
    }
    EXPECT_FALSE(std::isnan(run.steps.back().nmi));
    EXPECT_LT((run.final_policy.probs().rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(RunApi, SingleStepInequality) {
    for (AlphaMode mode : {AlphaMode::fixed, AlphaMode::decay, AlphaMode::naive}) {
        ApiConfig c = small_config();
        c.alpha.mode = mode;
        c.alpha.alpha = 0.25;
        const ApiRun run = run_api(c);
        for (std::size_t k = 0; k + 1 < run.steps.size(); ++k) {
            const auto& s = run.steps[k];
            const double bound = single_step_bound(0.9, s.alpha_k, s.gap_vstar, s.delta_achieved, s.delta_pe);
            EXPECT_LE(run.steps[k + 1].gap_vstar, bound + 1e-9) << "step " << k;
        }
    }
}

TEST(RunApi, AsymptoticBound) {
    ApiConfig c = small_config();
    c.alpha.mode = AlphaMode::fixed;
    c.alpha.alpha = 0.0625;
    c.num_steps = 120;
    const ApiRun run = run_api(c);
    double delta = 0.0, gap = 0.0;
    for (std::size_t k = 90; k < 120; ++k) {
        delta = std::max(delta, run.steps[k].delta_achieved);
        gap = std::max(gap, run.steps[k].gap_vstar);
    }
    EXPECT_LE(gap, asymptotic_gap_bound(0.9, delta, c.epsilon, c.n));
    EXPECT_NEAR(asymptotic_gap_bound(0.9, 0.1, 0.1, 28),
                0.1 / 0.01 + 1.8 * (0.2 + std::pow(0.9, 28) / 0.1) / 0.001, 1e-9);
}

TEST(RunApi, WarmStartDiffersFromNaive) {
    ApiConfig c = small_config();
    c.num_steps = 10;
    c.alpha.mode = AlphaMode::fixed;
    c.alpha.alpha = 1.0;
    const ApiRun warm = run_api(c);
    c.alpha.mode = AlphaMode::naive;
    const ApiRun naive = run_api(c);
    std::size_t wi = 0, ni = 0;
    for (std::size_t k = 1; k < 10; ++k) wi += warm.steps[k].metric_iterations, ni += naive.steps[k].metric_iterations;
    EXPECT_LT(wi, ni);
}

TEST(RunApi, ZeroDiscount) {
    ApiConfig c = small_config();
    c.env.gamma = 0.0;
    c.bisim.c_T = 0.0;
    c.num_steps = 3;
    const ApiRun run = run_api(c);
    for (const auto& s : run.steps) EXPECT_LE(s.metric_iterations, 2u);
    const GeneratedMdp g = generate(c.env, c.seed);
    const auto pi = StochasticPolicy::uniform(40, 2);
    EXPECT_LT((policy_evaluation(g.mdp, pi).values - expected_reward(g.mdp, pi)).cwiseAbs().maxCoeff(), 1e-15);
    const auto one = fixed_point_metric(g.mdp, pi, StateMetric::zero(40), 1, 0.0, c.bisim);
    const auto many = fixed_point_metric(g.mdp, pi, StateMetric::zero(40), 28, 0.0, c.bisim);
    EXPECT_EQ(one.metric.sup_distance(many.metric), 0.0);
}

TEST(RunApi, DeterministicForSeed) {
    ApiConfig c = small_config();
    c.num_steps = 8;
    c.alpha.mode = AlphaMode::decay;
    const ApiRun a = run_api(c), b = run_api(c);
    for (std::size_t k = 0; k < 8; ++k) {
        EXPECT_EQ(a.steps[k].gap_vstar, b.steps[k].gap_vstar);
        EXPECT_EQ(a.steps[k].num_partitions, b.steps[k].num_partitions);
        EXPECT_EQ(a.steps[k].sinkhorn_iters, b.steps[k].sinkhorn_iters);
    }
    c.threads = 3;
    const ApiRun t = run_api(c);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(a.steps[k].gap_vstar, t.steps[k].gap_vstar);
}

TEST(RunApi, PamPartitionsUseBudget) {
    ApiConfig c = small_config();
    c.num_steps = 5;
    c.partition = PartitionMode::pam;
    c.pam_k = 12;
    c.env.perturbation = 0.05;
    for (const auto& s : run_api(c).steps) EXPECT_EQ(s.num_partitions, 12u);
    c.pam_k = 41;
    EXPECT_THROW(run_api(c), std::invalid_argument);
}

TEST(RunApi, ConfigValidation) {
    ApiConfig c = small_config();
    c.alpha.mode = AlphaMode::fixed;
    c.alpha.alpha = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config();
    c.delta_lo = 0.2;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config();
    c.n = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
