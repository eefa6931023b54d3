#include "oracles.hpp"
#include "sinkbisim/mdp.hpp"
#include "sinkbisim/rng.hpp"

#include <gtest/gtest.h>

using namespace sinkbisim;
using oracle::Vec;

namespace {

Matrix m(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double x : r) out(i, j++) = x;
        ++i;
    }
    return out;
}

FiniteMdp random_mdp(std::size_t ns, std::size_t na, double gamma, std::uint64_t seed) {
    CounterRng rng(seed, streams::kTests);
    std::vector<Matrix> p(na, Matrix(ns, ns));
    for (auto& pa : p) {
        for (std::size_t s = 0; s < ns; ++s) {
            const auto row = sample_simplex(ns, rng);
            for (std::size_t t = 0; t < ns; ++t) pa(s, t) = row[t];
        }
    }
    Matrix r(ns, na);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform();
    return FiniteMdp(p, r, gamma);
}

}  // namespace

TEST(Mdp, RejectsMalformedInput) {
    EXPECT_THROW(FiniteMdp({m({{0.5, 0.4}, {0, 1}})}, m({{0}, {0}}), 0.9), std::invalid_argument);
    EXPECT_THROW(FiniteMdp({m({{1, 0}, {0, 1}})}, m({{1.5}, {0}}), 0.9), std::invalid_argument);
    EXPECT_THROW(FiniteMdp({m({{1, 0}, {0, 1}})}, m({{0}, {0}}), 1.0), std::invalid_argument);
    EXPECT_THROW(StochasticPolicy(m({{0.3, 0.3}})), std::invalid_argument);
}

TEST(Mdp, ExpectedRewardExamples) {
    const FiniteMdp mdp({m({{1}}), m({{1}})}, m({{0.2, 0.6}}), 0.9);
    EXPECT_DOUBLE_EQ(expected_reward(mdp, StochasticPolicy::deterministic({0}, 2))(0), 0.2);
    EXPECT_DOUBLE_EQ(expected_reward(mdp, StochasticPolicy(m({{0.25, 0.75}})))(0), 0.5);
    const FiniteMdp mdp01({m({{1}}), m({{1}})}, m({{0.0, 1.0}}), 0.9);
    EXPECT_DOUBLE_EQ(expected_reward(mdp01, StochasticPolicy::uniform(1, 2))(0), 0.5);
}

TEST(Mdp, PolicyTransitionMatchesTripleLoop) {
    const FiniteMdp mdp = random_mdp(3, 2, 0.9, 7);
    const StochasticPolicy pi(m({{0.1, 0.9}, {0.5, 0.5}, {1.0, 0.0}}));
    const Matrix got = policy_transition(mdp, pi);
    for (int s = 0; s < 3; ++s) {
        for (int t = 0; t < 3; ++t) {
            double want = 0.0;
            for (int a = 0; a < 2; ++a) want += pi(s, a) * mdp.transition(a)(s, t);
            EXPECT_NEAR(got(s, t), want, 1e-15);
        }
    }
    const FiniteMdp two({m({{1, 0}, {1, 0}}), m({{0, 1}, {0, 1}})}, m({{0, 0}, {0, 0}}), 0.9);
    const Matrix u = policy_transition(two, StochasticPolicy::uniform(2, 2));
    EXPECT_DOUBLE_EQ(u(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(u(0, 1), 0.5);
}

TEST(Mdp, PolicyEvaluationExamples) {
    const FiniteMdp loop({m({{1}})}, m({{1}}), 0.9);
    EXPECT_NEAR(policy_evaluation(loop, StochasticPolicy::uniform(1, 1))[0], 10.0, 1e-9);
    const FiniteMdp swap({m({{0, 1}, {1, 0}})}, m({{1}, {0}}), 0.9);
    const auto v = policy_evaluation(swap, StochasticPolicy::uniform(2, 1));
    EXPECT_NEAR(v[0], 1.0 / (1.0 - 0.81), 1e-9);  // 5.2632
    EXPECT_NEAR(v[1], 0.9 / (1.0 - 0.81), 1e-9);  // 4.7368
    const FiniteMdp zero({m({{0.5, 0.5}, {0.2, 0.8}})}, m({{0}, {0}}), 0.9);
    EXPECT_EQ(policy_evaluation(zero, StochasticPolicy::uniform(2, 1)).values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mdp, PolicyEvaluationMatchesEliminationOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const FiniteMdp mdp = random_mdp(9, 3, 0.95, seed);
        const auto pi = StochasticPolicy::uniform(9, 3);
        const Vec want = oracle::solve_values(policy_transition(mdp, pi), expected_reward(mdp, pi), 0.95);
        EXPECT_LT((policy_evaluation(mdp, pi).values - want).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Mdp, OptimalValuesMatchPolicyEnumeration) {
    const FiniteMdp single({m({{1}}), m({{1}})}, m({{0, 1}}), 0.9);
    EXPECT_NEAR(optimal_values(single)[0], 10.0, 1e-8);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const FiniteMdp mdp = random_mdp(3, 2, 0.9, 100 + seed);
        Vec best = Vec::Constant(3, -1e300);
        for (std::size_t code = 0; code < 8; ++code) {
            const StochasticPolicy pi = StochasticPolicy::deterministic({code & 1, (code >> 1) & 1, (code >> 2) & 1}, 2);
            best = best.cwiseMax(oracle::solve_values(policy_transition(mdp, pi), expected_reward(mdp, pi), 0.9));
        }
        EXPECT_LT((optimal_values(mdp).values - best).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Mdp, GreedyPolicyMatchesNaiveQTable) {
    const FiniteMdp mdp = random_mdp(4, 3, 0.9, 5);
    const ValueFunction v{Vector::LinSpaced(4, 0.0, 3.0)};
    const StochasticPolicy g = greedy_policy(mdp, v);
    for (int s = 0; s < 4; ++s) {
        int arg = 0;
        double best = -1e300;
        for (int a = 0; a < 3; ++a) {
            double q = mdp.rewards()(s, a);
            for (int t = 0; t < 4; ++t) q += 0.9 * mdp.transition(a)(s, t) * v.values(t);
            if (q > best) best = q, arg = a;
        }
        EXPECT_EQ(g(s, arg), 1.0);
    }
    const StochasticPolicy g0 = greedy_policy(mdp, ValueFunction{Vector::Zero(4)});
    for (int s = 0; s < 4; ++s) {
        Eigen::Index a;
        mdp.rewards().row(s).maxCoeff(&a);
        EXPECT_EQ(g0(s, a), 1.0);
    }
}

TEST(Mdp, BellmanResidualExamples) {
    const FiniteMdp mdp = random_mdp(5, 2, 0.9, 9);
    const ValueFunction v{Vector::LinSpaced(5, 0.0, 1.0)};
    EXPECT_NEAR(bellman_residual(mdp, greedy_policy(mdp, v), v), 0.0, 1e-12);
    const FiniteMdp single({m({{1}}), m({{1}})}, m({{0, 1}}), 0.0);
    EXPECT_NEAR(bellman_residual(single, StochasticPolicy::uniform(1, 2), ValueFunction{Vector::Zero(1)}), 0.5, 1e-15);
}

TEST(Mdp, PolicyDistanceAndMixture) {
    const auto a = StochasticPolicy::deterministic({0, 1}, 2);
    const auto b = StochasticPolicy::deterministic({1, 0}, 2);
    EXPECT_DOUBLE_EQ(tv_distance_policies(a, a), 0.0);
    EXPECT_DOUBLE_EQ(tv_distance_policies(a, b), 1.0);
    EXPECT_DOUBLE_EQ(mix_policies(a, b, 0.0)(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(mix_policies(a, b, 1.0)(0, 1), 1.0);
    const auto mixed = mix_policies(StochasticPolicy(m({{1, 0}})), StochasticPolicy(m({{0, 1}})), 0.25);
    EXPECT_DOUBLE_EQ(mixed(0, 0), 0.75);
    EXPECT_DOUBLE_EQ(mixed(0, 1), 0.25);
    const StochasticPolicy p(m({{0.2, 0.8}, {0.6, 0.4}}));
    const StochasticPolicy q(m({{0.9, 0.1}, {0.5, 0.5}}));
    for (double alpha : {0.1, 0.3, 0.7}) {
        EXPECT_NEAR(tv_distance_policies(p, mix_policies(p, q, alpha)), alpha * tv_distance_policies(p, q), 1e-15);
    }
}
