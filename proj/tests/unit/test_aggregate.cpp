#include "oracles.hpp"
#include "sinkbisim/aggregate.hpp"
#include "sinkbisim/envgen.hpp"
#include "sinkbisim/measures.hpp"

#include <gtest/gtest.h>

using namespace sinkbisim;

namespace {

StateMetric line_metric(const std::vector<double>& xs) {
    const auto n = static_cast<Eigen::Index>(xs.size());
    Matrix d(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) d(i, j) = std::abs(xs[i] - xs[j]);
    return StateMetric(d);
}

double medoid_cost(const StateMetric& d, const std::vector<std::size_t>& meds) {
    double c = 0.0;
    for (std::size_t s = 0; s < d.size(); ++s) {
        double best = 1e300;
        for (auto m : meds) best = std::min(best, d(s, m));
        c += best;
    }
    return c;
}

}  // namespace

TEST(EpsilonAggregate, Extremes) {
    const StateMetric d = line_metric({0.0, 0.3, 0.7, 1.0});
    const auto all = epsilon_aggregate(d, 1.0);
    EXPECT_EQ(all.num_partitions, 1u);
    all.validate();
    const auto single = epsilon_aggregate(d, 0.0);
    EXPECT_EQ(single.num_partitions, 4u);
    single.validate();
}

TEST(EpsilonAggregate, HandTrace) {
    Matrix m(3, 3);
    m << 0, 0.05, 1, 0.05, 0, 1, 1, 1, 0;
    const auto phi = epsilon_aggregate(StateMetric(m), 0.1);
    ASSERT_EQ(phi.num_partitions, 2u);
    EXPECT_EQ(phi.labels[0], phi.labels[1]);
    EXPECT_NE(phi.labels[0], phi.labels[2]);
    EXPECT_EQ(phi.medoids[phi.labels[0]], 0u);
    EXPECT_EQ(phi.medoids[phi.labels[2]], 2u);
}

TEST(EpsilonAggregate, RadiusWithinEpsilon) {
    CounterRng rng(1, streams::kTests);
    std::vector<double> xs(30);
    for (auto& x : xs) x = rng.uniform();
    const StateMetric d = line_metric(xs);
    for (double eps : {0.01, 0.05, 0.2}) {
        const auto phi = epsilon_aggregate(d, eps);
        phi.validate();
        EXPECT_LE(phi.radius(d), eps);
    }
}

TEST(Pam, OneMedoidPerState) {
    const StateMetric d = line_metric({0.0, 0.1, 0.5, 0.9});
    const auto rep = pam_partition_report(d, 4);
    EXPECT_EQ(rep.abstraction.num_partitions, 4u);
    EXPECT_NEAR(rep.total_cost, 0.0, 1e-15);
}

TEST(Pam, MatchesBruteForceOnSmallInstances) {
    CounterRng rng(2, streams::kTests);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> xs(9);
        for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = (i < 4 ? 0.0 : 5.0) + rng.uniform();
        const StateMetric d = line_metric(xs);
        double best = 1e300;
        for (std::size_t a = 0; a < 9; ++a)
            for (std::size_t b = a + 1; b < 9; ++b) best = std::min(best, medoid_cost(d, {a, b}));
        const auto rep = pam_partition_report(d, 2);
        EXPECT_NEAR(rep.total_cost, best, 1e-12);
        for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(rep.abstraction.labels[i] == rep.abstraction.labels[0], i < 4);
        for (std::size_t k = 1; k < rep.cost_history.size(); ++k)
            EXPECT_LE(rep.cost_history[k], rep.cost_history[k - 1] + 1e-12);
    }
}

TEST(Pam, RecoversEquivalenceClasses) {
    const GeneratedMdp g = gen_ring_sparse(60, 20, 4);
    Matrix d(60, 60);
    for (int i = 0; i < 60; ++i)
        for (int j = 0; j < 60; ++j)
            d(i, j) = g.ec_labels[i] == g.ec_labels[j] ? 0.0 : 1.0 + 0.01 * std::abs(int(g.ec_labels[i]) - int(g.ec_labels[j]));
    const auto phi = pam_partition(StateMetric(d), 20);
    EXPECT_NEAR(nmi(phi.labels, g.ec_labels), 1.0, 1e-12);
}

TEST(AbstractView, IdentityAndSinglePartition) {
    const GeneratedMdp g = gen_ring_sparse(20, 5, 5);
    const auto pi = StochasticPolicy::uniform(20, 2);
    const Vector r = expected_reward(g.mdp, pi);
    const Matrix p = policy_transition(g.mdp, pi);
    const auto ident = epsilon_aggregate(line_metric(std::vector<double>(20, 0.0)), 0.0);
    Abstraction singles;
    singles.num_partitions = 20;
    for (std::size_t s = 0; s < 20; ++s) singles.labels.push_back(s), singles.medoids.push_back(s);
    const auto view = build_abstract_chain(r, p, singles);
    EXPECT_LT((view.rewards - r).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((view.transitions - p).cwiseAbs().maxCoeff(), 1e-15);
    const auto lifted = lift_values(evaluate_abstract(view, 0.9), singles);
    EXPECT_LT((lifted.values - policy_evaluation(g.mdp, pi).values).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(ident.num_partitions, 1u);
    const auto one = build_abstract_chain(r, p, ident);
    EXPECT_NEAR(one.rewards(0), r.mean(), 1e-15);
    EXPECT_NEAR(one.transitions(0, 0), 1.0, 1e-15);
    const auto v1 = lift_values(Vector::Constant(1, 3.5), ident);
    EXPECT_EQ(v1.values, Vector::Constant(20, 3.5));
}

TEST(AbstractView, RingEquivalenceClassesAreExact) {
    const GeneratedMdp g = gen_ring_sparse(40, 8, 6);
    Abstraction ec;
    ec.num_partitions = 8;
    ec.labels = g.ec_labels;
    ec.medoids.assign(8, 0);
    for (std::size_t s = 40; s-- > 0;) ec.medoids[ec.labels[s]] = s;
    const auto pi = StochasticPolicy::uniform(40, 2);
    const auto view = build_abstract_chain(expected_reward(g.mdp, pi), policy_transition(g.mdp, pi), ec);
    for (int b = 0; b < 8; ++b) {
        int nonzero = 0;
        for (int c = 0; c < 8; ++c) nonzero += view.transitions(b, c) > 1e-12 ? 1 : 0;
        EXPECT_LE(nonzero, 2);  // the next class and the reset class
        EXPECT_NEAR(view.transitions.row(b).sum(), 1.0, 1e-12);
    }
    const auto lifted = lift_values(evaluate_abstract(view, 0.9), ec);
    EXPECT_LT((lifted.values - policy_evaluation(g.mdp, pi).values).cwiseAbs().maxCoeff(), 1e-8);
}
