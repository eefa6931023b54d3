#include "sinkbisim/aggregate.hpp"
#include "sinkbisim/envgen.hpp"
#include "sinkbisim/rng.hpp"

#include <gtest/gtest.h>

using namespace sinkbisim;

namespace {

void expect_ec_constant(const GeneratedMdp& g, const Vector& v, double tol) {
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j)
            if (g.ec_labels[i] == g.ec_labels[j]) EXPECT_NEAR(v(i), v(j), tol);
}

Abstraction ec_abstraction(const GeneratedMdp& g) {
    Abstraction a;
    a.num_partitions = g.num_classes;
    a.labels = g.ec_labels;
    a.medoids.assign(g.num_classes, 0);
    for (std::size_t s = g.ec_labels.size(); s-- > 0;) a.medoids[a.labels[s]] = s;
    return a;
}

}  // namespace

TEST(Envgen, RingStructure) {
    const GeneratedMdp g = gen_ring_sparse(200, 20, 1);
    EXPECT_EQ(g.mdp.num_states(), 200u);
    EXPECT_EQ(g.mdp.num_actions(), 2u);
    EXPECT_EQ(g.num_classes, 20u);
    EXPECT_EQ((g.mdp.rewards().array() != 0.0).count(), 10);
    for (std::size_t s = 0; s < 200; ++s) {
        for (std::size_t a = 0; a < 2; ++a) {
            const auto row = g.mdp.transition(a).row(s);
            EXPECT_NEAR(row.sum(), 1.0, 1e-12);
            const std::size_t b = g.ec_labels[s];
            const std::size_t want = a == 1 ? 0 : std::min<std::size_t>(b + 1, 19);
            double mass = 0.0;
            for (std::size_t t = 0; t < 200; ++t) if (g.ec_labels[t] == want) mass += row(t);
            EXPECT_NEAR(mass, 1.0, 1e-12);
        }
        EXPECT_EQ(g.mdp.rewards()(s, 0), g.ec_labels[s] == 19 ? 1.0 : 0.0);
    }
    EXPECT_THROW(gen_ring_sparse(201, 20, 1), std::invalid_argument);
}

TEST(Envgen, RingLiftedEvaluationIsExact) {
    const GeneratedMdp g = gen_ring_sparse(60, 10, 2);
    CounterRng rng(3, streams::kTests);
    Matrix per_class(10, 2);
    for (int b = 0; b < 10; ++b) {
        const double q = rng.uniform();
        per_class(b, 0) = q;
        per_class(b, 1) = 1.0 - q;
    }
    Matrix probs(60, 2);
    for (int s = 0; s < 60; ++s) probs.row(s) = per_class.row(g.ec_labels[s]);
    const StochasticPolicy pi(probs);
    const auto phi = ec_abstraction(g);
    const auto view = build_abstract_chain(expected_reward(g.mdp, pi), policy_transition(g.mdp, pi), phi);
    const auto lifted = lift_values(evaluate_abstract(view, 0.9), phi);
    EXPECT_LT((lifted.values - policy_evaluation(g.mdp, pi).values).cwiseAbs().maxCoeff(), 1e-8);
    expect_ec_constant(g, optimal_values(g.mdp).values, 1e-8);
}

TEST(Envgen, DenseRewardLevels) {
    const auto r = dense_reward_levels(0.9, 20);
    const double e = (1.0 - 0.9) / (1.0 - std::pow(0.9, 20));
    EXPECT_NEAR(e, 0.11384032599155283, 1e-15);
    EXPECT_NEAR(r.front(), e, 1e-15);
    EXPECT_NEAR(r.back(), 1.0, 1e-12);
    for (std::size_t i = 1; i < r.size(); ++i) {
        EXPECT_GT(r[i], r[i - 1]);
        EXPECT_NEAR(r[i], 0.9 * r[i - 1] + e, 1e-14);
    }
    const GeneratedMdp g = gen_dense_reward(100, 20, 0.9, 4);
    EXPECT_LE(g.mdp.rewards().maxCoeff(), 1.0);
    EXPECT_GE(g.mdp.rewards().minCoeff(), 0.0);
    expect_ec_constant(g, optimal_values(g.mdp).values, 1e-8);
    for (std::size_t s = 0; s < 100; ++s) {
        double stay = 0.0;
        for (std::size_t t = 0; t < 100; ++t) if (g.ec_labels[t] == g.ec_labels[s]) stay += g.mdp.transition(1)(s, t);
        EXPECT_NEAR(stay, 1.0, 1e-12);
    }
}

TEST(Envgen, RandomChain) {
    const ChainParams cp = random_chain_params(20, 10, 5);
    for (std::size_t b = 0; b < 20; ++b) {
        EXPECT_GT(cp.jump_prob[b], 0.0);
        EXPECT_LT(cp.jump_prob[b], 0.25);
        EXPECT_EQ(cp.optimal_action[b], (b + 1) % 10);  // ECs are 1-indexed in the construction
        EXPECT_NE(cp.jump_target[b], b);
        if (b + 1 < 20) EXPECT_NE(cp.jump_target[b], b + 1);
    }
    const GeneratedMdp g = gen_random_chain(100, 20, 10, 5);
    EXPECT_EQ(g.mdp.num_actions(), 10u);
    expect_ec_constant(g, optimal_values(g.mdp).values, 1e-8);
}

TEST(Envgen, Perturbation) {
    const GeneratedMdp g = gen_ring_sparse(40, 8, 6);
    const GeneratedMdp same = perturb_transitions(g, 0.0, 1);
    for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(same.mdp.transition(a), g.mdp.transition(a));
    const GeneratedMdp full = perturb_transitions(g, 1.0, 1);
    EXPECT_GT((full.mdp.transition(0).array() > 0.0).count(), (g.mdp.transition(0).array() > 0.0).count());
    const GeneratedMdp light = perturb_transitions(g, 0.05, 2);
    int kept = 0;
    for (std::size_t s = 0; s < 40; ++s) {
        Eigen::Index a, b;
        g.mdp.transition(0).row(s).maxCoeff(&a);
        light.mdp.transition(0).row(s).maxCoeff(&b);
        kept += g.ec_labels[a] == g.ec_labels[b] ? 1 : 0;
        EXPECT_NEAR(light.mdp.transition(0).row(s).sum(), 1.0, 1e-12);
    }
    EXPECT_GT(kept, 20);
}

TEST(Envgen, SameSeedSameMdp) {
    EnvConfig c;
    c.num_states = 40;
    c.num_classes = 8;
    for (Family f : {Family::ring, Family::dense, Family::random_chain}) {
        c.family = f;
        const auto a = generate(c, 11), b = generate(c, 11), d = generate(c, 12);
        EXPECT_EQ(a.mdp.transition(0), b.mdp.transition(0));
        EXPECT_NE(a.mdp.transition(0), d.mdp.transition(0));
        EXPECT_EQ(parse_family(family_name(f)), f);
    }
}

TEST(Rng, SimplexSampling) {
    CounterRng rng(7, streams::kTests);
    EXPECT_EQ(sample_simplex(1, rng), std::vector<double>{1.0});
    const std::size_t dim = 5, n = 100000;
    std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const auto x = sample_simplex(dim, rng);
        double tot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            EXPECT_GE(x[i], 0.0);
            sum[i] += x[i];
            sq[i] += x[i] * x[i];
            tot += x[i];
        }
        ASSERT_NEAR(tot, 1.0, 1e-12);
    }
    for (std::size_t i = 0; i < dim; ++i) {
        const double mean = sum[i] / n;
        const double var = sq[i] / n - mean * mean;
        const double se = std::sqrt(var / n);
        // 4 sigma per coordinate keeps the family-wise false alarm rate near 3e-4.
        EXPECT_LT(std::abs(mean - 1.0 / dim), 4.0 * se);
        // Uniform on the simplex is Dirichlet(1): Var = (d - 1) / (d^2 (d + 1)).
        const double d = static_cast<double>(dim);
        EXPECT_NEAR(var, (d - 1.0) / (d * d * (d + 1.0)), 0.02 * var);
    }
}

TEST(Rng, StreamsAreReproducibleAndIndependent) {
    CounterRng a(3, 1), b(3, 1), c(3, 2);
    for (int i = 0; i < 10; ++i) {
        const auto x = a(), y = b(), z = c();
        EXPECT_EQ(x, y);
        EXPECT_NE(x, z);
    }
    EXPECT_NE(a.split(1)(), a.split(2)());
}
