#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ouhedge/errors.hpp"
#include "ouhedge/levy.hpp"
#include "ouhedge/stats.hpp"

using namespace ouhedge;

TEST(Levy, ExponentialMomentRateCompoundPoisson) {
    const auto spec = SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 1.0);
    EXPECT_NEAR(exp_moment_rate(spec, 1.0), 10.0 / 7.0, 1e-14);
    EXPECT_THROW(exp_moment_rate(spec, 8.0), DomainError);
}

TEST(Levy, ExponentialMomentRateTable) {
    const auto spec = SubordinatorSpec::table({{1.0, 2.0}}, 1.0);
    EXPECT_NEAR(exp_moment_rate(spec, 1.0), 3.43656365691809, 1e-13);
}

TEST(Levy, MomentConditionRejected) {
    EXPECT_THROW(SubordinatorSpec::compound_poisson_exp(10.0, 7.0, 1.0), MomentConditionError);
    EXPECT_THROW(SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 1.0, 9.0), MomentConditionError);
    EXPECT_NO_THROW(SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 1.0, 6.0));
}

TEST(Levy, InvalidMeasuresRejected) {
    EXPECT_THROW(SubordinatorSpec::compound_poisson_exp(-1.0, 8.0, 1.0), ConfigError);
    EXPECT_THROW(SubordinatorSpec::table({{-1.0, 2.0}}, 1.0), ConfigError);
    EXPECT_THROW(SubordinatorSpec::table({{1.0, 2.0}}, 0.0), ConfigError);
}

TEST(Levy, QuadratureReproducesMoments) {
    const auto spec = SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 1.0);
    const auto q = jump_quadrature(spec);
    double m0 = 0.0, bounded = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        m0 += q.weights[k];
        bounded += q.weights[k] * -std::expm1(-q.nodes[k]);
    }
    EXPECT_NEAR(m0, 10.0, q.truncated_mass + 1e-7);
    // ∫(1 − e^{−z}) 10·8e^{−8z} dz = 10/9
    EXPECT_NEAR(bounded, 10.0 / 9.0, q.truncated_mass);
    EXPECT_NEAR(q.truncated_mass, 1e-7, 1e-12);
}

TEST(Levy, SampledCountsAndSizes) {
    const std::vector<SubordinatorSpec> specs{SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 0.5)};
    RunningStats count, size;
    for (std::uint64_t s = 0; s < 4000; ++s) {
        const auto path = sample_jump_path(specs, 2.0, s);
        count.add(static_cast<double>(path.events.size()));
        for (const auto& e : path.events) {
            size.add(e.size);
            EXPECT_GT(e.time, 0.0);
            EXPECT_LE(e.time, 2.0);
        }
    }
    EXPECT_NEAR(count.mean(), 10.0, 4.0 * count.standard_error());
    EXPECT_NEAR(size.mean(), 0.125, 4.0 * size.standard_error());
}

TEST(Levy, SamplingIsDeterministic) {
    const std::vector<SubordinatorSpec> specs{SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 1.0)};
    const auto a = sample_jump_path(specs, 5.0, 42);
    const auto b = sample_jump_path(specs, 5.0, 42);
    ASSERT_EQ(a.events.size(), b.events.size());
    for (std::size_t k = 0; k < a.events.size(); ++k) {
        EXPECT_EQ(a.events[k].time, b.events[k].time);
        EXPECT_EQ(a.events[k].size, b.events[k].size);
    }
    for (std::size_t k = 1; k < a.events.size(); ++k) EXPECT_LE(a.events[k - 1].time, a.events[k].time);
}

TEST(Levy, QuantileBoundDominatesEmpiricalQuantile) {
    const std::vector<SubordinatorSpec> specs{SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 1.0)};
    std::vector<double> totals;
    for (std::uint64_t s = 0; s < 20000; ++s) totals.push_back(sample_jump_path(specs, 1.0, s).cumulative(0, 1.0));
    std::sort(totals.begin(), totals.end());
    const double empirical = totals[static_cast<std::size_t>(0.99 * totals.size())];
    EXPECT_GE(quantile_bound(specs[0], 1.0, 0.99), empirical);
}

TEST(Levy, EmptyTableHasNoJumps) {
    const std::vector<SubordinatorSpec> specs{SubordinatorSpec::none(1.0)};
    EXPECT_TRUE(sample_jump_path(specs, 10.0, 1).events.empty());
    EXPECT_EQ(quantile_bound(specs[0], 1.0, 0.99), 0.0);
}
