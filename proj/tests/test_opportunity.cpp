#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ouhedge/errors.hpp"
#include "ouhedge/market.hpp"
#include "ouhedge/opportunity.hpp"

using namespace ouhedge;

namespace {

FactorVector<1> fv(double x) { return FactorVector<1>::Constant(x); }
AssetVector<1> av(double x) { return AssetVector<1>::Constant(x); }

}  // namespace

namespace {

// ∫₀¹ ρ(10e^{-s}) ds for b = 0.5 + 0.02y, σ² = y and no jumps, in closed form.
constexpr double kDeterministicP = 0.936612601368950;

// Monte-Carlo reference for BNS(0.5, 0.02), λ = 1, ν = 10·Exp(8), T = 1,
// P(0, 10), from 10⁶ independent samples (SE 1.03e-5).
constexpr double kJumpP = 0.940131;

MarketSetup<1, 1> fig3_setup(double horizon, double step) {
    return {std::make_shared<BNS>(0.5, 0.02),
            OUParams<1>(fv(1.0), fv(10.0)),
            {SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 1.0)},
            av(100.0),
            horizon,
            step};
}

}  // namespace

TEST(Opportunity, ConstantRhoSurface) {
    const ConstantRhoSurface<1> s(4e-4, 4e4);
    EXPECT_NEAR(s.value(0.0, fv(3.0)), 1.12535174719259e-7, 1e-19);
    EXPECT_EQ(s.value(4e4, fv(3.0)), 1.0);
    EXPECT_THROW(ConstantRhoSurface<1>(-1.0, 1.0), DomainError);
}

TEST(Opportunity, IpdeWithoutJumpsMatchesClosedForm) {
    const BNS model(0.5, 0.02);
    const OUParams<1> ou(fv(1.0), fv(10.0));
    const auto s = solve_P_ipde(model, ou, SubordinatorSpec::none(1.0), 1.0);
    EXPECT_NEAR(s.value_at(0.0, 10.0), kDeterministicP, 2e-4);
    EXPECT_EQ(s.value_at(1.0, 10.0), 1.0);
}

TEST(Opportunity, MonteCarloWithoutJumpsIsExact) {
    const BNS model(0.5, 0.02);
    const std::vector<SubordinatorSpec> specs{SubordinatorSpec::none(1.0)};
    const auto e = estimate_P_mc(model, fv(1.0), std::span<const SubordinatorSpec>(specs), 1.0,
                                 0.0, fv(10.0), 100, 1);
    EXPECT_NEAR(e.mean, kDeterministicP, 1e-9);
    EXPECT_LT(e.se, 1e-12);
    EXPECT_THROW(estimate_P_mc(model, fv(1.0), std::span<const SubordinatorSpec>(specs), 1.0,
                               0.0, fv(10.0), 10, 1),
                 ConfigError);
}

TEST(Opportunity, IpdeWithJumpsMatchesReference) {
    const auto setup = fig3_setup(1.0, 0.01);
    const auto s = solve_P_ipde(*setup.model, setup.ou, setup.specs[0], 1.0);
    EXPECT_NEAR(s.value_at(0.0, 10.0), kJumpP, 1e-4);
    EXPECT_EQ(s.extrapolations(), 0u);
}

TEST(Opportunity, IpdeIsMonotoneAndBounded) {
    const auto setup = fig3_setup(1.0, 0.01);
    const auto s = solve_P_ipde(*setup.model, setup.ou, setup.specs[0], 1.0);
    for (double y : {0.5, 2.0, 10.0, 20.0}) {
        double prev = 0.0;
        for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const double p = s.value_at(t, y);
            EXPECT_GT(p, 0.0);
            EXPECT_LE(p, 1.0);
            EXPECT_GE(p, prev);
            prev = p;
        }
    }
}

TEST(Opportunity, IpdeRejectsUnstableStep) {
    const auto setup = fig3_setup(1.0, 0.01);
    IpdeConfig cfg;
    cfg.courant = 2.0;
    EXPECT_THROW(solve_P_ipde(*setup.model, setup.ou, setup.specs[0], 1.0, cfg), StepSizeError);
}

TEST(Opportunity, StochasticExponential) {
    const std::vector<double> n{0.0, 1.0}, qv{0.0, 0.5};
    const auto e = stochastic_exponential(n, qv);
    EXPECT_NEAR(e[1], std::exp(0.75), 1e-14);
    const std::vector<double> bad{1.0, 1.0};
    EXPECT_THROW(stochastic_exponential(bad, qv), DomainError);
}

TEST(Opportunity, DensityIsGirsanovForConstantCoefficients) {
    MarketSetup<1, 1> setup{std::make_shared<ConstantBS>(0.1, 0.2, 0.02),
                            OUParams<1>(fv(1.0), fv(1.0)),
                            {SubordinatorSpec::none(1.0)},
                            av(100.0),
                            1.0,
                            0.01};
    const ConstantRhoSurface<1> surface(0.16, 1.0);
    const auto b = simulate_path(setup, 5, 0);
    const auto dp = density_path(*setup.model, surface, b);
    double w = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
        if (k > 0) w += b.dW[k - 1](0);
        const double t = b.grid().times[k];
        EXPECT_NEAR(dp.Z[k], std::exp(-0.4 * w - 0.08 * t), 1e-12 * std::exp(-0.4 * w - 0.08 * t));
    }
}

TEST(Opportunity, DensityHasUnitMean) {
    const auto setup = fig3_setup(1.0, 0.01);
    const auto s = solve_P_ipde(*setup.model, setup.ou, setup.specs[0], 1.0);
    RunningStats z;
    for (std::size_t p = 0; p < 4000; ++p) {
        const auto b = simulate_path(setup, 17, p);
        const auto dp = density_path(*setup.model, s, b);
        EXPECT_GT(dp.terminal(), 0.0);
        z.add(dp.terminal());
    }
    EXPECT_NEAR(z.mean(), 1.0, 4.0 * z.standard_error());
}

TEST(Opportunity, JumpResponseBelowRhoMinimum) {
    const auto setup = fig3_setup(1.0, 0.01);
    const auto s = solve_P_ipde(*setup.model, setup.ou, setup.specs[0], 1.0);
    const auto quads = std::vector<JumpQuadrature>{jump_quadrature(setup.specs[0])};
    const auto ing = driver_ingredients<1, 1>(*setup.model, s, quads, 0.0, fv(10.0));
    ASSERT_EQ(ing.F.size(), 1u);
    // ρ decreases on (0, α/β) = (0, 25), so upward jumps from y = 10 raise P.
    for (std::size_t q = 0; q < ing.F[0].size(); ++q) {
        if (quads[0].nodes[q] > 15.0) continue;
        EXPECT_GT(ing.F[0][q], 0.0);
        EXPECT_LT(ing.F[0][q], 0.1);
    }
    EXPECT_NEAR(ing.bar_B(0), 0.7 / std::sqrt(10.0), 1e-14);
}

TEST(Opportunity, KDecompositionResidualShrinks) {
    const auto coarse = fig3_setup(1.0, 0.01);
    const auto fine = fig3_setup(1.0, 0.001);
    const auto s = solve_P_ipde(*coarse.model, coarse.ou, coarse.specs[0], 1.0);
    const auto quads = std::vector<JumpQuadrature>{jump_quadrature(coarse.specs[0])};
    auto mean_abs = [&](const MarketSetup<1, 1>& setup) {
        RunningStats r;
        for (std::size_t p = 0; p < 20; ++p) {
            const auto b = simulate_path(setup, 23, p);
            r.add(std::abs(k_decomposition_residual(*setup.model, s, b, std::span<const SubordinatorSpec>(setup.specs),
                                                    std::span<const JumpQuadrature>(quads))));
        }
        return r.mean();
    };
    EXPECT_LT(mean_abs(fine), 0.05);
    EXPECT_LT(mean_abs(fine), mean_abs(coarse) + 1e-3);
}
