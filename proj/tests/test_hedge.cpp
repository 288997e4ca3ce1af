#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "ouhedge/errors.hpp"
#include "ouhedge/hedge.hpp"

using namespace ouhedge;

namespace {

FactorVector<1> fv(double x) { return FactorVector<1>::Constant(x); }
AssetVector<1> av(double x) { return AssetVector<1>::Constant(x); }

}  // namespace

namespace {

MarketSetup<1, 1> bs_setup(double alpha, double beta, double horizon, double step) {
    return {std::make_shared<ConstantBS>(alpha, beta, 0.0),
            OUParams<1>(fv(1.0), fv(1.0)),
            {SubordinatorSpec::none(1.0)},
            av(100.0),
            horizon,
            step};
}

}  // namespace

TEST(Hedge, ClosedFormsAtFigureEndpoint) {
    const auto cf = closed_forms(3e4, 1e4, std::exp(-16.0));
    EXPECT_NEAR(cf.herr, 45.0140698877036, 1e-10);
    EXPECT_NEAR(cf.var, 45.0140749533704, 1e-10);
    EXPECT_NEAR(cf.error, 5.06566678970337e-6, 1e-17);
}

TEST(Hedge, ClosedFormsModerateHorizon) {
    const auto cf = closed_forms(3e4, 1e4, std::exp(-4.0));
    EXPECT_NEAR(cf.var, 7462944.14550962, 1e-6);
    EXPECT_NEAR(cf.herr, 7326255.55549367, 1e-6);
    EXPECT_NEAR(cf.error, 136688.590015947, 1e-7);
    EXPECT_NEAR(cf.var - cf.herr, cf.error, 1e-8);
}

TEST(Hedge, ClosedFormsDegenerate) {
    const auto cf = closed_forms(5.0, 5.0, 0.3);
    EXPECT_EQ(cf.var, 0.0);
    EXPECT_EQ(cf.herr, 0.0);
    EXPECT_EQ(cf.error, 0.0);
    EXPECT_THROW(closed_forms(1.0, 0.0, 1.0), DomainError);
    EXPECT_THROW(closed_forms(1.0, 0.0, 0.0), DomainError);
}

TEST(Hedge, StrategyAndBookkeeping) {
    const AssetVector<1> xi = av(0.6), a = av(0.2);
    const AssetVector<1> dD = av(2.0);
    const auto phi = strategy_phi<1>(xi, a, 10.0, 0.5, 10.3);
    EXPECT_NEAR(phi(0), 0.56, 1e-15);
    const double psi = psi_step<1>(0.5, xi, a, 10.0, 10.3, dD);
    EXPECT_NEAR(psi - 0.5, 1.12, 1e-14);
    EXPECT_NEAR(psi - 0.5, phi.dot(dD), 1e-14);
}

TEST(Hedge, PureHedgeOneAsset) {
    const ConstantBS bs(0.1, 0.2);
    const auto xi = pure_hedge_xi(bs, av(100.0), fv(1.0),
                                  av(11.6));
    EXPECT_NEAR(xi(0), 0.58, 1e-14);
}

TEST(Hedge, ContinuousErrorIsExactUnderTilt) {
    const auto setup = bs_setup(2.0, 100.0, 4e4, 100.0);
    const std::vector<double> hs{1e4, 4e4};
    const auto est = continuous_hedge_errors(setup, 50, 1, 3e4, 1e4, hs, BrownianTilt{2.0});
    EXPECT_NEAR(est[0].mean, 4e8 * std::exp(-4.0), 1e-6 * 4e8 * std::exp(-4.0));
    EXPECT_NEAR(est[1].mean, 45.0140698877036, 1e-6 * 45.0);
    EXPECT_LT(est[1].se, 1e-8);
    const std::vector<double> off{123.0};
    EXPECT_THROW(continuous_hedge_errors(setup, 2, 1, 3e4, 1e4, off), ConfigError);
}

TEST(Hedge, DiscreteHedgeOfConstantClaim) {
    const auto setup = bs_setup(0.1, 0.2, 1.0, 0.001);
    const ConstantRhoSurface<1> surface(0.25, 1.0);
    HedgeConfig cfg;
    cfg.use_closed_form_v = true;
    cfg.tilt.kappa = 2.0;
    cfg.record_paths = 2;
    const auto rep = run_hedge(setup, 2000, 3, surface, nullptr, Payoff::constant(200.0), 100.0, cfg);
    ASSERT_TRUE(rep.closed.has_value());
    EXPECT_NEAR(rep.closed->herr, 1e4 * std::exp(-0.25), 1e-9);
    EXPECT_NEAR(rep.mse.mean, rep.closed->herr, std::max(4.0 * rep.mse.se, 0.02 * rep.closed->herr));
    EXPECT_LT(rep.max_bookkeeping_residual, 1e-9);
    std::ostringstream csv, summary;
    rep.write_csv(csv);
    rep.write_summary(summary);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "path,t,phi,psi,wealth,V");
    EXPECT_NE(summary.str().find("PASS"), std::string::npos);
}

TEST(Hedge, RequiresSolutionOrClosedForm) {
    const auto setup = bs_setup(0.1, 0.2, 1.0, 0.01);
    const ConstantRhoSurface<1> surface(0.25, 1.0);
    EXPECT_THROW(run_hedge(setup, 10, 1, surface, nullptr, Payoff::call(100.0), 8.0), ConfigError);
    HedgeConfig cfg;
    cfg.use_closed_form_v = true;
    EXPECT_THROW(run_hedge(setup, 10, 1, surface, nullptr, Payoff::call(100.0), 8.0, cfg), ConfigError);
}
