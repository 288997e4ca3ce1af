#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ouhedge/black_scholes.hpp"
#include "ouhedge/errors.hpp"
#include "ouhedge/market.hpp"
#include "ouhedge/opportunity.hpp"
#include "ouhedge/stats.hpp"

using namespace ouhedge;

namespace {

FactorVector<1> fv(double x) { return FactorVector<1>::Constant(x); }
AssetVector<1> av(double x) { return AssetVector<1>::Constant(x); }

}  // namespace

namespace {

MarketSetup<1, 1> bs_setup(double alpha, double beta, double rate, double horizon, double step) {
    return {std::make_shared<ConstantBS>(alpha, beta, rate),
            OUParams<1>(fv(1.0), fv(1.0)),
            {SubordinatorSpec::none(1.0)},
            av(100.0),
            horizon,
            step};
}

}  // namespace

TEST(Market, MeanVarianceTradeoff) {
    const ConstantBS bs(2.0, 100.0);
    const FactorVector<1> y = fv(1.0);
    EXPECT_NEAR(rho(bs, y), 4e-4, 1e-18);
    const BNS bns(0.5, 0.02);
    const FactorVector<1> y10 = fv(10.0);
    EXPECT_NEAR(rho(bns, y10), 0.049, 1e-15);
    const BNS bns_r(0.5, 0.02, 0.1);
    EXPECT_NEAR(rho(bns_r, y10), 0.036, 1e-15);
    EXPECT_NEAR(rho_bar(bns, y10), 0.049, 1e-15);
}

TEST(Market, AdjustmentProcess) {
    const ConstantBS bs(2.0, 100.0);
    const auto a = adjustment_a(bs, av(100.0), fv(1.0));
    EXPECT_NEAR(a(0), 2e-6, 1e-20);
    EXPECT_THROW(adjustment_a(bs, av(-1.0), fv(1.0)), DomainError);
}

TEST(Market, SingularVolatilityRejected) {
    const ConstantBS bs(0.1, 0.0);
    EXPECT_THROW(local_coefficients(bs, fv(1.0)), LinearAlgebraError);
}

TEST(Market, TwoAssetFunctionModel) {
    using M = FunctionModel<2, 1>;
    const M model(
        2, 1, 0.0, [](const M::Factor&) { return M::Assets(0.1, 0.05); },
        [](const M::Factor&) {
            M::Matrix s;
            s << 0.2, 0.0, 0.1, 0.3;
            return s;
        });
    const auto c = local_coefficients(model, fv(1.0));
    Eigen::Matrix2d s;
    s << 0.2, 0.0, 0.1, 0.3;
    const Eigen::Vector2d b(0.1, 0.05);
    const Eigen::Vector2d prem = (s * s.transpose()).inverse() * b;
    EXPECT_NEAR(c.rho, b.dot(prem), 1e-14);
    EXPECT_NEAR((c.market_price - s.transpose() * prem).norm(), 0.0, 1e-14);
    const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s * s.transpose()).eigenvalues();
    EXPECT_NEAR(condition_number<2>(s * s.transpose()), ev(1) / ev(0), 1e-10);
}

TEST(Market, ConditionNumber) {
    EXPECT_EQ(condition_number<1>(AssetMatrix<1>::Constant(4.0)), 1.0);
    Eigen::Matrix2d m;
    m << 4.0, 0.0, 0.0, 1.0;
    EXPECT_NEAR(condition_number<2>(m), 4.0, 1e-14);
}

TEST(Market, ConditionsForBns) {
    const BNS bns(0.5, 0.02);
    std::vector<FactorVector<1>> ys;
    for (double y = 0.05; y < 50.0; y *= 1.5) ys.push_back(fv(y));
    const auto rep = check_conditions(bns, std::span<const FactorVector<1>>(ys));
    ASSERT_NE(rep.find("sigma_sigma_invertible"), nullptr);
    EXPECT_TRUE(rep.find("sigma_sigma_invertible")->holds);
    EXPECT_GT(rep.max_rho, 0.0);
}

TEST(Market, SimulatedPricesFollowLogEuler) {
    const auto setup = bs_setup(0.1, 0.2, 0.03, 1.0, 0.01);
    const auto b = simulate_path(setup, 7, 3);
    double w = 0.0;
    for (const auto& dw : b.dW) w += dw(0);
    const double expect = 100.0 * std::exp((0.1 - 0.02) * 1.0 + 0.2 * w);
    EXPECT_NEAR(b.S.back()(0), expect, 1e-9 * expect);
    EXPECT_NEAR(b.D.back()(0), std::exp(-0.03) * b.S.back()(0), 1e-12 * expect);
}

TEST(Market, PathsAreReproducible) {
    const auto setup = bs_setup(0.1, 0.2, 0.0, 1.0, 0.01);
    const auto a = simulate_path(setup, 11, 5);
    const auto b = simulate_path(setup, 11, 5);
    const auto c = simulate_path(setup, 11, 6);
    EXPECT_EQ(a.S.back()(0), b.S.back()(0));
    EXPECT_NE(a.S.back()(0), c.S.back()(0));
}

TEST(Market, MartingaleUnderDiscounting) {
    const auto setup = bs_setup(0.02, 0.2, 0.02, 1.0, 0.05);
    RunningStats s;
    for (std::size_t p = 0; p < 20000; ++p) s.add(simulate_path(setup, 3, p).D.back()(0));
    EXPECT_NEAR(s.mean(), 100.0, 4.0 * s.standard_error());
}

TEST(Market, TiltWeightIsUnbiased) {
    const auto setup = bs_setup(0.1, 0.2, 0.0, 1.0, 0.05);
    RunningStats w;
    for (std::size_t p = 0; p < 20000; ++p) w.add(simulate_path(setup, 9, p, BrownianTilt{2.0}).weight());
    EXPECT_NEAR(w.mean(), 1.0, 4.0 * w.standard_error());
}

TEST(Market, InvalidSetupRejected) {
    auto setup = bs_setup(0.1, 0.2, 0.0, 1.0, 0.01);
    setup.specs = {SubordinatorSpec::none(2.0)};
    EXPECT_THROW(setup.validate(), ConfigError);
    EXPECT_THROW(ConstantBS(0.1, 0.2, -0.01), ConfigError);
    EXPECT_THROW(TabulatedModel({1.0, 0.5}, {0.1, 0.1}, {0.2, 0.2}), ConfigError);
}

TEST(BlackScholes, ReferenceValues) {
    const auto q = bs::european(true, 100.0, 100.0, 0.02, 0.2, 1.0);
    EXPECT_NEAR(q.price, 8.91603727857254, 1e-12);
    EXPECT_NEAR(q.delta, 0.579259709439103, 1e-12);
    EXPECT_NEAR(bs::european(false, 100.0, 100.0, 0.02, 0.2, 1.0).price, 6.93590460924807, 1e-12);
}
