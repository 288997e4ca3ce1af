#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ouhedge/black_scholes.hpp"
#include "ouhedge/bsde.hpp"
#include "ouhedge/errors.hpp"
#include "ouhedge/regression.hpp"

using namespace ouhedge;

namespace {

FactorVector<1> fv(double x) { return FactorVector<1>::Constant(x); }
AssetVector<1> av(double x) { return AssetVector<1>::Constant(x); }

}  // namespace

namespace {

MarketSetup<1, 1> bs_setup(double alpha, double beta, double rate, double step) {
    return {std::make_shared<ConstantBS>(alpha, beta, rate),
            OUParams<1>(fv(1.0), fv(1.0)),
            {SubordinatorSpec::none(1.0)},
            av(100.0),
            1.0,
            step};
}

}  // namespace

TEST(Bsde, PayoffDiscounting) {
    const AssetVector<1> s = av(120.0);
    EXPECT_NEAR(Payoff::call(100.0)(s, 0.05, 1.0), 19.0245884900143, 1e-12);
    EXPECT_EQ(Payoff::put(100.0)(s, 0.05, 1.0), 0.0);
    EXPECT_EQ(Payoff::constant(3e4)(s, 0.05, 1.0), 3e4);
    EXPECT_THROW(Payoff::call(0.0), ConfigError);
}

TEST(Bsde, DriverForms) {
    const std::vector<SubordinatorSpec> specs{SubordinatorSpec::table({{0.5, 1.0}}, 2.0)};
    const std::vector<JumpQuadrature> quads{jump_quadrature(specs[0])};
    DriverIngredients<1> ing;
    ing.F = {{-0.1}};
    ing.bar_B = av(0.3);
    const AssetVector<1> v_bar = av(2.0);
    const std::vector<std::vector<double>> v_tilde{{4.0}};
    const double v = 10.0;
    // mean value: V̄B̄ − λν Ṽ F = 0.6 − 2·(4·−0.1)
    EXPECT_NEAR(driver_g<1>(DriverForm::mean_value, v, v_bar, v_tilde, ing, quads, specs), 1.4, 1e-14);
    // structural: −V̄B̄ + λν(ṼF + V F²) = −0.6 + 2(−0.4 + 0.1)
    EXPECT_NEAR(driver_g<1>(DriverForm::structural, v, v_bar, v_tilde, ing, quads, specs), -1.2, 1e-14);
}

TEST(Bsde, ParsersRejectUnknownNames) {
    EXPECT_EQ(parse_driver_form("structural"), DriverForm::structural);
    EXPECT_EQ(parse_basis_kind("spline"), BasisKind::spline);
    EXPECT_THROW(parse_driver_form("other"), ConfigError);
    EXPECT_THROW(parse_jump_estimator("other"), ConfigError);
    EXPECT_THROW(parse_basis_kind("other"), ConfigError);
}

TEST(Bsde, LeastSquaresRecoversPolynomial) {
    Eigen::MatrixXd d(200, 1), y(200, 1);
    Eigen::VectorXd target(200);
    for (int p = 0; p < 200; ++p) {
        d(p, 0) = 80.0 + 0.2 * p;
        y(p, 0) = 1.0 + 0.01 * ((37 * p) % 200);
        target(p) = 3.0 + 0.5 * d(p, 0) - 2.0 * y(p, 0);
    }
    const StateBasis basis(d, y, {});
    const auto fit = least_squares(basis.design(d, y), target);
    EXPECT_NEAR(fit.r2, 1.0, 1e-10);
    const Eigen::VectorXd f = basis.features(Eigen::VectorXd::Constant(1, 100.0), Eigen::VectorXd::Constant(1, 1.5));
    EXPECT_NEAR(f.dot(fit.coef), 3.0 + 50.0 - 3.0, 1e-8);
}

TEST(Bsde, ConstantClaimGivesConstantValue) {
    const auto setup = bs_setup(0.1, 0.2, 0.0, 0.05);
    const ConstantRhoSurface<1> surface(0.25, 1.0);
    const auto data = simulate_regression_data(setup, 1000, 3, Payoff::constant(500.0), 1);
    const auto sol = solve_backward<1, 1>(data, *setup.model, surface, setup.specs);
    EXPECT_NEAR(sol.V0.mean, 500.0, 1e-8);
    for (const auto& d : sol.dates) EXPECT_NEAR(d.mean_V, 500.0, 1e-8);
    EXPECT_LT(sol.terminal_residual, 1e-9);
}

TEST(Bsde, CallMatchesBlackScholes) {
    const auto setup = bs_setup(0.1, 0.2, 0.02, 0.02);
    const ConstantRhoSurface<1> surface(0.16, 1.0);
    BsdeConfig cfg;
    cfg.basis.kind = BasisKind::spline;
    const auto data = simulate_regression_data(setup, 4000, 5, Payoff::call(100.0), 1);
    const auto sol = solve_backward<1, 1>(data, *setup.model, surface, setup.specs, cfg);
    const double bs = bs::call_price(100.0, 100.0, 0.02, 0.2, 1.0);
    EXPECT_NEAR(sol.V0.mean, bs, 4.0 * sol.V0.se);
    const auto orc = mc_value_streaming(setup, 4000, 5, surface, Payoff::call(100.0));
    EXPECT_NEAR(orc.value.mean, bs, 4.0 * orc.value.se);
    EXPECT_NEAR(orc.density_mean.mean, 1.0, 4.0 * orc.density_mean.se);
}

TEST(Bsde, TooFewPathsRejected) {
    const auto setup = bs_setup(0.1, 0.2, 0.0, 0.1);
    const ConstantRhoSurface<1> surface(0.25, 1.0);
    const auto data = simulate_regression_data(setup, 100, 3, Payoff::call(100.0), 1);
    EXPECT_THROW((solve_backward<1, 1>(data, *setup.model, surface, setup.specs)), ConfigError);
}

TEST(Bsde, LocalizationConvergesToFullOracle) {
    const std::vector<double> x{1.0, 2.0, 3.0, 4.0}, l{0.5, 1.5, 2.5, 3.5};
    EXPECT_DOUBLE_EQ(localized_value(x, l, 10.0).mean, 2.5);
    EXPECT_DOUBLE_EQ(localized_value(x, l, 2.0).mean, 0.75);
    const std::vector<double> short_l{1.0};
    EXPECT_THROW(localized_value(x, short_l, 1.0), ConfigError);
}

TEST(Bsde, CsvHeader) {
    const auto setup = bs_setup(0.1, 0.2, 0.0, 0.1);
    const ConstantRhoSurface<1> surface(0.25, 1.0);
    const auto data = simulate_regression_data(setup, 1000, 3, Payoff::call(100.0), 2);
    const auto sol = solve_backward<1, 1>(data, *setup.model, surface, setup.specs);
    std::ostringstream os;
    sol.write_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,V,Vbar_1,R2");
    EXPECT_EQ(sol.dates.size(), 6u);
}

TEST(Bsde, BasisDropsRedundantColumns) {
    Eigen::MatrixXd d(50, 1), y = Eigen::MatrixXd::Constant(50, 1, 3.0);
    for (int p = 0; p < 50; ++p) d(p, 0) = 90.0 + p;
    const StateBasis standard(d, y, {});
    // 1, D, D², log D
    EXPECT_EQ(standard.size(), 4);
    const auto fit = least_squares(standard.design(d, y), d.col(0));
    EXPECT_FALSE(fit.rank_deficient);
}
