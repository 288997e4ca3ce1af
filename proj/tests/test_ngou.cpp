#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ouhedge/errors.hpp"
#include "ouhedge/levy.hpp"
#include "ouhedge/ngou.hpp"

using namespace ouhedge;

namespace {

JumpPath two_jumps() {
    JumpPath j;
    j.horizon = 1.0;
    j.events = {{0.3, 0, 2.0}, {0.7, 0, 1.5}};
    return j;
}

}  // namespace

TEST(Ngou, MeshShortensLastStep) {
    const auto g = make_mesh(1.05, 0.1);
    ASSERT_EQ(g.size(), 12u);
    EXPECT_DOUBLE_EQ(g.times.back(), 1.05);
    EXPECT_NEAR(g.times[10], 1.0, 1e-15);
    EXPECT_THROW(make_mesh(1.0, 0.0), ConfigError);
}

TEST(Ngou, MergeInsertsJumpTimes) {
    const auto g = merge_jumps(make_mesh(1.0, 0.25), two_jumps());
    ASSERT_EQ(g.size(), 7u);
    EXPECT_DOUBLE_EQ(g.times[2], 0.3);
    EXPECT_EQ(g.on_mesh[2], 0);
    EXPECT_EQ(g.mesh_positions.size(), 5u);
}

TEST(Ngou, ExactPathWithKnownJumps) {
    const OUParams<1> ou(FactorVector<1>::Constant(1.0), FactorVector<1>::Constant(10.0));
    const auto jumps = two_jumps();
    const auto path = evolve(ou, jumps, merge_jumps(make_mesh(1.0, 0.1), jumps));
    EXPECT_NEAR(path.y.back()(0), 5.78319235031982, 1e-12);
    EXPECT_NEAR(integrated_factor(path, 0.0, 1.0)(0), 7.71680764968018, 1e-12);
    EXPECT_NEAR(path.driver.back()(0), 3.5, 1e-15);
    const std::size_t k = path.grid.locate(0.3);
    EXPECT_EQ(path.jumped[k], 1);
    EXPECT_NEAR(path.y[k](0) - path.y_left[k](0), 2.0, 1e-12);
}

TEST(Ngou, IntegratedFactorIdentityOnRandomPaths) {
    const OUParams<1> ou(FactorVector<1>::Constant(0.7), FactorVector<1>::Constant(3.0));
    const std::vector<SubordinatorSpec> specs{SubordinatorSpec::compound_poisson_exp(10.0, 8.0, 0.7)};
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto jumps = sample_jump_path(specs, 5.0, s);
        const auto path = evolve(ou, jumps, merge_jumps(make_mesh(5.0, 0.05), jumps));
        const double lhs = 0.7 * integrated_factor(path, 0.0, 5.0)(0);
        const double rhs = 3.0 + path.driver.back()(0) - path.y.back()(0);
        EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST(Ngou, PartialIntegralsAdd) {
    const OUParams<1> ou(FactorVector<1>::Constant(1.0), FactorVector<1>::Constant(10.0));
    const auto jumps = two_jumps();
    const auto path = evolve(ou, jumps, merge_jumps(make_mesh(1.0, 0.1), jumps));
    const double whole = integrated_factor(path, 0.0, 1.0)(0);
    const double parts = integrated_factor(path, 0.0, 0.45)(0) + integrated_factor(path, 0.45, 1.0)(0);
    EXPECT_NEAR(whole, parts, 1e-13);
    EXPECT_THROW(integrated_factor(path, 0.5, 0.4), DomainError);
}

TEST(Ngou, FloorBoundsThePath) {
    const OUParams<1> ou(FactorVector<1>::Constant(1.0), FactorVector<1>::Constant(10.0));
    EXPECT_NEAR(ou.floor(2.0)(0), 10.0 * std::exp(-2.0), 1e-14);
    EXPECT_THROW(OUParams<1>(FactorVector<1>::Constant(-1.0), FactorVector<1>::Constant(1.0)), ConfigError);
}
