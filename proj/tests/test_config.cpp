#include <cstdio>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "ouhedge/config.hpp"
#include "ouhedge/errors.hpp"
#include "ouhedge/experiments.hpp"

using namespace ouhedge;

namespace {

std::string source_path(const std::string& rel) { return std::string(OUHEDGE_SOURCE_DIR) + "/" + rel; }

}  // namespace

TEST(Config, ShippedConfigsLoad) {
    for (const char* name : {"default", "fig1", "fig2", "fig3", "bs_call", "bns_constant_claim"}) {
        SCOPED_TRACE(name);
        const auto c = load_config(source_path(std::string("configs/") + name + ".json"));
        EXPECT_NO_THROW(make_setup(c));
    }
}

TEST(Config, PresetValues) {
    const auto f1 = preset("fig1");
    EXPECT_EQ(f1.model.kind, "constant_bs");
    EXPECT_DOUBLE_EQ(f1.horizon, 4e4);
    EXPECT_DOUBLE_EQ(f1.model.beta, 100.0);
    const auto f3 = preset("fig3");
    EXPECT_EQ(f3.model.kind, "bns");
    EXPECT_DOUBLE_EQ(f3.horizon, 200.0);
    EXPECT_THROW(preset("fig4"), ConfigError);
}

TEST(Config, UnknownFieldRejected) {
    EXPECT_THROW(config_from_json(json::parse(R"({"grid": {"horizon": 1, "stp": 0.1}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"colour": 1})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"grid": {"step": "x"}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"grid": {"step": -1}})")), ConfigError);
}

TEST(Config, RoundTrip) {
    auto c = preset("fig3");
    c.bsde.basis.kind = BasisKind::spline;
    c.subordinator = {"table", 0.0, 0.0, {{0.5, 2.0}, {1.0, 1.0}}, 7.0};
    const auto back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, MomentConditionFailureReported) {
    const auto c = config_from_json(json::parse(R"({"subordinator": {"kind": "compound_poisson_exp", "jump_rate": 5}})"));
    EXPECT_THROW(make_setup(c), MomentConditionError);
    const auto r = check_configuration(c);
    EXPECT_FALSE(r.passed);
    EXPECT_NE(r.detail.find("moment"), std::string::npos);
}

TEST(Config, SurfaceSelection) {
    auto c = preset("fig1");
    EXPECT_EQ(make_surface(c, make_setup(c), c.horizon)->mode(), SurfaceMode::closed_form);
    c.surface = "ipde";
    c.model.kind = "bns";
    c.subordinator.kind = "compound_poisson_exp";
    c.horizon = 1.0;
    c.step = 0.01;
    EXPECT_EQ(make_surface(c, make_setup(c), 1.0)->mode(), SurfaceMode::ipde);
    auto d = preset("fig1");
    d.surface = "ipde";
    EXPECT_EQ(make_surface(d, make_setup(d), 1.0)->mode(), SurfaceMode::ipde);
}

TEST(Figure, SweepHorizonsOnMesh) {
    const auto hs = sweep_horizons(4e4, 100.0, 20);
    ASSERT_EQ(hs.size(), 20u);
    EXPECT_DOUBLE_EQ(hs.front(), 2000.0);
    EXPECT_DOUBLE_EQ(hs.back(), 4e4);
}

TEST(Figure, EndpointAndIdentity) {
    auto c = preset("fig1");
    c.hedge_paths = 20;
    const auto rows = run_figure_experiment(c);
    ASSERT_FALSE(rows.empty());
    EXPECT_NEAR(rows.back().closed.error, 5.06566678970337e-6, 1e-15);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        EXPECT_NEAR(rows[j].closed.var - rows[j].closed.herr, rows[j].closed.error, 1e-9 * rows[j].closed.var);
        EXPECT_NEAR(rows[j].simulated.mean, rows[j].closed.herr, 1e-6 * rows[j].closed.herr);
        if (j > 0) {
            EXPECT_LT(rows[j].closed.error, rows[j - 1].closed.error);
        }
    }
    std::ostringstream os;
    write_figure_csv(os, rows);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "T,P0,Var,Herr,Error,simulated,SE");
}

TEST(Figure, EqualCapitalGivesZeroError) {
    auto c = preset("fig2");
    c.hedge_paths = 10;
    c.endowment = c.payoff.value;
    for (const auto& r : run_figure_experiment(c)) {
        EXPECT_EQ(r.closed.var, 0.0);
        EXPECT_EQ(r.closed.error, 0.0);
        EXPECT_EQ(r.simulated.mean, 0.0);
    }
}

TEST(Figure, ReproducibleAcrossRuns) {
    auto c = preset("fig1");
    c.hedge_paths = 10;
    c.tilt = 0.0;
    const auto a = run_figure_experiment(c);
    const auto b = run_figure_experiment(c);
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a[j].simulated.mean, b[j].simulated.mean);
}
