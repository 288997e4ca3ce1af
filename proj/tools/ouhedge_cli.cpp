#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ouhedge/config.hpp"
#include "ouhedge/errors.hpp"
#include "ouhedge/experiments.hpp"
#include "ouhedge/market.hpp"

using namespace ouhedge;

struct Overrides {
    std::string config;
    std::string output_dir;
    std::optional<std::size_t> paths, hedge_paths, n_inner;
    std::optional<std::uint64_t> seed;
    std::optional<double> horizon, step, endowment, payoff_value, tilt;
    std::optional<std::string> payoff_kind, surface, basis, driver;
    std::optional<std::size_t> stride;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "JSON experiment config");
        app->add_option("--output-dir", output_dir, "output directory (overrides OUHEDGE_OUTPUT_DIR and config)");
        app->add_option("--paths", paths, "number of outer paths");
        app->add_option("--hedge-paths", hedge_paths, "number of hedging paths");
        app->add_option("--inner", n_inner, "inner samples for Monte-Carlo P");
        app->add_option("--seed", seed, "master seed");
        app->add_option("--horizon", horizon, "terminal time T");
        app->add_option("--step", step, "time step");
        app->add_option("--endowment", endowment, "initial capital v");
        app->add_option("--payoff", payoff_kind, "constant | call | put");
        app->add_option("--payoff-value", payoff_value, "constant payoff or strike");
        app->add_option("--tilt", tilt, "importance-sampling tilt kappa");
        app->add_option("--surface", surface, "auto | closed_form | ipde | mc");
        app->add_option("--basis", basis, "standard | spline");
        app->add_option("--driver", driver, "mean_value | structural");
        app->add_option("--stride", stride, "regression date stride");
    }

    ExperimentConfig resolve(ExperimentConfig c) const {
        if (!config.empty()) c = load_config(config);
        if (paths) c.n_paths = *paths;
        if (hedge_paths) c.hedge_paths = *hedge_paths;
        if (n_inner) c.n_inner = *n_inner;
        if (seed) c.seed = *seed;
        if (horizon) c.horizon = *horizon;
        if (step) c.step = *step;
        if (endowment) c.endowment = *endowment;
        if (payoff_kind) c.payoff.kind = *payoff_kind;
        if (payoff_value) c.payoff.value = *payoff_value;
        if (tilt) c.tilt = *tilt;
        if (surface) c.surface = *surface;
        if (basis) c.bsde.basis.kind = parse_basis_kind(*basis);
        if (driver) c.bsde.driver = parse_driver_form(*driver);
        if (stride) c.bsde.stride = *stride;
        if (const char* env = std::getenv("OUHEDGE_OUTPUT_DIR"); env && *env) c.output_dir = env;
        if (!output_dir.empty()) c.output_dir = output_dir;
        validate_config(c);
        return c;
    }
};

static void save_config(const ExperimentConfig& c) {
    auto out = open_output(c.output_dir, "config.json");
    out << config_to_json(c).dump(2) << '\n';
}

int main(int argc, char** argv) {
    CLI::App app{"Mean-variance hedging under non-Gaussian OU stochastic volatility"};
    app.require_subcommand(1);

    Overrides o_sim, o_price, o_bsde, o_hedge, o_fig, o_val;
    auto* sim = app.add_subcommand("simulate", "simulate market paths and write paths.csv");
    o_sim.attach(sim);
    auto* price = app.add_subcommand("price", "opportunity process and V(0) by BSDE and Monte Carlo");
    o_price.attach(price);
    auto* bsde = app.add_subcommand("solve-bsde", "solve the mean-value BSDE and write bsde.csv");
    o_bsde.attach(bsde);
    auto* hedge = app.add_subcommand("hedge", "simulate the optimal strategy and write hedge.csv");
    o_hedge.attach(hedge);
    auto* fig = app.add_subcommand("figure", "terminal-time sweep of the hedging error");
    int figure_number = 1;
    fig->add_option("number", figure_number, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
    o_fig.attach(fig);
    auto* val = app.add_subcommand("validate", "run the validation suite");
    o_val.attach(val);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const auto c = o_sim.resolve(preset("default"));
            save_config(c);
            const auto setup = make_setup(c);
            const auto paths = simulate_paths(setup, c.n_paths, c.seed);
            auto out = open_output(c.output_dir, "paths.csv");
            write_paths_csv(out, std::span<const PathBundle<1, 1>>(paths));
            std::cout << "wrote " << paths.size() << " paths to " << (fs::path(c.output_dir) / "paths.csv") << '\n';
        } else if (price->parsed()) {
            const auto c = o_price.resolve(preset("default"));
            save_config(c);
            run_price(c, c.output_dir);
            std::ifstream in(fs::path(c.output_dir) / "price.txt");
            std::cout << in.rdbuf();
        } else if (bsde->parsed()) {
            const auto c = o_bsde.resolve(preset("default"));
            save_config(c);
            run_solve_bsde(c, c.output_dir);
            std::ifstream in(fs::path(c.output_dir) / "bsde_summary.txt");
            std::cout << in.rdbuf();
        } else if (hedge->parsed()) {
            const auto c = o_hedge.resolve(preset("default"));
            save_config(c);
            const auto rep = run_hedge_experiment(c, c.output_dir);
            rep.write_summary(std::cout);
        } else if (fig->parsed()) {
            const auto c = o_fig.resolve(preset("fig" + std::to_string(figure_number)));
            save_config(c);
            const auto rows = run_figure_experiment(c);
            auto csv = open_output(c.output_dir, "figure" + std::to_string(figure_number) + ".csv");
            write_figure_csv(csv, rows);
            auto gp = open_output(c.output_dir, "figure" + std::to_string(figure_number) + ".gp");
            write_figure_gnuplot(gp, "figure" + std::to_string(figure_number) + ".csv",
                                 "figure " + std::to_string(figure_number));
            write_figure_csv(std::cout, rows);
        } else if (val->parsed()) {
            const auto c = o_val.resolve(preset("default"));
            save_config(c);
            const auto results = run_validate(c);
            auto out = open_output(c.output_dir, "validate.txt");
            print_checks(out, results);
            print_checks(std::cout, results);
            for (const auto& r : results)
                if (!r.passed) return 1;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
