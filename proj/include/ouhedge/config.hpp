#pragma once

// Experiment configuration: JSON ingestion with schema-style checks, figure
// presets, and construction of the model objects for one-asset, one-factor
// experiments.

#include <cstdint>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ouhedge/bsde.hpp"
#include "ouhedge/errors.hpp"
#include "ouhedge/levy.hpp"
#include "ouhedge/market.hpp"
#include "ouhedge/opportunity.hpp"

namespace ouhedge {

using json = nlohmann::json;

struct ModelConfig {
    std::string kind = "bns";  // bns | constant_bs | tabulated
    double alpha = 0.5;
    double beta = 0.02;
    double rate = 0.0;
    std::vector<double> knots, drift, vol;
};

struct SubordinatorConfig {
    std::string kind = "compound_poisson_exp";  // compound_poisson_exp | table | none
    double event_rate = 10.0;
    double jump_rate = 8.0;
    std::vector<Atom> atoms;
    double moment_constant = kDefaultMomentConstant;
};

struct PayoffConfig {
    std::string kind = "constant";  // constant | call | put
    double value = 3e4;             // p for constant, strike otherwise
};

struct FigureConfig {
    int sweep_points = 20;
    double t_max = 0.0;  // 0: horizon
};

struct ExperimentConfig {
    std::string name = "default";
    std::string experiment = "validate";  // figure1 | figure2 | figure3 | price | hedge | validate | simulate | solve-bsde
    ModelConfig model;
    double lambda = 1.0;
    double y0 = 10.0;
    SubordinatorConfig subordinator;
    double s0 = 100.0;
    double horizon = 1.0;
    double step = 0.01;
    std::size_t n_paths = 10000;
    std::size_t hedge_paths = 10000;
    std::size_t n_inner = 2000;
    std::uint64_t seed = 20240601;
    PayoffConfig payoff;
    double endowment = 1e4;
    std::string surface = "auto";  // auto | closed_form | ipde | mc
    IpdeConfig ipde;
    BsdeConfig bsde;
    bool use_closed_form_v = false;
    double tilt = 0.0;
    std::size_t record_paths = 5;
    FigureConfig figure;
    std::string output_dir = "out";
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown field '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("field '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

inline void require_positive(double x, const std::string& what) {
    if (!(x > 0.0)) throw ConfigError(what + " must be positive");
}

}  // namespace detail

// Field-level validation matching schema/experiment.schema.json.
inline void validate_config(const ExperimentConfig& c) {
    static const std::set<std::string> experiments{"figure1", "figure2", "figure3", "price", "hedge",
                                                   "validate", "simulate", "solve-bsde"};
    if (!experiments.count(c.experiment)) throw ConfigError("unknown experiment kind: " + c.experiment);
    if (c.model.kind != "bns" && c.model.kind != "constant_bs" && c.model.kind != "tabulated")
        throw ConfigError("unknown model kind: " + c.model.kind);
    if (c.model.kind == "constant_bs") detail::require_positive(c.model.beta, "model.beta");
    if (!(c.model.rate >= 0.0)) throw ConfigError("model.rate must be nonnegative");
    detail::require_positive(c.lambda, "factor.lambda");
    detail::require_positive(c.y0, "factor.y0");
    detail::require_positive(c.s0, "s0");
    detail::require_positive(c.horizon, "grid.horizon");
    detail::require_positive(c.step, "grid.step");
    if (c.n_paths == 0 || c.hedge_paths == 0) throw ConfigError("path counts must be positive");
    if (c.n_inner < 100) throw ConfigError("paths.n_inner must be at least 100");
    if (c.payoff.kind != "constant" && c.payoff.kind != "call" && c.payoff.kind != "put")
        throw ConfigError("unknown payoff kind: " + c.payoff.kind);
    if (c.payoff.kind != "constant") detail::require_positive(c.payoff.value, "payoff.value");
    if (c.surface != "auto" && c.surface != "closed_form" && c.surface != "ipde" && c.surface != "mc")
        throw ConfigError("unknown surface mode: " + c.surface);
    if (c.bsde.stride == 0) throw ConfigError("bsde.stride must be positive");
    if (c.figure.sweep_points < 1) throw ConfigError("figure.sweep_points must be positive");
    if (c.subordinator.kind != "compound_poisson_exp" && c.subordinator.kind != "table" &&
        c.subordinator.kind != "none")
        throw ConfigError("unknown subordinator kind: " + c.subordinator.kind);
}

inline ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    if (name == "default") return c;
    c.payoff = {"constant", 3e4};
    c.endowment = 1e4;
    c.model.rate = 0.0;
    c.use_closed_form_v = true;
    c.tilt = 2.0;
    if (name == "fig1" || name == "fig2") {
        c.experiment = name == "fig1" ? "figure1" : "figure2";
        c.model.kind = "constant_bs";
        c.model.alpha = 2.0;
        c.model.beta = name == "fig1" ? 100.0 : 10.0;
        c.horizon = name == "fig1" ? 4e4 : 400.0;
        c.step = c.horizon / 400.0;
        c.subordinator.kind = "none";
        c.hedge_paths = 10000;
        return c;
    }
    if (name == "fig3") {
        c.experiment = "figure3";
        c.model = {"bns", 0.5, 0.02, 0.0, {}, {}, {}};
        c.horizon = 200.0;
        c.step = 0.01;
        c.hedge_paths = 10000;
        return c;
    }
    throw ConfigError("unknown preset: " + name);
}

inline ExperimentConfig config_from_json(const json& j, ExperimentConfig c = {}) {
    using detail::read;
    using detail::reject_unknown;
    reject_unknown(j, {"$schema", "name", "preset", "experiment", "model", "factor", "subordinator", "s0", "grid",
                       "paths", "payoff", "endowment", "surface", "ipde", "bsde", "hedge", "figure", "output_dir"},
                   "config");
    if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
    read(j, "name", c.name, "config");
    read(j, "experiment", c.experiment, "config");
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"kind", "alpha", "beta", "rate", "knots", "drift", "vol"}, "model");
        read(m, "kind", c.model.kind, "model");
        read(m, "alpha", c.model.alpha, "model");
        read(m, "beta", c.model.beta, "model");
        read(m, "rate", c.model.rate, "model");
        read(m, "knots", c.model.knots, "model");
        read(m, "drift", c.model.drift, "model");
        read(m, "vol", c.model.vol, "model");
    }
    if (j.contains("factor")) {
        const auto& f = j.at("factor");
        reject_unknown(f, {"lambda", "y0"}, "factor");
        read(f, "lambda", c.lambda, "factor");
        read(f, "y0", c.y0, "factor");
    }
    if (j.contains("subordinator")) {
        const auto& s = j.at("subordinator");
        reject_unknown(s, {"kind", "event_rate", "jump_rate", "atoms", "moment_constant"}, "subordinator");
        read(s, "kind", c.subordinator.kind, "subordinator");
        read(s, "event_rate", c.subordinator.event_rate, "subordinator");
        read(s, "jump_rate", c.subordinator.jump_rate, "subordinator");
        read(s, "moment_constant", c.subordinator.moment_constant, "subordinator");
        if (s.contains("atoms")) {
            c.subordinator.atoms.clear();
            for (const auto& a : s.at("atoms")) {
                if (!a.is_array() || a.size() != 2) throw ConfigError("subordinator.atoms entries are [size, intensity]");
                c.subordinator.atoms.push_back({a[0].get<double>(), a[1].get<double>()});
            }
        }
    }
    read(j, "s0", c.s0, "config");
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        reject_unknown(g, {"horizon", "step"}, "grid");
        read(g, "horizon", c.horizon, "grid");
        read(g, "step", c.step, "grid");
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        reject_unknown(p, {"n_paths", "hedge_paths", "n_inner", "seed"}, "paths");
        read(p, "n_paths", c.n_paths, "paths");
        read(p, "hedge_paths", c.hedge_paths, "paths");
        read(p, "n_inner", c.n_inner, "paths");
        read(p, "seed", c.seed, "paths");
    }
    if (j.contains("payoff")) {
        const auto& p = j.at("payoff");
        reject_unknown(p, {"kind", "value"}, "payoff");
        read(p, "kind", c.payoff.kind, "payoff");
        read(p, "value", c.payoff.value, "payoff");
    }
    read(j, "endowment", c.endowment, "config");
    read(j, "surface", c.surface, "config");
    if (j.contains("ipde")) {
        const auto& p = j.at("ipde");
        reject_unknown(p, {"nodes", "max_dx", "courant", "time_step", "theta", "y_floor", "y_max", "quantile",
                           "quad_panels", "max_stored_levels"},
                       "ipde");
        read(p, "nodes", c.ipde.nodes, "ipde");
        read(p, "max_dx", c.ipde.max_dx, "ipde");
        read(p, "courant", c.ipde.courant, "ipde");
        read(p, "time_step", c.ipde.time_step, "ipde");
        read(p, "theta", c.ipde.theta, "ipde");
        read(p, "y_floor", c.ipde.y_floor, "ipde");
        read(p, "y_max", c.ipde.y_max, "ipde");
        read(p, "quantile", c.ipde.quantile, "ipde");
        read(p, "quad_panels", c.ipde.quad_panels, "ipde");
        read(p, "max_stored_levels", c.ipde.max_stored_levels, "ipde");
    }
    if (j.contains("bsde")) {
        const auto& b = j.at("bsde");
        reject_unknown(b, {"stride", "basis", "knots", "driver", "jump_estimator", "inner_sweeps", "quad_panels"},
                       "bsde");
        read(b, "stride", c.bsde.stride, "bsde");
        if (b.contains("basis")) c.bsde.basis.kind = parse_basis_kind(b.at("basis").get<std::string>());
        read(b, "knots", c.bsde.basis.knots, "bsde");
        if (b.contains("driver")) c.bsde.driver = parse_driver_form(b.at("driver").get<std::string>());
        if (b.contains("jump_estimator"))
            c.bsde.jump_estimator = parse_jump_estimator(b.at("jump_estimator").get<std::string>());
        read(b, "inner_sweeps", c.bsde.inner_sweeps, "bsde");
        read(b, "quad_panels", c.bsde.quad_panels, "bsde");
    }
    if (j.contains("hedge")) {
        const auto& h = j.at("hedge");
        reject_unknown(h, {"use_closed_form_v", "tilt", "record_paths"}, "hedge");
        read(h, "use_closed_form_v", c.use_closed_form_v, "hedge");
        read(h, "tilt", c.tilt, "hedge");
        read(h, "record_paths", c.record_paths, "hedge");
    }
    if (j.contains("figure")) {
        const auto& f = j.at("figure");
        reject_unknown(f, {"sweep_points", "t_max"}, "figure");
        read(f, "sweep_points", c.figure.sweep_points, "figure");
        read(f, "t_max", c.figure.t_max, "figure");
    }
    read(j, "output_dir", c.output_dir, "config");
    validate_config(c);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

inline std::string basis_name(BasisKind k) { return k == BasisKind::spline ? "spline" : "standard"; }
inline std::string driver_name(DriverForm f) { return f == DriverForm::structural ? "structural" : "mean_value"; }
inline std::string jump_estimator_name(JumpEstimator e) {
    return e == JumpEstimator::structural ? "structural" : "state_shift";
}

inline json config_to_json(const ExperimentConfig& c) {
    json atoms = json::array();
    for (const auto& a : c.subordinator.atoms) atoms.push_back({a.size, a.intensity});
    return {
        {"name", c.name},
        {"experiment", c.experiment},
        {"model",
         {{"kind", c.model.kind},
          {"alpha", c.model.alpha},
          {"beta", c.model.beta},
          {"rate", c.model.rate},
          {"knots", c.model.knots},
          {"drift", c.model.drift},
          {"vol", c.model.vol}}},
        {"factor", {{"lambda", c.lambda}, {"y0", c.y0}}},
        {"subordinator",
         {{"kind", c.subordinator.kind},
          {"event_rate", c.subordinator.event_rate},
          {"jump_rate", c.subordinator.jump_rate},
          {"atoms", atoms},
          {"moment_constant", c.subordinator.moment_constant}}},
        {"s0", c.s0},
        {"grid", {{"horizon", c.horizon}, {"step", c.step}}},
        {"paths", {{"n_paths", c.n_paths}, {"hedge_paths", c.hedge_paths}, {"n_inner", c.n_inner}, {"seed", c.seed}}},
        {"payoff", {{"kind", c.payoff.kind}, {"value", c.payoff.value}}},
        {"endowment", c.endowment},
        {"surface", c.surface},
        {"ipde",
         {{"nodes", c.ipde.nodes},
          {"max_dx", c.ipde.max_dx},
          {"courant", c.ipde.courant},
          {"time_step", c.ipde.time_step},
          {"theta", c.ipde.theta},
          {"y_floor", c.ipde.y_floor},
          {"y_max", c.ipde.y_max},
          {"quantile", c.ipde.quantile},
          {"quad_panels", c.ipde.quad_panels},
          {"max_stored_levels", c.ipde.max_stored_levels}}},
        {"bsde",
         {{"stride", c.bsde.stride},
          {"basis", basis_name(c.bsde.basis.kind)},
          {"knots", c.bsde.basis.knots},
          {"driver", driver_name(c.bsde.driver)},
          {"jump_estimator", jump_estimator_name(c.bsde.jump_estimator)},
          {"inner_sweeps", c.bsde.inner_sweeps},
          {"quad_panels", c.bsde.quad_panels}}},
        {"hedge", {{"use_closed_form_v", c.use_closed_form_v}, {"tilt", c.tilt}, {"record_paths", c.record_paths}}},
        {"figure", {{"sweep_points", c.figure.sweep_points}, {"t_max", c.figure.t_max}}},
        {"output_dir", c.output_dir},
    };
}

inline std::shared_ptr<const Model1> make_model(const ModelConfig& m) {
    if (m.kind == "bns") return std::make_shared<BNS>(m.alpha, m.beta, m.rate);
    if (m.kind == "constant_bs") return std::make_shared<ConstantBS>(m.alpha, m.beta, m.rate);
    if (m.kind == "tabulated") return std::make_shared<TabulatedModel>(m.knots, m.drift, m.vol, m.rate);
    throw ConfigError("unknown model kind: " + m.kind);
}

inline SubordinatorSpec make_subordinator(const SubordinatorConfig& s, double lambda) {
    if (s.kind == "compound_poisson_exp")
        return SubordinatorSpec::compound_poisson_exp(s.event_rate, s.jump_rate, lambda, s.moment_constant);
    if (s.kind == "table") return SubordinatorSpec::table(s.atoms, lambda, s.moment_constant);
    if (s.kind == "none") return SubordinatorSpec::none(lambda);
    throw ConfigError("unknown subordinator kind: " + s.kind);
}

inline MarketSetup<1, 1> make_setup(const ExperimentConfig& c) {
    MarketSetup<1, 1> setup{make_model(c.model),
                            OUParams<1>(FactorVector<1>::Constant(c.lambda), FactorVector<1>::Constant(c.y0)),
                            {make_subordinator(c.subordinator, c.lambda)},
                            AssetVector<1>::Constant(c.s0),
                            c.horizon,
                            c.step};
    setup.validate();
    return setup;
}

inline Payoff make_payoff(const PayoffConfig& p) {
    if (p.kind == "constant") return Payoff::constant(p.value);
    if (p.kind == "call") return Payoff::call(p.value);
    if (p.kind == "put") return Payoff::put(p.value);
    throw ConfigError("unknown payoff kind: " + p.kind);
}

// auto: closed form when ρ is constant, otherwise the IPDE grid.
inline std::shared_ptr<const OpportunitySurface<1>> make_surface(const ExperimentConfig& c,
                                                                 const MarketSetup<1, 1>& setup, double horizon) {
    const auto& model = *setup.model;
    std::string mode = c.surface;
    if (mode == "auto") mode = model.constant_coefficients() ? "closed_form" : "ipde";
    if (mode == "closed_form") {
        if (!model.constant_coefficients()) throw ConfigError("closed_form surface requires constant coefficients");
        return std::make_shared<ConstantRhoSurface<1>>(rho(model, setup.ou.y0), horizon);
    }
    if (mode == "ipde") return std::make_shared<IpdeSurface>(solve_P_ipde(model, setup.ou, setup.specs[0], horizon, c.ipde));
    return std::make_shared<McSurface<1, 1>>(setup.model, setup.ou.lambda, setup.specs, horizon, c.n_inner,
                                             derive_seed(c.seed, 0xC0FFEE));
}

}  // namespace ouhedge
