#pragma once

// Optimal mean-variance strategy φ = ξ − (v + Ψ₋ − V₋)a, its simulation on
// the path grid, and the closed-form comparators for a constant payoff.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouhedge/bsde.hpp"
#include "ouhedge/errors.hpp"
#include "ouhedge/market.hpp"
#include "ouhedge/opportunity.hpp"
#include "ouhedge/stats.hpp"

namespace ouhedge {

// ξ = (c̃^D)^{-1} c̃^{DV} with c̃^D = diag(D)σσ'diag(D), c̃^{DV} = diag(D)σV̄,
// i.e. diag(D)^{-1}(σσ')^{-1}σV̄.
template <int Dim, int Factors>
AssetVector<Dim> pure_hedge_xi(const CoefficientModel<Dim, Factors>& model, const AssetVector<Dim>& d,
                               const FactorVector<Factors>& y_left, const AssetVector<Dim>& v_bar) {
    const AssetMatrix<Dim> sigma = model.volatility(y_left);
    const AssetMatrix<Dim> cov = sigma * sigma.transpose();
    Eigen::LLT<AssetMatrix<Dim>> llt(cov);
    if (llt.info() != Eigen::Success || !cov.allFinite())
        throw LinearAlgebraError("sigma sigma' is not positive definite", condition_number<Dim>(cov));
    const AssetVector<Dim> rhs = sigma * v_bar;
    return llt.solve(rhs).cwiseQuotient(d);
}

inline double psi_step(double psi_left, double xi_dot_dD, double a_dot_dD, double v, double v_left) {
    return psi_left + xi_dot_dD - (v - v_left) * a_dot_dD - psi_left * a_dot_dD;
}

// ΔΨ = (ξ − (v − V₋)a)'ΔD − Ψ₋ a'ΔD.
template <int Dim>
double psi_step(double psi_left, const AssetVector<Dim>& xi, const AssetVector<Dim>& a, double v, double v_left,
                const AssetVector<Dim>& dD) {
    return psi_step(psi_left, xi.dot(dD), a.dot(dD), v, v_left);
}

template <int Dim>
AssetVector<Dim> strategy_phi(const AssetVector<Dim>& xi, const AssetVector<Dim>& a, double v, double psi_left,
                              double v_left) {
    return xi - (v + psi_left - v_left) * a;
}

struct ClosedForms {
    double var = 0.0;    // Var(X*(T)) = P₀/(1−P₀)(p−v)²
    double herr = 0.0;   // P₀(p−v)²
    double error = 0.0;  // P₀²/(1−P₀)(p−v)²
};

inline ClosedForms closed_forms(double p, double v, double P0) {
    if (!(P0 > 0.0 && P0 < 1.0)) throw DomainError("P0 must lie in (0,1)");
    const double gap2 = (p - v) * (p - v);
    return {P0 / (1.0 - P0) * gap2, P0 * gap2, P0 * P0 / (1.0 - P0) * gap2};
}

struct HedgeConfig {
    bool use_closed_form_v = false;  // constant payoff only: V ≡ p, V̄ ≡ 0
    BrownianTilt tilt{};
    std::size_t record_paths = 0;    // per-step detail kept for the first paths
};

struct HedgeStep {
    double t;
    double phi;   // first asset
    double psi;
    double wealth;
    double V;
};

struct HedgeReport {
    double v = 0.0;
    Payoff payoff;
    std::size_t paths = 0;
    double horizon = 0.0;
    double step = 0.0;
    Estimate mse;               // E[(v + (φ·D)(T) − H)²]
    Estimate mean_shortfall;    // E[v + (φ·D)(T) − H]
    double P0 = 1.0;
    std::optional<ClosedForms> closed;
    double max_bookkeeping_residual = 0.0;  // |wealth − v − Ψ|
    double xi0 = 0.0;
    bool tilted = false;
    std::size_t extrapolations = 0;
    std::vector<std::vector<HedgeStep>> recorded;

    // CSV columns: path,t,phi,psi,wealth,V
    void write_csv(std::ostream& os) const {
        os << "path,t,phi,psi,wealth,V\n";
        os.precision(12);
        for (std::size_t p = 0; p < recorded.size(); ++p)
            for (const auto& s : recorded[p])
                os << p << ',' << s.t << ',' << s.phi << ',' << s.psi << ',' << s.wealth << ',' << s.V << '\n';
    }

    void write_summary(std::ostream& os) const {
        os.precision(8);
        os << "hedge report\n"
           << "  payoff              " << payoff.describe() << '\n'
           << "  endowment v         " << v << '\n'
           << "  horizon T           " << horizon << '\n'
           << "  step                " << step << '\n'
           << "  paths               " << paths << (tilted ? " (importance sampled)" : "") << '\n'
           << "  P(0,y0)             " << P0 << '\n'
           << "  xi(0)               " << xi0 << '\n'
           << "  mean shortfall      " << mean_shortfall.mean << " +/- " << mean_shortfall.se << '\n'
           << "  mean squared error  " << mse.mean << " +/- " << mse.se << '\n'
           << "  bookkeeping residual " << max_bookkeeping_residual << '\n';
        if (closed) {
            const double band = std::max(4.0 * mse.se, 0.02 * closed->herr);
            os << "  closed forms        Var " << closed->var << "  Herr " << closed->herr << "  Error " << closed->error
               << '\n'
               << "  Herr band           " << band << "  " << (std::abs(mse.mean - closed->herr) <= band ? "PASS" : "FAIL")
               << '\n';
        }
        if (extrapolations > 0) os << "  surface extrapolations " << extrapolations << '\n';
    }
};

// Forward sweep: at every grid point t_k the strategy is evaluated from the
// state just after t_k (the left limit for the step that follows), and the
// positions are held over [t_k, t_{k+1}].
template <int Dim, int Factors>
HedgeReport run_hedge(const MarketSetup<Dim, Factors>& setup, std::size_t n_paths, std::uint64_t seed,
                      const OpportunitySurface<Factors>& surface, const BsdeSolution* solution, const Payoff& payoff,
                      double v, const HedgeConfig& cfg = {}) {
    setup.validate();
    const bool closed_v = cfg.use_closed_form_v;
    if (closed_v && payoff.kind != PayoffKind::constant)
        throw ConfigError("use_closed_form_v requires a constant payoff");
    if (!closed_v && solution == nullptr) throw ConfigError("run_hedge needs a BSDE solution");
    const auto& model = *setup.model;
    const auto extrapolations_before = surface.extrapolations();

    HedgeReport rep;
    rep.v = v;
    rep.payoff = payoff;
    rep.paths = n_paths;
    rep.horizon = setup.horizon;
    rep.step = setup.step;
    rep.tilted = cfg.tilt.active();
    rep.P0 = surface.value(0.0, setup.ou.y0);
    if (payoff.kind == PayoffKind::constant && rep.P0 < 1.0) rep.closed = closed_forms(payoff.level, v, rep.P0);

    RunningStats sq, shortfall;
    for (std::size_t p = 0; p < n_paths; ++p) {
        const auto b = simulate_path(setup, seed, p, cfg.tilt);
        const auto& times = b.grid().times;
        const bool record = p < cfg.record_paths;
        std::vector<HedgeStep> steps;
        double psi = 0.0, gains = 0.0;
        for (std::size_t k = 0; k + 1 < b.size(); ++k) {
            const auto& y = b.factor.y[k];
            const auto& dk = b.D[k];
            const auto lc = local_coefficients(model, y);
            const AssetVector<Dim> a = lc.premium.cwiseQuotient(dk);
            double V;
            AssetVector<Dim> xi;
            if (closed_v) {
                V = payoff.level;
                xi = AssetVector<Dim>::Zero(dk.size());
            } else {
                const std::size_t j = solution->date_index(times[k]);
                V = k == 0 ? solution->V0.mean : solution->value(j, dk, y);
                const AssetVector<Dim> vb = solution->template gradient<Dim>(j, dk, y);
                xi = pure_hedge_xi(model, dk, y, vb);
            }
            if (p == 0 && k == 0) rep.xi0 = xi(0);
            const AssetVector<Dim> phi = strategy_phi<Dim>(xi, a, v, psi, V);
            const AssetVector<Dim> dD = b.D[k + 1] - dk;
            if (record) steps.push_back({times[k], phi(0), psi, v + gains, V});
            psi = psi_step<Dim>(psi, xi, a, v, V, dD);
            gains += phi.dot(dD);
            rep.max_bookkeeping_residual = std::max(rep.max_bookkeeping_residual, std::abs(gains - psi));
        }
        const double H = evaluate_payoff(payoff, b, model.rate());
        const double e = v + gains - H;
        if (record) {
            steps.push_back({times.back(), 0.0, psi, v + gains, H});
            rep.recorded.push_back(std::move(steps));
        }
        const double w = b.weight();
        sq.add(w * e * e);
        shortfall.add(w * e);
    }
    rep.mse = sq.estimate();
    rep.mean_shortfall = shortfall.estimate();
    rep.extrapolations = surface.extrapolations() - extrapolations_before;
    return rep;
}

// Constant payoff p, rebalanced continuously: with coefficients frozen on
// each step the optimal wealth satisfies X − p = (v − p)ℰ(−∫a dD) exactly,
// where ∫a dD has increments ρΔt + B̄·ΔW. The feedback rule does not depend
// on the horizon, so one sweep gives the squared error at every horizon.
template <int Dim, int Factors>
std::vector<Estimate> continuous_hedge_errors(const MarketSetup<Dim, Factors>& setup, std::size_t n_paths,
                                              std::uint64_t seed, double p, double v, std::span<const double> horizons,
                                              BrownianTilt tilt = {}) {
    setup.validate();
    for (double h : horizons)
        if (h > setup.horizon + 1e-9) throw ConfigError("sweep horizon beyond the simulated horizon");
    std::vector<RunningStats> stats(horizons.size());
    const auto& model = *setup.model;
    const double gap = v - p;
    for (std::size_t q = 0; q < n_paths; ++q) {
        const auto b = simulate_path(setup, seed, q, tilt);
        const auto& times = b.grid().times;
        // Reconstruct the running likelihood ratio from the stored increments.
        double log_e = 0.0, log_w = 0.0;
        std::size_t next = 0;
        for (std::size_t k = 0; k < b.size() && next < horizons.size(); ++k) {
            while (next < horizons.size() && std::abs(times[k] - horizons[next]) <= 1e-9 * std::max(1.0, times[k])) {
                const double e = gap * std::exp(log_e);
                stats[next].add(std::exp(log_w) * e * e);
                ++next;
            }
            if (k + 1 == b.size()) break;
            const auto lc = local_coefficients(model, b.factor.y[k]);
            const double dt = times[k + 1] - times[k];
            log_e += -lc.rho * dt - lc.market_price.dot(b.dW[k]) - 0.5 * lc.rho * dt;
            if (tilt.active()) {
                const AssetVector<Dim> m = -tilt.kappa * lc.market_price;
                log_w += -m.dot(b.dW[k]) + 0.5 * m.squaredNorm() * dt;
            }
        }
        if (next != horizons.size()) throw ConfigError("sweep horizons must lie on the time mesh");
    }
    std::vector<Estimate> out;
    for (const auto& s : stats) out.push_back(s.estimate());
    return out;
}

}  // namespace ouhedge
