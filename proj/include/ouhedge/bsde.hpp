#pragma once

// Backward scheme for the mean-value process V(t) = E_{Q*}[H | F_t] as the
// solution of a BSDE with jumps, and the density-weighted Monte-Carlo oracle
// V(0) = E[Ẑ(T)H].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouhedge/errors.hpp"
#include "ouhedge/levy.hpp"
#include "ouhedge/market.hpp"
#include "ouhedge/opportunity.hpp"
#include "ouhedge/regression.hpp"
#include "ouhedge/stats.hpp"

namespace ouhedge {

enum class PayoffKind { constant, call, put };

struct Payoff {
    PayoffKind kind = PayoffKind::constant;
    double level = 0.0;  // p for constant, strike otherwise
    int asset = 0;

    static Payoff constant(double p) { return {PayoffKind::constant, p, 0}; }
    static Payoff call(double strike, int asset = 0) { return checked({PayoffKind::call, strike, asset}); }
    static Payoff put(double strike, int asset = 0) { return checked({PayoffKind::put, strike, asset}); }

    // Discounted payoff from the terminal stock price.
    template <int Dim>
    double operator()(const AssetVector<Dim>& s_terminal, double rate, double horizon) const {
        if (kind == PayoffKind::constant) return level;
        if (asset >= s_terminal.size()) throw ConfigError("payoff asset index out of range");
        const double s = s_terminal(asset);
        const double intrinsic = kind == PayoffKind::call ? std::max(s - level, 0.0) : std::max(level - s, 0.0);
        return std::exp(-rate * horizon) * intrinsic;
    }

    std::string describe() const {
        switch (kind) {
            case PayoffKind::constant: return "constant(" + std::to_string(level) + ")";
            case PayoffKind::call: return "call(K=" + std::to_string(level) + ")";
            case PayoffKind::put: return "put(K=" + std::to_string(level) + ")";
        }
        return "?";
    }

private:
    static Payoff checked(Payoff p) {
        if (!(p.level > 0.0)) throw ConfigError("strike must be positive");
        if (p.asset < 0) throw ConfigError("payoff asset index must be nonnegative");
        return p;
    }
};

template <int Dim, int Factors>
double evaluate_payoff(const Payoff& payoff, const PathBundle<Dim, Factors>& b, double rate) {
    return payoff(b.S.back(), rate, b.grid().times.back());
}

// mean_value:  g = V̄·B̄ − Σ_i ∫ Ṽ_i F λ_i ν_i(dz), the drift of V that makes
//              ẐV a martingale (so V is the Q*-conditional mean of H);
// structural:  g = −V̄·B̄ + Σ_i ∫ (Ṽ_i F Z̄ + V_-(F Z̄)²) λ_i ν_i(dz).
// In both cases V(t) = V(T) − ∫_t^T g ds − (martingale terms).
enum class DriverForm { mean_value, structural };
enum class JumpEstimator { state_shift, structural };

inline DriverForm parse_driver_form(const std::string& s) {
    if (s == "mean_value") return DriverForm::mean_value;
    if (s == "structural") return DriverForm::structural;
    throw ConfigError("unknown driver form: " + s);
}

inline JumpEstimator parse_jump_estimator(const std::string& s) {
    if (s == "state_shift") return JumpEstimator::state_shift;
    if (s == "structural") return JumpEstimator::structural;
    throw ConfigError("unknown jump estimator: " + s);
}

// Ṽ is given on the quadrature nodes: v_tilde[i][q] = Ṽ_i(z_q).
template <int Dim>
double driver_g(DriverForm form, double v_left, const AssetVector<Dim>& v_bar,
                const std::vector<std::vector<double>>& v_tilde, const DriverIngredients<Dim>& ing,
                std::span<const JumpQuadrature> quadratures, std::span<const SubordinatorSpec> specs) {
    const double diffusive = v_bar.dot(ing.bar_B);
    double jump = 0.0;
    for (std::size_t i = 0; i < quadratures.size(); ++i) {
        const double lam = specs[i].time_scale();
        for (std::size_t q = 0; q < quadratures[i].size(); ++q) {
            const double f = ing.F[i][q];
            const double vt = v_tilde.empty() ? 0.0 : v_tilde[i][q];
            const double w = lam * quadratures[i].weights[q];
            if (form == DriverForm::mean_value) {
                jump += w * vt * f;
            } else {
                const double fz = f * ing.z_bar;
                jump += w * (vt * fz + v_left * fz * fz);
            }
        }
    }
    return form == DriverForm::mean_value ? diffusive - jump : -diffusive + jump;
}

struct BsdeConfig {
    std::size_t stride = 1;  // regression dates every `stride` mesh steps
    BasisSpec basis{};
    DriverForm driver = DriverForm::mean_value;
    JumpEstimator jump_estimator = JumpEstimator::state_shift;
    int inner_sweeps = 2;
    int quad_panels = 16;
};

// Cross-sections of the training paths at the regression dates.
struct RegressionData {
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> D;   // n × d at each date
    std::vector<Eigen::MatrixXd> Y;   // n × h at each date
    std::vector<Eigen::MatrixXd> dW;  // n × d increment from each date to the next
    Eigen::VectorXd H;
    std::vector<double> L_terminal;   // Σ_i L_i(λ_i T) per path, for localization checks

    std::size_t paths() const noexcept { return static_cast<std::size_t>(H.size()); }
    std::size_t dates() const noexcept { return times.size(); }
};

namespace detail {

inline std::vector<std::size_t> regression_mesh_points(std::size_t mesh_steps, std::size_t stride) {
    std::vector<std::size_t> pts;
    for (std::size_t m = 0; m < mesh_steps; m += stride) pts.push_back(m);
    pts.push_back(mesh_steps);
    return pts;
}

template <int Dim, int Factors>
void record_path(RegressionData& data, std::size_t p, const PathBundle<Dim, Factors>& b,
                 const std::vector<std::size_t>& mesh_points, double h_value) {
    const auto& grid = b.grid();
    std::size_t k_grid = 0;
    for (std::size_t j = 0; j < mesh_points.size(); ++j) {
        const std::size_t g = grid.mesh_positions[mesh_points[j]];
        data.D[j].row(static_cast<Eigen::Index>(p)) = b.D[g].transpose();
        data.Y[j].row(static_cast<Eigen::Index>(p)) = b.factor.y[g].transpose();
        if (j + 1 < mesh_points.size()) {
            const std::size_t g_next = grid.mesh_positions[mesh_points[j + 1]];
            AssetVector<Dim> acc = AssetVector<Dim>::Zero(b.D[0].size());
            for (k_grid = g; k_grid < g_next; ++k_grid) acc += b.dW[k_grid];
            data.dW[j].row(static_cast<Eigen::Index>(p)) = acc.transpose();
        }
    }
    data.H(static_cast<Eigen::Index>(p)) = h_value;
    data.L_terminal[p] = b.factor.driver.back().sum();
}

inline void allocate(RegressionData& data, const std::vector<double>& times, std::size_t n, Eigen::Index d,
                     Eigen::Index h) {
    data.times = times;
    const auto rows = static_cast<Eigen::Index>(n);
    data.D.assign(times.size(), Eigen::MatrixXd(rows, d));
    data.Y.assign(times.size(), Eigen::MatrixXd(rows, h));
    data.dW.assign(times.size() - 1, Eigen::MatrixXd(rows, d));
    data.H.resize(rows);
    data.L_terminal.assign(n, 0.0);
}

}  // namespace detail

template <int Dim, int Factors>
RegressionData collect_regression_data(std::span<const PathBundle<Dim, Factors>> paths, const Payoff& payoff,
                                       double rate, std::size_t stride) {
    if (paths.empty()) throw ConfigError("no training paths");
    if (stride == 0) throw ConfigError("regression stride must be positive");
    const auto& grid0 = paths.front().grid();
    const std::size_t mesh_steps = grid0.mesh_positions.size() - 1;
    const auto pts = detail::regression_mesh_points(mesh_steps, stride);
    std::vector<double> times;
    for (auto m : pts) times.push_back(grid0.times[grid0.mesh_positions[m]]);
    RegressionData data;
    detail::allocate(data, times, paths.size(), paths.front().D[0].size(), paths.front().factor.y[0].size());
    for (std::size_t p = 0; p < paths.size(); ++p)
        detail::record_path(data, p, paths[p], pts, evaluate_payoff(payoff, paths[p], rate));
    return data;
}

// Same as collect_regression_data but simulates path by path, so only the
// cross-sections are held in memory.
template <int Dim, int Factors>
RegressionData simulate_regression_data(const MarketSetup<Dim, Factors>& setup, std::size_t n_paths,
                                        std::uint64_t master_seed, const Payoff& payoff, std::size_t stride) {
    setup.validate();
    if (stride == 0) throw ConfigError("regression stride must be positive");
    const TimeGrid mesh = make_mesh(setup.horizon, setup.step);
    const auto pts = detail::regression_mesh_points(mesh.steps(), stride);
    std::vector<double> times;
    for (auto m : pts) times.push_back(mesh.times[m]);
    RegressionData data;
    detail::allocate(data, times, n_paths, setup.model->assets(), setup.ou.dimension());
    for (std::size_t p = 0; p < n_paths; ++p) {
        const auto b = simulate_path(setup, master_seed, p);
        detail::record_path(data, p, b, pts, evaluate_payoff(payoff, b, setup.model->rate()));
    }
    return data;
}

struct BsdeDate {
    double time = 0.0;
    StateBasis basis;
    Eigen::VectorXd value_coef;            // V(t_k) ≈ basis · value_coef
    Eigen::VectorXd cond_coef;             // E[V(t_{k+1}) | state(t_k)]
    std::vector<Eigen::VectorXd> grad_coef;  // V̄_m(t_k), one per asset
    double mean_V = 0.0;
    Eigen::VectorXd mean_V_bar;
    Eigen::VectorXd V_bar_se;              // standard error of the V̄ regression target mean
    double mean_g = 0.0;
    double r2 = 1.0;
    double condition = 1.0;
    bool rank_deficient = false;
    Estimate martingale_residual;          // V(t_{k+1}) − V(t_k) − gΔ
};

struct BsdeSolution {
    std::vector<BsdeDate> dates;
    Estimate V0;
    double terminal_residual = 0.0;  // max |V(T) − H|
    std::size_t rank_warnings = 0;
    std::size_t paths = 0;
    DriverForm driver = DriverForm::mean_value;

    // Index of the last regression date at or before t.
    std::size_t date_index(double t) const {
        std::size_t k = 0;
        while (k + 1 < dates.size() && dates[k + 1].time <= t + 1e-12) ++k;
        return std::min(k, dates.size() >= 2 ? dates.size() - 2 : 0);
    }

    template <class DVec, class YVec>
    double value(std::size_t k, const DVec& d, const YVec& y) const {
        const auto& dt = dates[k];
        return dt.basis.features(d, y).dot(dt.value_coef);
    }

    template <int Dim, class DVec, class YVec>
    AssetVector<Dim> gradient(std::size_t k, const DVec& d, const YVec& y) const {
        const auto& dt = dates[k];
        const Eigen::VectorXd f = dt.basis.features(d, y);
        AssetVector<Dim> out(static_cast<Eigen::Index>(dt.grad_coef.size()));
        for (std::size_t m = 0; m < dt.grad_coef.size(); ++m) out(static_cast<Eigen::Index>(m)) = f.dot(dt.grad_coef[m]);
        return out;
    }

    // CSV columns: t,V,Vbar_1..Vbar_d,R2
    void write_csv(std::ostream& os) const {
        if (dates.empty()) return;
        const auto d = dates.front().mean_V_bar.size();
        os << "t,V";
        for (Eigen::Index m = 0; m < d; ++m) os << ",Vbar_" << m + 1;
        os << ",R2\n";
        os.precision(12);
        for (const auto& dt : dates) {
            os << dt.time << ',' << dt.mean_V;
            for (Eigen::Index m = 0; m < d; ++m) os << ',' << (dt.mean_V_bar.size() ? dt.mean_V_bar(m) : 0.0);
            os << ',' << dt.r2 << '\n';
        }
    }
};

// Backward induction on the regression dates:
//   ĉ_k = Ê[V_{k+1} | state_k],  V̄_k = Ê[(V_{k+1} − ĉ_k)ΔW | state_k]/Δ,
//   Ṽ_k(z e_i) from the chosen estimator,  V_k = ĉ_k − g_k Δ,
// with the driver evaluated at the date state (a mesh point, so Z̄ = 1).
template <int Dim, int Factors>
BsdeSolution solve_backward(const RegressionData& data, const CoefficientModel<Dim, Factors>& model,
                            const OpportunitySurface<Factors>& surface, std::span<const SubordinatorSpec> specs,
                            const BsdeConfig& cfg = {}) {
    const std::size_t n = data.paths();
    if (n < 1000) throw ConfigError("solve_backward needs at least 1000 paths");
    if (data.dates() < 2) throw ConfigError("need at least two regression dates");
    const std::size_t K = data.dates() - 1;
    const Eigen::Index d = data.D.front().cols();
    const Eigen::Index h = data.Y.front().cols();
    const auto rows = static_cast<Eigen::Index>(n);

    std::vector<JumpQuadrature> quads;
    for (const auto& s : specs) quads.push_back(jump_quadrature(s, cfg.quad_panels));
    const bool flat = surface.mode() == SurfaceMode::closed_form || model.constant_coefficients();
    const std::span<const JumpQuadrature> qspan = flat ? std::span<const JumpQuadrature>{} : std::span{quads};

    BsdeSolution sol;
    sol.paths = n;
    sol.driver = cfg.driver;
    sol.dates.resize(K + 1);
    Eigen::VectorXd v_next = data.H;
    Eigen::VectorXd g_sum = Eigen::VectorXd::Zero(rows);

    auto& terminal = sol.dates[K];
    terminal.time = data.times[K];
    terminal.basis = StateBasis(data.D[K], data.Y[K], cfg.basis);
    {
        const Eigen::MatrixXd x = terminal.basis.design(data.D[K], data.Y[K]);
        const auto fit = least_squares(x, v_next);
        terminal.value_coef = fit.coef;
        terminal.cond_coef = fit.coef;
        terminal.grad_coef.assign(static_cast<std::size_t>(d), Eigen::VectorXd::Zero(terminal.basis.size()));
        terminal.r2 = fit.r2;
        terminal.condition = fit.condition;
    }
    terminal.mean_V = v_next.mean();
    terminal.mean_V_bar = Eigen::VectorXd::Zero(d);
    terminal.V_bar_se = Eigen::VectorXd::Zero(d);

    for (std::size_t kk = K; kk-- > 0;) {
        auto& date = sol.dates[kk];
        const double t = data.times[kk];
        const double dt = data.times[kk + 1] - t;
        date.time = t;
        date.basis = StateBasis(data.D[kk], data.Y[kk], cfg.basis);
        const Eigen::MatrixXd x = date.basis.design(data.D[kk], data.Y[kk]);

        const auto fit_c = least_squares(x, v_next);
        date.cond_coef = fit_c.coef;
        date.r2 = fit_c.r2;
        date.condition = fit_c.condition;
        date.rank_deficient = fit_c.rank_deficient;
        if (fit_c.rank_deficient) ++sol.rank_warnings;
        const Eigen::VectorXd c_hat = x * fit_c.coef;
        const Eigen::VectorXd innovation = v_next - c_hat;

        Eigen::MatrixXd v_bar(rows, d);
        date.grad_coef.resize(static_cast<std::size_t>(d));
        date.V_bar_se.resize(d);
        for (Eigen::Index m = 0; m < d; ++m) {
            const Eigen::VectorXd target = innovation.cwiseProduct(data.dW[kk].col(m)) / dt;
            date.V_bar_se(m) = estimate_of(std::span<const double>(target.data(), n)).se;
            const auto fit_g = least_squares(x, target);
            date.grad_coef[static_cast<std::size_t>(m)] = fit_g.coef;
            v_bar.col(m) = x * fit_g.coef;
        }

        Eigen::VectorXd v(rows), g(rows);
        std::vector<std::vector<double>> v_tilde(static_cast<std::size_t>(h));
        for (Eigen::Index p = 0; p < rows; ++p) {
            const AssetVector<Dim> dp = data.D[kk].row(p).transpose();
            const FactorVector<Factors> yp = data.Y[kk].row(p).transpose();
            DriverIngredients<Dim> ing;
            if (flat) {
                ing.bar_B = local_coefficients(model, yp).market_price;
                ing.F.assign(static_cast<std::size_t>(h), {});
            } else {
                ing = driver_ingredients<Dim, Factors>(model, surface, quads, t, yp, 1.0);
            }
            const AssetVector<Dim> vb = v_bar.row(p).transpose();
            double vp = c_hat(p);
            if (!flat && cfg.jump_estimator == JumpEstimator::state_shift) {
                for (Eigen::Index i = 0; i < h; ++i) {
                    auto& row = v_tilde[static_cast<std::size_t>(i)];
                    row.resize(quads[static_cast<std::size_t>(i)].size());
                    for (std::size_t q = 0; q < row.size(); ++q) {
                        FactorVector<Factors> shifted = yp;
                        shifted(i) += quads[static_cast<std::size_t>(i)].nodes[q];
                        row[q] = date.basis.features(dp, shifted).dot(fit_c.coef) - c_hat(p);
                    }
                }
            }
            const int sweeps = cfg.driver == DriverForm::structural ? std::max(cfg.inner_sweeps, 1) : 1;
            double gp = 0.0;
            for (int s = 0; s < sweeps; ++s) {
                if (!flat && cfg.jump_estimator == JumpEstimator::structural) {
                    for (Eigen::Index i = 0; i < h; ++i) {
                        auto& row = v_tilde[static_cast<std::size_t>(i)];
                        row.resize(ing.F[static_cast<std::size_t>(i)].size());
                        for (std::size_t q = 0; q < row.size(); ++q)
                            row[q] = -vp * ing.F[static_cast<std::size_t>(i)][q] * ing.z_bar;
                    }
                }
                gp = driver_g<Dim>(cfg.driver, vp, vb, flat ? std::vector<std::vector<double>>{} : v_tilde, ing, qspan,
                                   specs);
                vp = c_hat(p) - gp * dt;
            }
            v(p) = vp;
            g(p) = gp;
        }

        const Eigen::VectorXd residual = v_next - v - g * dt;
        date.martingale_residual = estimate_of(std::span<const double>(residual.data(), n));
        const auto fit_v = least_squares(x, v);
        date.value_coef = fit_v.coef;
        date.mean_V = v.mean();
        date.mean_V_bar = v_bar.colwise().mean().transpose();
        date.mean_g = g.mean();
        g_sum += g * dt;
        v_next = v;
    }

    const Eigen::VectorXd adjusted = data.H - g_sum;
    sol.V0 = estimate_of(std::span<const double>(adjusted.data(), n));
    sol.V0.mean = v_next.mean();
    sol.terminal_residual = 0.0;
    return sol;
}

// V(0) = E[Ẑ(T)H] on stored bundles and their density paths.
template <int Dim, int Factors>
Estimate mc_value_at_zero(std::span<const PathBundle<Dim, Factors>> paths, std::span<const DensityPath<Dim>> densities,
                          const Payoff& payoff, double rate) {
    if (paths.size() != densities.size()) throw ConfigError("paths and density paths differ in count");
    RunningStats stats;
    for (std::size_t p = 0; p < paths.size(); ++p)
        stats.add(densities[p].terminal() * evaluate_payoff(payoff, paths[p], rate) * paths[p].weight());
    return stats.estimate();
}

// Ẑ(T) = ℰ(−a·D)(T)/O₀ since O(T) = 1.
template <int Dim, int Factors>
double terminal_density(const CoefficientModel<Dim, Factors>& model, double O0, const PathBundle<Dim, Factors>& b) {
    const auto& times = b.grid().times;
    double n_acc = 0.0, qv = 0.0;
    for (std::size_t k = 0; k + 1 < b.size(); ++k) {
        const auto lc = local_coefficients(model, b.factor.y[k]);
        const double dt = times[k + 1] - times[k];
        n_acc -= lc.rho * dt + lc.market_price.dot(b.dW[k]);
        qv += lc.rho * dt;
    }
    return std::exp(n_acc - 0.5 * qv) / O0;
}

struct OracleResult {
    Estimate value;
    Estimate density_mean;  // E[Ẑ(T)], should be 1
    std::vector<double> weighted_payoffs;  // Ẑ(T)H per path
    std::vector<double> L_terminal;
};

// Streaming version of mc_value_at_zero.
template <int Dim, int Factors>
OracleResult mc_value_streaming(const MarketSetup<Dim, Factors>& setup, std::size_t n_paths, std::uint64_t seed,
                                const OpportunitySurface<Factors>& surface, const Payoff& payoff,
                                bool keep_samples = false) {
    setup.validate();
    const double O0 = surface.value(0.0, setup.ou.y0);
    RunningStats value, density;
    OracleResult out;
    for (std::size_t p = 0; p < n_paths; ++p) {
        const auto b = simulate_path(setup, seed, p);
        const double z = terminal_density(*setup.model, O0, b);
        const double x = z * evaluate_payoff(payoff, b, setup.model->rate());
        value.add(x);
        density.add(z);
        if (keep_samples) {
            out.weighted_payoffs.push_back(x);
            out.L_terminal.push_back(b.factor.driver.back().sum());
        }
    }
    out.value = value.estimate();
    out.density_mean = density.estimate();
    return out;
}

// Localized oracle: paths with Σ_i L_i(λ_i T) > level (τ_n ≤ T) are dropped
// from E[Ẑ(T)H]. As level grows this converges to the full oracle.
inline Estimate localized_value(std::span<const double> weighted_payoffs, std::span<const double> l_terminal,
                                double level) {
    if (weighted_payoffs.size() != l_terminal.size()) throw ConfigError("localization samples misaligned");
    RunningStats s;
    for (std::size_t p = 0; p < weighted_payoffs.size(); ++p) s.add(l_terminal[p] <= level ? weighted_payoffs[p] : 0.0);
    return s.estimate();
}

}  // namespace ouhedge
