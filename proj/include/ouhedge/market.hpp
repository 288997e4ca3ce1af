#pragma once

// Coefficient models b(y), σ(y), r and price-path simulation on the merged
// grid via the exponential (log-space) solution.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouhedge/errors.hpp"
#include "ouhedge/levy.hpp"
#include "ouhedge/ngou.hpp"
#include "ouhedge/random.hpp"

namespace ouhedge {

template <int Dim>
using AssetVector = Eigen::Matrix<double, Dim, 1>;
template <int Dim>
using AssetMatrix = Eigen::Matrix<double, Dim, Dim>;

// Declared constants of the linear-growth and derivative conditions. Used
// only by check_conditions.
struct GrowthConstants {
    double a_b = 0.0, b_b = 0.0;
    double a_sigma = 0.0, b_sigma = 0.0;
    std::optional<double> b_sigma_inv;  // b_σ in ‖(σσ')^{-1}‖ <= 1/(b_σ‖y‖)
    double abar_b = 0.0, bbar_b = 0.0;
    double abar_sigma = 0.0, bbar_sigma = 0.0;
};

template <int Dim, int Factors>
class CoefficientModel {
public:
    using Assets = AssetVector<Dim>;
    using Matrix = AssetMatrix<Dim>;
    using Factor = FactorVector<Factors>;
    static constexpr int kDim = Dim;
    static constexpr int kFactors = Factors;

    CoefficientModel(Eigen::Index assets, Eigen::Index factors, double rate)
        : assets_(assets), factors_(factors), rate_(rate) {
        if (!(rate >= 0.0)) throw ConfigError("interest rate must be nonnegative");
        if (assets <= 0 || factors <= 0) throw ConfigError("model dimensions must be positive");
        if (Dim != Eigen::Dynamic && assets != Dim) throw ConfigError("asset dimension mismatch");
        if (Factors != Eigen::Dynamic && factors != Factors) throw ConfigError("factor dimension mismatch");
    }
    virtual ~CoefficientModel() = default;

    virtual Assets drift(const Factor& y) const = 0;
    virtual Matrix volatility(const Factor& y) const = 0;
    virtual std::string name() const = 0;
    virtual std::optional<GrowthConstants> growth_constants() const { return std::nullopt; }
    // True when b and σ do not depend on y, so ρ is constant.
    virtual bool constant_coefficients() const { return false; }

    Eigen::Index assets() const noexcept { return assets_; }
    Eigen::Index factors() const noexcept { return factors_; }
    double rate() const noexcept { return rate_; }

private:
    Eigen::Index assets_;
    Eigen::Index factors_;
    double rate_;
};

using Model1 = CoefficientModel<1, 1>;

// dS = S(α dt + β dW); ignores the factor.
class ConstantBS final : public Model1 {
public:
    ConstantBS(double alpha, double beta, double rate = 0.0) : Model1(1, 1, rate), alpha_(alpha), beta_(beta) {}

    Assets drift(const Factor&) const override { return Assets::Constant(alpha_); }
    Matrix volatility(const Factor&) const override { return Matrix::Constant(beta_); }
    std::string name() const override { return "constant_bs"; }
    bool constant_coefficients() const override { return true; }
    std::optional<GrowthConstants> growth_constants() const override {
        GrowthConstants g;
        g.a_b = std::abs(alpha_);
        g.a_sigma = beta_ * beta_;
        return g;
    }

    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }

private:
    double alpha_, beta_;
};

// b(y) = α + βy, σ(y) = √y.
class BNS final : public Model1 {
public:
    BNS(double alpha, double beta, double rate = 0.0) : Model1(1, 1, rate), alpha_(alpha), beta_(beta) {}

    Assets drift(const Factor& y) const override { return Assets::Constant(alpha_ + beta_ * y(0)); }
    Matrix volatility(const Factor& y) const override { return Matrix::Constant(std::sqrt(y(0))); }
    std::string name() const override { return "bns"; }
    std::optional<GrowthConstants> growth_constants() const override {
        GrowthConstants g;
        g.a_b = std::abs(alpha_);
        g.b_b = std::abs(beta_);
        g.b_sigma = 1.0;
        g.b_sigma_inv = 1.0;
        g.bbar_b = 0.0;
        g.abar_b = std::abs(beta_);
        return g;
    }

    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }

private:
    double alpha_, beta_;
};

// Piecewise-linear b and σ tabulated on increasing y knots, flat outside.
class TabulatedModel final : public Model1 {
public:
    TabulatedModel(std::vector<double> knots, std::vector<double> drift, std::vector<double> vol,
                   double rate = 0.0)
        : Model1(1, 1, rate), knots_(std::move(knots)), drift_(std::move(drift)), vol_(std::move(vol)) {
        if (knots_.size() < 2 || drift_.size() != knots_.size() || vol_.size() != knots_.size())
            throw ConfigError("tabulated model needs >= 2 knots and matching b, sigma tables");
        if (!std::is_sorted(knots_.begin(), knots_.end()) ||
            std::adjacent_find(knots_.begin(), knots_.end()) != knots_.end())
            throw ConfigError("tabulated model knots must be strictly increasing");
    }

    Assets drift(const Factor& y) const override { return Assets::Constant(interp(drift_, y(0))); }
    Matrix volatility(const Factor& y) const override { return Matrix::Constant(interp(vol_, y(0))); }
    std::string name() const override { return "tabulated"; }

private:
    double interp(const std::vector<double>& v, double x) const {
        if (x <= knots_.front()) return v.front();
        if (x >= knots_.back()) return v.back();
        const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
        const auto k = static_cast<std::size_t>(std::distance(knots_.begin(), it)) - 1;
        const double w = (x - knots_[k]) / (knots_[k + 1] - knots_[k]);
        return (1.0 - w) * v[k] + w * v[k + 1];
    }

    std::vector<double> knots_, drift_, vol_;
};

// In-process extension point for arbitrary dimensions.
template <int Dim, int Factors>
class FunctionModel final : public CoefficientModel<Dim, Factors> {
public:
    using Base = CoefficientModel<Dim, Factors>;
    using typename Base::Assets;
    using typename Base::Factor;
    using typename Base::Matrix;

    FunctionModel(Eigen::Index assets, Eigen::Index factors, double rate, std::function<Assets(const Factor&)> b,
                  std::function<Matrix(const Factor&)> sigma, std::string name = "function",
                  bool constant = false)
        : Base(assets, factors, rate), b_(std::move(b)), sigma_(std::move(sigma)), name_(std::move(name)),
          constant_(constant) {}

    Assets drift(const Factor& y) const override { return b_(y); }
    Matrix volatility(const Factor& y) const override { return sigma_(y); }
    std::string name() const override { return name_; }
    bool constant_coefficients() const override { return constant_; }

private:
    std::function<Assets(const Factor&)> b_;
    std::function<Matrix(const Factor&)> sigma_;
    std::string name_;
    bool constant_;
};

template <int Dim>
double condition_number(const AssetMatrix<Dim>& m) {
    if (m.size() == 0 || !m.allFinite()) return std::numeric_limits<double>::infinity();
    if (m.rows() == 1) return m(0, 0) != 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd dyn = m;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dyn);
    const Eigen::VectorXd s = svd.singularValues();
    const double lo = s(s.size() - 1);
    return lo > 0.0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

// Everything derived from (b, σ, r) at one factor value.
template <int Dim>
struct LocalCoefficients {
    AssetVector<Dim> excess_drift;    // B(y) = b(y) - r
    AssetMatrix<Dim> sigma;           // σ(y)
    AssetVector<Dim> premium;         // (σσ')^{-1} B
    AssetVector<Dim> market_price;    // B̄(y) = σ' (σσ')^{-1} B
    double rho = 0.0;                 // B'(σσ')^{-1} B
    AssetVector<Dim> half_variance;   // ½ Σ_n σ_mn²
};

template <int Dim, int Factors>
LocalCoefficients<Dim> local_coefficients(const CoefficientModel<Dim, Factors>& model,
                                          const FactorVector<Factors>& y) {
    LocalCoefficients<Dim> c;
    c.excess_drift = model.drift(y).array() - model.rate();
    c.sigma = model.volatility(y);
    const AssetMatrix<Dim> cov = c.sigma * c.sigma.transpose();
    Eigen::LLT<AssetMatrix<Dim>> llt(cov);
    const bool finite = cov.allFinite();
    if (!finite || llt.info() != Eigen::Success) {
        throw LinearAlgebraError("sigma sigma' is not positive definite", finite ? condition_number<Dim>(cov)
                                                                               : std::numeric_limits<double>::infinity());
    }
    // Cheap screen on the Cholesky diagonal; the SVD only runs on failure.
    const auto diag = llt.matrixLLT().diagonal().cwiseAbs();
    const double ratio = diag.maxCoeff() / diag.minCoeff();
    if (!(ratio * ratio < 1e14)) throw LinearAlgebraError("sigma sigma' is numerically singular", condition_number<Dim>(cov));
    c.premium = llt.solve(c.excess_drift);
    c.market_price = c.sigma.transpose() * c.premium;
    c.rho = c.excess_drift.dot(c.premium);
    c.half_variance = 0.5 * c.sigma.rowwise().squaredNorm();
    return c;
}

template <int Dim, int Factors>
AssetVector<Dim> excess_drift_B(const CoefficientModel<Dim, Factors>& model, const FactorVector<Factors>& y) {
    return model.drift(y).array() - model.rate();
}

template <int Dim, int Factors>
double rho(const CoefficientModel<Dim, Factors>& model, const FactorVector<Factors>& y) {
    return local_coefficients(model, y).rho;
}

// B̄_i(y) = Σ_j (B'(σσ')^{-1})_j σ_ji.
template <int Dim, int Factors>
AssetVector<Dim> bar_B(const CoefficientModel<Dim, Factors>& model, const FactorVector<Factors>& y) {
    return local_coefficients(model, y).market_price;
}

// ρ̄(y) = Σ_m ((B'(σσ')^{-1})_m)² Σ_n σ_mn².
template <int Dim, int Factors>
double rho_bar(const CoefficientModel<Dim, Factors>& model, const FactorVector<Factors>& y) {
    const auto c = local_coefficients(model, y);
    return (c.premium.array().square() * (2.0 * c.half_variance).array()).sum();
}

struct ConditionCheck {
    std::string name;
    double worst_margin = std::numeric_limits<double>::infinity();  // bound - value, minimum over samples
    bool holds = true;
    std::string detail;
};

struct ConditionReport {
    std::vector<ConditionCheck> checks;
    double implied_b_sigma = std::numeric_limits<double>::infinity();
    double max_condition_number = 0.0;
    double max_rho = 0.0;
    double max_rho_bar = 0.0;
    bool all_hold() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.holds; });
    }
    const ConditionCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

inline std::ostream& operator<<(std::ostream& os, const ConditionReport& r) {
    for (const auto& c : r.checks)
        os << (c.holds ? "  ok   " : "  FAIL ") << c.name << " worst margin " << c.worst_margin
           << (c.detail.empty() ? "" : " (" + c.detail + ")") << '\n';
    os << "  implied b_sigma " << r.implied_b_sigma << ", max cond(σσ') " << r.max_condition_number
       << ", max rho " << r.max_rho << ", max rho_bar " << r.max_rho_bar << '\n';
    return os;
}

// Evaluates the growth and derivative conditions at sampled factor values.
// Derivatives use central differences with relative step 1e-5. The
// max-abs-entry norm is used throughout.
template <int Dim, int Factors>
ConditionReport check_conditions(const CoefficientModel<Dim, Factors>& model,
                                 std::span<const FactorVector<Factors>> samples) {
    ConditionReport report;
    const auto declared = model.growth_constants();
    auto max_abs = [](const auto& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); };

    auto named = [](const char* name) {
        ConditionCheck c;
        c.name = name;
        return c;
    };
    ConditionCheck invertible = named("sigma_sigma_invertible");
    ConditionCheck growth_b = named("linear_growth_b"), growth_cov = named("linear_growth_cov");
    ConditionCheck inv_cov = named("inverse_cov_bound");
    ConditionCheck deriv_b = named("derivative_b"), deriv_inv = named("derivative_inverse_cov");

    for (const auto& y : samples) {
        const double ny = max_abs(y);
        const auto b = model.drift(y);
        const auto s = model.volatility(y);
        const AssetMatrix<Dim> cov = s * s.transpose();
        const double cond = condition_number<Dim>(cov);
        report.max_condition_number = std::max(report.max_condition_number, cond);
        Eigen::LLT<AssetMatrix<Dim>> llt(cov);
        if (!cov.allFinite() || llt.info() != Eigen::Success || !(cond < 1e14)) {
            invertible.holds = false;
            invertible.worst_margin = -std::numeric_limits<double>::infinity();
            invertible.detail = "singular at y=" + std::to_string(y(0));
            continue;
        }
        const AssetMatrix<Dim> inv = llt.solve(AssetMatrix<Dim>::Identity(cov.rows(), cov.cols()));
        const auto lc = local_coefficients(model, y);
        report.max_rho = std::max(report.max_rho, lc.rho);
        report.max_rho_bar = std::max(report.max_rho_bar, rho_bar(model, y));
        report.implied_b_sigma = std::min(report.implied_b_sigma, 1.0 / (ny * max_abs(inv)));

        if (declared) {
            const auto& g = *declared;
            growth_b.worst_margin = std::min(growth_b.worst_margin, g.a_b + g.b_b * ny - max_abs(b));
            growth_cov.worst_margin =
                std::min(growth_cov.worst_margin, g.a_sigma + g.b_sigma * ny - max_abs(cov));
            if (g.b_sigma_inv)
                inv_cov.worst_margin =
                    std::min(inv_cov.worst_margin, 1.0 / (*g.b_sigma_inv * ny) - max_abs(inv));
        }
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double h = 1e-5 * std::max(1.0, std::abs(y(i)));
            FactorVector<Factors> up = y, dn = y;
            up(i) += h;
            dn(i) -= h;
            const AssetVector<Dim> db = (model.drift(up) - model.drift(dn)) / (2.0 * h);
            auto inv_at = [&](const FactorVector<Factors>& z) {
                const auto sz = model.volatility(z);
                const AssetMatrix<Dim> cz = sz * sz.transpose();
                return AssetMatrix<Dim>(cz.inverse());
            };
            const AssetMatrix<Dim> dinv = (inv_at(up) - inv_at(dn)) / (2.0 * h);
            if (declared) {
                const auto& g = *declared;
                deriv_b.worst_margin = std::min(deriv_b.worst_margin, g.abar_b + g.bbar_b * ny - max_abs(db));
                deriv_inv.worst_margin =
                    std::min(deriv_inv.worst_margin, g.abar_sigma + g.bbar_sigma * ny - max_abs(dinv));
            }
        }
    }
    constexpr double kSlack = 1e-9;
    report.checks.push_back(invertible);
    if (!(report.implied_b_sigma > 0.0) || !invertible.holds) {
        ConditionCheck implied{"implied_b_sigma_positive", report.implied_b_sigma, false, "no b_sigma > 0 exists"};
        report.checks.push_back(implied);
    } else {
        report.checks.push_back({"implied_b_sigma_positive", report.implied_b_sigma, true, ""});
    }
    if (declared) {
        for (auto* c : {&growth_b, &growth_cov, &inv_cov}) {
            if (std::isinf(c->worst_margin) && c->worst_margin > 0) continue;
            c->holds = c->worst_margin >= -kSlack * (1.0 + std::abs(c->worst_margin));
            report.checks.push_back(*c);
        }
        // Derivative bounds are diagnostics only: they degenerate near the
        // floor c_i for models such as BNS.
        for (auto* c : {&deriv_b, &deriv_inv}) {
            c->detail = c->worst_margin < 0 ? "declared derivative bound exceeded (warning)" : "";
            report.checks.push_back(*c);
        }
    }
    return report;
}

// One simulated scenario on the merged grid.
template <int Dim, int Factors>
struct PathBundle {
    FactorPath<Factors> factor;
    std::vector<AssetVector<Dim>> dW;  // dW[k] is the increment over [t_k, t_{k+1}]
    std::vector<AssetVector<Dim>> S;
    std::vector<AssetVector<Dim>> D;
    double log_weight = 0.0;  // log dP/dR when Brownian increments are tilted
    std::uint64_t master_seed = 0;
    std::uint64_t path_index = 0;

    const TimeGrid& grid() const noexcept { return factor.grid; }
    std::size_t size() const noexcept { return factor.size(); }
    double weight() const noexcept { return std::exp(log_weight); }
};

template <int Dim, int Factors>
struct MarketSetup {
    std::shared_ptr<const CoefficientModel<Dim, Factors>> model;
    OUParams<Factors> ou;
    std::vector<SubordinatorSpec> specs;
    AssetVector<Dim> s0;
    double horizon = 1.0;
    double step = 0.01;

    void validate() const {
        if (!model) throw ConfigError("market setup has no coefficient model");
        if (ou.dimension() != model->factors()) throw ConfigError("OU dimension differs from model factors");
        if (static_cast<Eigen::Index>(specs.size()) != ou.dimension())
            throw ConfigError("need one subordinator spec per factor component");
        for (Eigen::Index i = 0; i < ou.dimension(); ++i)
            if (std::abs(specs[i].time_scale() - ou.lambda(i)) > 1e-12 * std::max(1.0, ou.lambda(i)))
                throw ConfigError("subordinator time scale must equal the OU mean-reversion rate");
        if (s0.size() != model->assets()) throw ConfigError("initial price dimension mismatch");
        for (Eigen::Index m = 0; m < s0.size(); ++m)
            if (!(s0(m) > 0.0)) throw ConfigError("initial prices must be positive");
        if (!(horizon > 0.0) || !(step > 0.0)) throw ConfigError("horizon and step must be positive");
    }
};

// Brownian tilt for importance sampling: increments are drawn with drift
// m(y) = -κ B̄(y), and the path carries log dP/dR = Σ(-m·ΔW + ½|m|²Δt).
struct BrownianTilt {
    double kappa = 0.0;
    bool active() const noexcept { return kappa != 0.0; }
};

// Log-space stock update with coefficients frozen at the factor value at the
// start of each step, which is the left limit Y(s^-) for s inside the step:
//   log S_m += (b_m - ½Σ_n σ_mn²)Δt + Σ_n σ_mn ΔW_n.
template <int Dim, int Factors>
PathBundle<Dim, Factors> simulate_path(const MarketSetup<Dim, Factors>& setup, std::uint64_t master_seed,
                                       std::uint64_t path_index, BrownianTilt tilt = {}) {
    const std::uint64_t path_seed = derive_seed(master_seed, path_index);
    const auto& model = *setup.model;
    const double horizon = setup.horizon;
    auto jumps = sample_jump_path(setup.specs, horizon, stream_seed(path_seed, Stream::jumps));
    const TimeGrid grid = merge_jumps(make_mesh(horizon, setup.step), jumps);

    PathBundle<Dim, Factors> b;
    b.factor = evolve(setup.ou, jumps, grid);
    b.master_seed = master_seed;
    b.path_index = path_index;
    const std::size_t n = grid.size();
    const Eigen::Index d = model.assets();
    b.dW.assign(n > 0 ? n - 1 : 0, AssetVector<Dim>::Zero(d));
    b.S.resize(n);
    b.D.resize(n);

    Engine rng(stream_seed(path_seed, Stream::brownian));
    std::normal_distribution<double> normal;
    AssetVector<Dim> log_s = setup.s0.array().log();
    b.S[0] = setup.s0;
    b.D[0] = setup.s0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double dt = grid.times[k + 1] - grid.times[k];
        const double sq = std::sqrt(dt);
        AssetVector<Dim> dw(d);
        for (Eigen::Index m = 0; m < d; ++m) dw(m) = sq * normal(rng);
        const auto& y = b.factor.y[k];
        if (tilt.active()) {
            const auto lc = local_coefficients(model, y);
            const AssetVector<Dim> shift = -tilt.kappa * lc.market_price;
            dw += shift * dt;
            b.log_weight += -shift.dot(dw) + 0.5 * shift.squaredNorm() * dt;
        }
        b.dW[k] = dw;
        const AssetMatrix<Dim> sig = model.volatility(y);
        const AssetVector<Dim> drift = model.drift(y) - 0.5 * AssetVector<Dim>(sig.rowwise().squaredNorm());
        log_s += drift * dt + sig * dw;
        b.S[k + 1] = log_s.array().exp();
        b.D[k + 1] = std::exp(-model.rate() * grid.times[k + 1]) * b.S[k + 1];
    }
    return b;
}

template <int Dim, int Factors>
std::vector<PathBundle<Dim, Factors>> simulate_paths(const MarketSetup<Dim, Factors>& setup, std::size_t n_paths,
                                                     std::uint64_t master_seed, BrownianTilt tilt = {}) {
    setup.validate();
    std::vector<PathBundle<Dim, Factors>> out(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) out[p] = simulate_path(setup, master_seed, p, tilt);
    return out;
}

// CSV columns: path,t,Y_1..Y_h,S_1..S_d,D_1..D_d
template <int Dim, int Factors>
void write_paths_csv(std::ostream& os, std::span<const PathBundle<Dim, Factors>> paths) {
    if (paths.empty()) return;
    const auto h = paths.front().factor.y.front().size();
    const auto d = paths.front().S.front().size();
    os << "path,t";
    for (Eigen::Index i = 0; i < h; ++i) os << ",Y_" << i + 1;
    for (Eigen::Index m = 0; m < d; ++m) os << ",S_" << m + 1;
    for (Eigen::Index m = 0; m < d; ++m) os << ",D_" << m + 1;
    os << '\n';
    os.precision(17);
    for (const auto& p : paths) {
        for (std::size_t k = 0; k < p.size(); ++k) {
            os << p.path_index << ',' << p.grid().times[k];
            for (Eigen::Index i = 0; i < h; ++i) os << ',' << p.factor.y[k](i);
            for (Eigen::Index m = 0; m < d; ++m) os << ',' << p.S[k](m);
            for (Eigen::Index m = 0; m < d; ++m) os << ',' << p.D[k](m);
            os << '\n';
        }
    }
}

}  // namespace ouhedge
