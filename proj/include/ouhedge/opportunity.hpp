#pragma once

// Opportunity process P(t,y) = E_{t,y}[exp(-∫_t^T ρ(Y(s))ds)], evaluated
// either by Monte Carlo over exact factor paths or by a finite-difference
// solve of its backward integro-differential equation (one factor), plus the
// quantities built from it: adjustment process a, the variance-optimal
// density Ẑ and the driver ingredients F, B̄, Z̄.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouhedge/errors.hpp"
#include "ouhedge/levy.hpp"
#include "ouhedge/market.hpp"
#include "ouhedge/ngou.hpp"
#include "ouhedge/quadrature.hpp"
#include "ouhedge/random.hpp"
#include "ouhedge/stats.hpp"

namespace ouhedge {

enum class SurfaceMode { closed_form, ipde, monte_carlo };

template <int Factors>
class OpportunitySurface {
public:
    explicit OpportunitySurface(double horizon) : horizon_(horizon) {}
    OpportunitySurface(const OpportunitySurface& other) : horizon_(other.horizon_), extrapolations_(other.extrapolations()) {}
    OpportunitySurface& operator=(const OpportunitySurface& other) {
        horizon_ = other.horizon_;
        extrapolations_.store(other.extrapolations(), std::memory_order_relaxed);
        return *this;
    }
    virtual ~OpportunitySurface() = default;

    virtual double value(double t, const FactorVector<Factors>& y) const = 0;
    virtual SurfaceMode mode() const = 0;

    double horizon() const noexcept { return horizon_; }
    // Evaluations that fell outside the solved domain and were extrapolated.
    std::size_t extrapolations() const noexcept { return extrapolations_.load(std::memory_order_relaxed); }

protected:
    void note_extrapolation() const noexcept { extrapolations_.fetch_add(1, std::memory_order_relaxed); }

private:
    double horizon_;
    mutable std::atomic<std::size_t> extrapolations_{0};
};

// ρ constant: P(t,y) = e^{-ρ(T-t)}.
template <int Factors>
class ConstantRhoSurface final : public OpportunitySurface<Factors> {
public:
    ConstantRhoSurface(double rho, double horizon) : OpportunitySurface<Factors>(horizon), rho_(rho) {
        if (!(rho >= 0.0)) throw DomainError("rho must be nonnegative");
    }
    double value(double t, const FactorVector<Factors>&) const override {
        return std::exp(-rho_ * (this->horizon() - std::clamp(t, 0.0, this->horizon())));
    }
    SurfaceMode mode() const override { return SurfaceMode::closed_form; }
    double rho() const noexcept { return rho_; }

private:
    double rho_;
};

// ∫ ρ(Y(s)) ds over [0, span] for a factor started at y with the given jumps
// (times relative to the start), 4-node Gauss-Legendre per inter-jump segment.
template <int Dim, int Factors>
double integrated_rho(const CoefficientModel<Dim, Factors>& model, const FactorVector<Factors>& lambda,
                      FactorVector<Factors> y, const JumpPath& jumps, double span) {
    double acc = 0.0;
    double t0 = 0.0;
    auto segment = [&](double t1) {
        if (t1 > t0) {
            const FactorVector<Factors> start = y;
            acc += gauss_legendre<4>(
                [&](double s) {
                    const FactorVector<Factors> ys = (start.array() * (-lambda.array() * (s - t0)).exp()).matrix();
                    return local_coefficients(model, ys).rho;
                },
                t0, t1);
            y = (start.array() * (-lambda.array() * (t1 - t0)).exp()).matrix();
            t0 = t1;
        }
    };
    for (const auto& e : jumps.events) {
        segment(e.time);
        y(e.component) += e.size;
    }
    segment(span);
    return acc;
}

// Monte-Carlo estimate of P(t,y) with standard error.
template <int Dim, int Factors>
Estimate estimate_P_mc(const CoefficientModel<Dim, Factors>& model, const FactorVector<Factors>& lambda,
                       std::span<const SubordinatorSpec> specs, double horizon, double t,
                       const FactorVector<Factors>& y, std::size_t n_inner, std::uint64_t seed) {
    if (n_inner < 100) throw ConfigError("estimate_P_mc needs at least 100 inner samples");
    if (!(t >= 0.0 && t <= horizon)) throw DomainError("t outside [0, T]");
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (!(y(i) > 0.0)) throw DomainError("factor value must be positive");
    const double span = horizon - t;
    RunningStats stats;
    for (std::size_t s = 0; s < n_inner; ++s) {
        const auto jumps = sample_jump_path(specs, span, derive_seed(seed, s));
        stats.add(std::exp(-integrated_rho(model, lambda, y, jumps, span)));
    }
    return stats.estimate();
}

// Surface that runs estimate_P_mc at every evaluation; the general-h fallback.
template <int Dim, int Factors>
class McSurface final : public OpportunitySurface<Factors> {
public:
    McSurface(std::shared_ptr<const CoefficientModel<Dim, Factors>> model, FactorVector<Factors> lambda,
              std::vector<SubordinatorSpec> specs, double horizon, std::size_t n_inner, std::uint64_t seed)
        : OpportunitySurface<Factors>(horizon), model_(std::move(model)), lambda_(std::move(lambda)),
          specs_(std::move(specs)), n_inner_(n_inner), seed_(seed) {}

    double value(double t, const FactorVector<Factors>& y) const override {
        std::uint64_t h = mix_seed(std::bit_cast<std::uint64_t>(t));
        for (Eigen::Index i = 0; i < y.size(); ++i) h = mix_seed(h ^ std::bit_cast<std::uint64_t>(y(i)));
        return estimate_P_mc(*model_, lambda_, specs_, this->horizon(), std::clamp(t, 0.0, this->horizon()), y,
                             n_inner_, derive_seed(seed_, h))
            .mean;
    }
    SurfaceMode mode() const override { return SurfaceMode::monte_carlo; }

private:
    std::shared_ptr<const CoefficientModel<Dim, Factors>> model_;
    FactorVector<Factors> lambda_;
    std::vector<SubordinatorSpec> specs_;
    std::size_t n_inner_;
    std::uint64_t seed_;
};

struct IpdeConfig {
    int nodes = 400;           // minimum number of y nodes
    double max_dx = 0.01;      // maximum log-spacing of the geometric y mesh
    double courant = 1.0;      // λΔτ/Δx; 1 is an exact characteristic shift
    double time_step = 0.0;    // 0: derived from courant
    double theta = 1.0;        // reaction implicitness when courant < 1
    double y_floor = 0.0;      // 0: automatic
    double y_max = 0.0;        // 0: y0 + quantile_bound(L(λT), quantile)
    double quantile = 0.9999;
    int quad_panels = 16;
    int max_stored_levels = 4000;
    int max_nodes = 20000;
};

// P on a geometric y mesh (uniform in log y) and uniform τ = T - t levels.
// Values beyond the mesh are extrapolated linearly in log P.
class IpdeSurface final : public OpportunitySurface<1> {
public:
    IpdeSurface(double horizon, double log_floor, double dx, std::size_t nodes, double dtau,
                std::size_t store_every, std::vector<std::vector<double>> levels, double y_max)
        : OpportunitySurface<1>(horizon), log_floor_(log_floor), dx_(dx), dtau_(dtau), store_every_(store_every),
          y_max_(y_max), levels_(std::move(levels)) {
        y_.resize(nodes);
        for (std::size_t j = 0; j < nodes; ++j) y_[j] = std::exp(log_floor_ + dx_ * static_cast<double>(j));
    }

    double value(double t, const FactorVector<1>& y) const override { return value_at(t, y(0)); }
    SurfaceMode mode() const override { return SurfaceMode::ipde; }

    double value_at(double t, double y) const {
        const double tau = std::clamp(this->horizon() - t, 0.0, this->horizon());
        const double spacing = dtau_ * static_cast<double>(store_every_);
        const double pos = tau / spacing;
        std::size_t lo = static_cast<std::size_t>(pos);
        if (lo >= levels_.size() - 1) lo = levels_.size() - 2;
        double w = pos - static_cast<double>(lo);
        if (levels_.size() == 1) return in_level(0, y);
        const double hi_tau = std::min(this->horizon(), spacing * static_cast<double>(lo + 1));
        const double lo_tau = spacing * static_cast<double>(lo);
        w = hi_tau > lo_tau ? (tau - lo_tau) / (hi_tau - lo_tau) : 0.0;
        return (1.0 - w) * in_level(lo, y) + w * in_level(lo + 1, y);
    }

    const std::vector<double>& mesh() const noexcept { return y_; }
    double y_floor() const noexcept { return y_.front(); }
    double y_top() const noexcept { return y_.back(); }
    double y_max() const noexcept { return y_max_; }
    double dtau() const noexcept { return dtau_ * static_cast<double>(store_every_); }
    const std::vector<std::vector<double>>& levels() const noexcept { return levels_; }

    // CSV columns: t,y,P
    void write_csv(std::ostream& os, std::size_t y_stride = 1, std::size_t t_stride = 1) const {
        os << "t,y,P\n";
        os.precision(17);
        const double spacing = dtau();
        for (std::size_t n = 0; n < levels_.size(); n += t_stride) {
            const double t = std::max(0.0, this->horizon() - spacing * static_cast<double>(n));
            for (std::size_t j = 0; j < y_.size(); j += y_stride) os << t << ',' << y_[j] << ',' << levels_[n][j] << '\n';
        }
    }

private:
    double in_level(std::size_t n, double y) const {
        const auto& u = levels_[n];
        const std::size_t last = y_.size() - 1;
        if (y <= y_.front() || y >= y_.back()) {
            const bool below = y <= y_.front();
            if (y != y_.front() && y != y_.back()) this->note_extrapolation();
            const std::size_t a = below ? 0 : last - 1;
            const double la = std::log(u[a]), lb = std::log(u[a + 1]);
            const double slope = (lb - la) / (y_[a + 1] - y_[a]);
            const double base = below ? la : lb;
            const double anchor = below ? y_[a] : y_[a + 1];
            return std::exp(base + slope * (y - anchor));
        }
        auto j = static_cast<std::size_t>((std::log(y) - log_floor_) / dx_);
        j = std::min(j, last - 1);
        while (j > 0 && y_[j] > y) --j;
        while (j + 1 < last && y_[j + 1] < y) ++j;
        const double w = (y - y_[j]) / (y_[j + 1] - y_[j]);
        return (1.0 - w) * u[j] + w * u[j + 1];
    }

    double log_floor_, dx_, dtau_;
    std::size_t store_every_;
    double y_max_;
    std::vector<double> y_;
    std::vector<std::vector<double>> levels_;
};

namespace detail {

// Interpolation stencil of u(y_j + z_q) on the mesh.
struct JumpStencil {
    std::size_t index;  // left node, or the anchor node when extrapolating
    double weight;      // linear weight of node index+1, or y distance beyond the top when extrapolating
    bool beyond_top;
};

}  // namespace detail

// Backward solve of
//   ∂_t P = ρ(y)P + λ y ∂_y P - λ ∫(P(t,y+z) - P(t,y)) ν(dz),  P(T,y) = 1,
// in τ = T - t with upwind transport in x = log y. At unit Courant number the
// transport step is an exact shift along the characteristic and the reaction
// is integrated exponentially with the jump integral by Heun's method;
// otherwise a θ-scheme in the reaction with an explicit jump integral is used.
// The jump integral uses the quadrature from jump_quadrature.
inline IpdeSurface solve_P_ipde(const Model1& model, const OUParams<1>& ou, const SubordinatorSpec& spec,
                                double horizon, const IpdeConfig& cfg = {}) {
    if (!(horizon > 0.0)) throw ConfigError("IPDE horizon must be positive");
    if (!(cfg.courant > 0.0 && cfg.courant <= 1.0)) throw StepSizeError("Courant number must lie in (0, 1]");
    const double lambda = ou.lambda(0);
    const double y0 = ou.y0(0);
    const auto quad = jump_quadrature(spec, cfg.quad_panels);

    const double c1 = ou.floor(horizon)(0);
    const double mean_level = spec.jump_moment(1);
    double floor = c1 * std::exp(-lambda * horizon);
    if (mean_level > 0.0) floor = std::max(floor, 1e-3 * std::min(y0, mean_level));
    if (cfg.y_floor > 0.0) floor = cfg.y_floor;
    double y_max = cfg.y_max > 0.0 ? cfg.y_max : y0 + quantile_bound(spec, horizon, cfg.quantile);
    y_max = std::max(y_max, y0);
    const double top_needed = (y_max + quad.z_max) * 1.001;
    if (!(top_needed > floor)) throw ConfigError("IPDE mesh bounds are inconsistent");
    const double range = std::log(top_needed) - std::log(floor);

    // Pick Δτ so that T/Δτ is an integer, then Δx = λΔτ/courant.
    double dx_target = std::min(cfg.max_dx, range / std::max(cfg.nodes - 1, 1));
    dx_target = std::max(dx_target, range / std::max(cfg.max_nodes - 1, 1));
    double dtau, dx, courant;
    std::size_t steps;
    if (cfg.time_step > 0.0) {
        steps = static_cast<std::size_t>(std::ceil(horizon / cfg.time_step - 1e-9));
        dtau = horizon / static_cast<double>(steps);
        dx = dx_target;
        courant = lambda * dtau / dx;
        if (courant > 1.0 + 1e-12)
            throw StepSizeError("explicit transport step violates CFL: courant " + std::to_string(courant));
    } else {
        steps = static_cast<std::size_t>(std::ceil(horizon * lambda / (cfg.courant * dx_target)));
        steps = std::max<std::size_t>(steps, 1);
        dtau = horizon / static_cast<double>(steps);
        dx = lambda * dtau / cfg.courant;
        courant = cfg.courant;
    }
    const bool shift = std::abs(courant - 1.0) < 1e-12;
    const auto nodes = static_cast<std::size_t>(std::ceil(range / dx)) + 1;
    if (lambda * dtau * quad.total_weight() > 1.0)
        throw StepSizeError("explicit jump term unstable: lambda * dtau * nu-mass exceeds 1");

    const double log_floor = std::log(floor);
    std::vector<double> y(nodes), rho_at(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
        y[j] = std::exp(log_floor + dx * static_cast<double>(j));
        rho_at[j] = local_coefficients(model, FactorVector<1>(FactorVector<1>::Constant(y[j]))).rho;
    }
    if (y.back() < y_max + quad.z_max) throw DomainError("IPDE mesh does not cover y_max + z_max");

    const std::size_t nq = quad.size();
    std::vector<detail::JumpStencil> stencil(nodes * nq);
    for (std::size_t j = 0; j < nodes; ++j) {
        for (std::size_t q = 0; q < nq; ++q) {
            const double target = y[j] + quad.nodes[q];
            auto& s = stencil[j * nq + q];
            if (target >= y.back()) {
                s = {nodes - 2, target - y.back(), true};
                continue;
            }
            auto k = static_cast<std::size_t>((std::log(target) - log_floor) / dx);
            k = std::min(k, nodes - 2);
            while (k > 0 && y[k] > target) --k;
            while (k + 2 < nodes && y[k + 1] < target) ++k;
            s = {k, (target - y[k]) / (y[k + 1] - y[k]), false};
        }
    }

    auto jump_term = [&](const std::vector<double>& u, std::vector<double>& out) {
        const double top_slope = (std::log(u[nodes - 1]) - std::log(u[nodes - 2])) / (y[nodes - 1] - y[nodes - 2]);
        for (std::size_t j = 0; j < nodes; ++j) {
            double acc = 0.0;
            for (std::size_t q = 0; q < nq; ++q) {
                const auto& s = stencil[j * nq + q];
                const double shifted = s.beyond_top ? u[nodes - 1] * std::exp(top_slope * s.weight)
                                                    : (1.0 - s.weight) * u[s.index] + s.weight * u[s.index + 1];
                acc += quad.weights[q] * (shifted - u[j]);
            }
            out[j] = lambda * acc;
        }
    };

    const std::size_t store_every =
        std::max<std::size_t>(1, (steps + cfg.max_stored_levels - 1) / std::max(cfg.max_stored_levels, 1));
    std::vector<std::vector<double>> levels;
    std::vector<double> u(nodes, 1.0), next(nodes), jump(nodes), jump_arrival(nodes);
    std::vector<double> decay(nodes);
    decay[0] = std::exp(-rho_at[0] * dtau);
    for (std::size_t j = 1; j < nodes; ++j) decay[j] = std::exp(-0.5 * (rho_at[j - 1] + rho_at[j]) * dtau);
    levels.push_back(u);
    for (std::size_t n = 1; n <= steps; ++n) {
        jump_term(u, jump);
        if (shift) {
            // Heun along the characteristic: Euler predictor, then the
            // trapezoid rule for the jump integral at both ends.
            next[0] = decay[0] * (u[0] + dtau * jump[0]);
            for (std::size_t j = 1; j < nodes; ++j) next[j] = decay[j] * (u[j - 1] + dtau * jump[j - 1]);
            jump_term(next, jump_arrival);
            next[0] = decay[0] * (u[0] + 0.5 * dtau * jump[0]) + 0.5 * dtau * jump_arrival[0];
            for (std::size_t j = 1; j < nodes; ++j)
                next[j] = decay[j] * (u[j - 1] + 0.5 * dtau * jump[j - 1]) + 0.5 * dtau * jump_arrival[j];
        } else {
            for (std::size_t j = 0; j < nodes; ++j) {
                const double upstream = j == 0 ? u[0] : u[j - 1];
                const double explicit_part = u[j] - courant * (u[j] - upstream) -
                                             (1.0 - cfg.theta) * dtau * rho_at[j] * u[j] + dtau * jump[j];
                next[j] = explicit_part / (1.0 + cfg.theta * dtau * rho_at[j]);
            }
        }
        u.swap(next);
        if (n % store_every == 0 || n == steps) levels.push_back(u);
    }
    // The final level sits at τ = T even when steps is not a multiple of
    // store_every; value_at clamps its interpolation weights for that interval.
    return IpdeSurface(horizon, log_floor, dx, nodes, dtau, store_every, std::move(levels), y_max);
}

// a = diag(D)^{-1} (σσ')^{-1} B at the factor left limit.
template <int Dim, int Factors>
AssetVector<Dim> adjustment_a(const CoefficientModel<Dim, Factors>& model, const AssetVector<Dim>& d,
                              const FactorVector<Factors>& y_left) {
    for (Eigen::Index m = 0; m < d.size(); ++m)
        if (!(d(m) > 0.0)) throw DomainError("discounted prices must be positive");
    return local_coefficients(model, y_left).premium.cwiseQuotient(d);
}

// ℰ(N) = exp(N - ½[N,N]) for a continuous semimartingale given on a grid.
inline std::vector<double> stochastic_exponential(std::span<const double> n, std::span<const double> qv) {
    if (n.size() != qv.size()) throw ConfigError("N and [N,N] paths differ in length");
    if (!n.empty() && n.front() != 0.0) throw DomainError("stochastic exponential requires N(0) = 0");
    std::vector<double> out(n.size());
    for (std::size_t k = 0; k < n.size(); ++k) out[k] = std::exp(n[k] - 0.5 * qv[k]);
    return out;
}

template <int Dim>
struct DensityPath {
    std::vector<double> O;         // P(t_k, Y(t_k))
    std::vector<double> O_left;    // P(t_k, Y(t_k^-))
    std::vector<AssetVector<Dim>> a;
    std::vector<double> N;         // -(a·D)(t_k)
    std::vector<double> qv;        // [N,N](t_k)
    std::vector<double> exponential;  // ℰ(-a·D)(t_k)
    std::vector<double> Z;         // Ẑ(t_k)
    std::vector<double> Z_left;    // Ẑ(t_k^-)
    double O0 = 1.0;

    double terminal() const noexcept { return Z.back(); }
    double z_bar(std::size_t k) const noexcept { return Z_left[k] / Z[k]; }
};

// Ẑ = O ℰ(-a·D) / O₀ along a simulated path. Within a step the coefficients
// are frozen and a·D is rebalanced continuously, so its increment is exactly
// ρΔt + B̄·ΔW with quadratic variation ρΔt.
template <int Dim, int Factors>
DensityPath<Dim> density_path(const CoefficientModel<Dim, Factors>& model,
                              const OpportunitySurface<Factors>& surface, const PathBundle<Dim, Factors>& b) {
    const auto& times = b.grid().times;
    if (std::abs(surface.horizon() - times.back()) > 1e-9 * std::max(1.0, times.back()))
        throw ConfigError("surface horizon does not match the path horizon");
    const std::size_t n = b.size();
    DensityPath<Dim> dp;
    dp.O.resize(n);
    dp.O_left.resize(n);
    dp.a.resize(n);
    dp.N.assign(n, 0.0);
    dp.qv.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        dp.O[k] = k + 1 == n ? 1.0 : surface.value(times[k], b.factor.y[k]);
        dp.O_left[k] = k == 0 ? dp.O[0] : (k + 1 == n ? 1.0 : surface.value(times[k], b.factor.y_left[k]));
    }
    dp.O0 = dp.O[0];
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto lc = local_coefficients(model, b.factor.y[k]);
        dp.a[k] = lc.premium.cwiseQuotient(b.D[k]);
        const double dt = times[k + 1] - times[k];
        dp.N[k + 1] = dp.N[k] - (lc.rho * dt + lc.market_price.dot(b.dW[k]));
        dp.qv[k + 1] = dp.qv[k] + lc.rho * dt;
    }
    dp.a[n - 1] = n > 1 ? dp.a[n - 2] : AssetVector<Dim>::Zero(b.D[0].size());
    dp.exponential = stochastic_exponential(dp.N, dp.qv);
    dp.Z.resize(n);
    dp.Z_left.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        dp.Z[k] = dp.O[k] * dp.exponential[k] / dp.O0;
        dp.Z_left[k] = dp.O_left[k] * dp.exponential[k] / dp.O0;
    }
    return dp;
}

// F(t, z e_i) = (P(t, y + z e_i) - P(t, y)) / P(t, y).
template <int Factors>
double jump_response(const OpportunitySurface<Factors>& surface, double t, const FactorVector<Factors>& y_left,
                     Eigen::Index component, double z) {
    const double base = surface.value(t, y_left);
    FactorVector<Factors> shifted = y_left;
    shifted(component) += z;
    return (surface.value(t, shifted) - base) / base;
}

template <int Dim>
struct DriverIngredients {
    std::vector<std::vector<double>> F;  // F[i][q] at the quadrature nodes of component i
    AssetVector<Dim> bar_B;
    double z_bar = 1.0;
};

template <int Dim, int Factors>
DriverIngredients<Dim> driver_ingredients(const CoefficientModel<Dim, Factors>& model,
                                          const OpportunitySurface<Factors>& surface,
                                          std::span<const JumpQuadrature> quadratures, double t,
                                          const FactorVector<Factors>& y_left, double z_bar = 1.0) {
    DriverIngredients<Dim> out;
    out.bar_B = local_coefficients(model, y_left).market_price;
    out.z_bar = z_bar;
    out.F.resize(quadratures.size());
    const double base = surface.value(t, y_left);
    for (std::size_t i = 0; i < quadratures.size(); ++i) {
        out.F[i].resize(quadratures[i].size());
        for (std::size_t q = 0; q < quadratures[i].size(); ++q) {
            FactorVector<Factors> shifted = y_left;
            shifted(static_cast<Eigen::Index>(i)) += quadratures[i].nodes[q];
            out.F[i][q] = (surface.value(t, shifted) - base) / base;
        }
    }
    return out;
}

// Diagnostic for the decomposition dK = ρ dt + ∫F Ñ(λdt,dz) of the stochastic
// logarithm K of O: returns Σ ΔO/O₋ minus the right-hand side accumulated on
// the grid. It is O(Δt) and vanishes as the mesh is refined.
template <int Dim, int Factors>
double k_decomposition_residual(const CoefficientModel<Dim, Factors>& model,
                                const OpportunitySurface<Factors>& surface, const PathBundle<Dim, Factors>& b,
                                std::span<const SubordinatorSpec> specs, std::span<const JumpQuadrature> quadratures) {
    const auto& times = b.grid().times;
    const std::size_t n = b.size();
    auto O_at = [&](std::size_t k, const FactorVector<Factors>& y) {
        return k + 1 == n ? 1.0 : surface.value(times[k], y);
    };
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double dt = times[k + 1] - times[k];
        const auto& y = b.factor.y[k];
        const double o_start = O_at(k, y);
        // continuous part of the step, then the jump at t_{k+1}
        const double o_before = O_at(k + 1, b.factor.y_left[k + 1]);
        lhs += (o_before - o_start) / o_start;
        rhs += local_coefficients(model, y).rho * dt;
        double compensator = 0.0;
        for (std::size_t i = 0; i < quadratures.size(); ++i)
            for (std::size_t q = 0; q < quadratures[i].size(); ++q)
                compensator += specs[i].time_scale() * quadratures[i].weights[q] *
                               jump_response(surface, times[k], y, static_cast<Eigen::Index>(i), quadratures[i].nodes[q]);
        rhs -= compensator * dt;
        if (b.factor.jumped[k + 1]) {
            const double o_after = O_at(k + 1, b.factor.y[k + 1]);
            lhs += (o_after - o_before) / o_before;
            rhs += (o_after - o_before) / o_before;
        }
    }
    return lhs - rhs;
}

}  // namespace ouhedge
