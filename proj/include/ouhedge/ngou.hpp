#pragma once

// Non-Gaussian OU factor dY = -ΛY dt + dL(λt), constructed exactly between
// jump events on a grid that contains every jump time.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ouhedge/errors.hpp"
#include "ouhedge/levy.hpp"

namespace ouhedge {

template <int Factors>
using FactorVector = Eigen::Matrix<double, Factors, 1>;

template <int Factors>
struct OUParams {
    FactorVector<Factors> lambda;
    FactorVector<Factors> y0;

    OUParams(FactorVector<Factors> lambda_, FactorVector<Factors> y0_)
        : lambda(std::move(lambda_)), y0(std::move(y0_)) {
        if (lambda.size() != y0.size()) throw ConfigError("OU lambda and y0 dimensions differ");
        for (Eigen::Index i = 0; i < lambda.size(); ++i) {
            if (!(lambda(i) > 0.0)) throw ConfigError("OU mean-reversion rates must be positive");
            if (!(y0(i) > 0.0)) throw ConfigError("OU initial state must be positive");
        }
    }

    Eigen::Index dimension() const noexcept { return lambda.size(); }

    // c_i = y_{i0} e^{-λ_i T}: lower bound of Y_i on [0, T].
    FactorVector<Factors> floor(double horizon) const {
        return (y0.array() * (-lambda.array() * horizon).exp()).matrix();
    }
};

struct TimeGrid {
    double horizon = 0.0;
    double step = 0.0;
    std::vector<double> times;
    std::vector<std::uint8_t> on_mesh;
    std::vector<std::size_t> mesh_positions;  // grid index of the k-th mesh point

    std::size_t size() const noexcept { return times.size(); }
    std::size_t steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }

    // Index of the grid interval [t_k, t_{k+1}) containing t (last interval
    // for t = horizon).
    std::size_t locate(double t) const noexcept {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t k = static_cast<std::size_t>(std::distance(times.begin(), it));
        k = k == 0 ? 0 : k - 1;
        return std::min(k, steps() == 0 ? 0 : steps() - 1);
    }
};

// Uniform mesh 0 = t_0 < ... < t_K = horizon; the last step is shortened if
// horizon is not a multiple of step.
inline TimeGrid make_mesh(double horizon, double step) {
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be nonnegative");
    if (!(step > 0.0)) throw ConfigError("mesh step must be positive");
    TimeGrid g;
    g.horizon = horizon;
    g.step = step;
    const auto k_max = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
    for (std::size_t k = 0; k <= k_max; ++k) {
        g.times.push_back(k == k_max ? horizon : static_cast<double>(k) * step);
        g.on_mesh.push_back(1);
        g.mesh_positions.push_back(k);
    }
    return g;
}

// Union of a mesh and the jump times of a path.
inline TimeGrid merge_jumps(const TimeGrid& mesh, const JumpPath& jumps) {
    TimeGrid g;
    g.horizon = mesh.horizon;
    g.step = mesh.step;
    g.times.reserve(mesh.times.size() + jumps.events.size());
    std::size_t e = 0;
    for (std::size_t k = 0; k < mesh.times.size(); ++k) {
        const double tk = mesh.times[k];
        while (e < jumps.events.size() && jumps.events[e].time < tk) {
            const double te = jumps.events[e].time;
            if (g.times.empty() || g.times.back() < te) {
                g.times.push_back(te);
                g.on_mesh.push_back(0);
            }
            ++e;
        }
        g.mesh_positions.push_back(g.times.size());
        g.times.push_back(tk);
        g.on_mesh.push_back(mesh.on_mesh.empty() ? 1 : mesh.on_mesh[k]);
    }
    return g;
}

template <int Factors>
struct FactorPath {
    TimeGrid grid;
    FactorVector<Factors> lambda;
    std::vector<FactorVector<Factors>> y;       // Y(t_k)
    std::vector<FactorVector<Factors>> y_left;  // Y(t_k^-)
    std::vector<FactorVector<Factors>> driver;  // L(λ t_k), componentwise
    std::vector<std::uint8_t> jumped;           // 1 where some component jumps at t_k
    JumpPath jumps;

    std::size_t size() const noexcept { return grid.size(); }

    // Exact Y(t) by decay from the last grid point at or before t.
    FactorVector<Factors> at(double t) const {
        const std::size_t k = grid.locate(t);
        const double dt = t - grid.times[k];
        return (y[k].array() * (-lambda.array() * dt).exp()).matrix();
    }
};

// Exact solution of the OU equation along the merged grid.
template <int Factors>
FactorPath<Factors> evolve(const OUParams<Factors>& params, const JumpPath& jumps, const TimeGrid& grid) {
    if (grid.times.empty() || grid.times.front() != 0.0) throw ConfigError("grid must start at 0");
    const Eigen::Index h = params.dimension();
    FactorPath<Factors> path;
    path.grid = grid;
    path.lambda = params.lambda;
    path.jumps = jumps;
    const std::size_t n = grid.size();
    path.y.resize(n);
    path.y_left.resize(n);
    path.driver.resize(n);
    path.jumped.assign(n, 0);

    FactorVector<Factors> state = params.y0;
    FactorVector<Factors> cum = FactorVector<Factors>::Zero(h);
    path.y[0] = state;
    path.y_left[0] = state;
    path.driver[0] = cum;

    std::size_t e = 0;
    for (std::size_t k = 1; k < n; ++k) {
        const double dt = grid.times[k] - grid.times[k - 1];
        state = (state.array() * (-params.lambda.array() * dt).exp()).matrix();
        path.y_left[k] = state;
        while (e < jumps.events.size() && jumps.events[e].time <= grid.times[k]) {
            const auto& ev = jumps.events[e];
            if (ev.time != grid.times[k]) throw InternalError("jump time missing from simulation grid");
            if (ev.component < 0 || ev.component >= h) throw InternalError("jump component out of range");
            state(ev.component) += ev.size;
            cum(ev.component) += ev.size;
            path.jumped[k] = 1;
            ++e;
        }
        path.y[k] = state;
        path.driver[k] = cum;
    }
    if (e != jumps.events.size()) throw InternalError("jump time beyond the simulation grid");
    return path;
}

// ∫_t^{t̂} Y_i(s) ds per component, in closed form on each inter-jump segment.
template <int Factors>
FactorVector<Factors> integrated_factor(const FactorPath<Factors>& path, double t, double t_hat) {
    if (!(t >= 0.0 && t <= t_hat && t_hat <= path.grid.horizon + 1e-12))
        throw DomainError("integration bounds must satisfy 0 <= t <= t_hat <= T");
    const auto& times = path.grid.times;
    const Eigen::Index h = path.lambda.size();
    FactorVector<Factors> acc = FactorVector<Factors>::Zero(h);
    if (t == t_hat) return acc;
    std::size_t k = path.grid.locate(t);
    double lo = t;
    while (lo < t_hat) {
        const double seg_end = k + 1 < times.size() ? std::min(times[k + 1], t_hat) : t_hat;
        const double offset = lo - times[k];
        for (Eigen::Index i = 0; i < h; ++i) {
            const double lam = path.lambda(i);
            const double start = path.y[k](i) * std::exp(-lam * offset);
            acc(i) += start * (-std::expm1(-lam * (seg_end - lo))) / lam;
        }
        lo = seg_end;
        ++k;
        if (k >= times.size()) break;
    }
    return acc;
}

}  // namespace ouhedge
