#pragma once

// Driving subordinators L_i(λ_i t): Lévy-measure descriptions, exact
// event-driven sampling and exponential moments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ouhedge/errors.hpp"
#include "ouhedge/quadrature.hpp"
#include "ouhedge/random.hpp"

namespace ouhedge {

inline constexpr double kDefaultMomentConstant = 7.0;
inline constexpr double kTailTolerance = 1e-8;

// ν(dz) = μ μ₁ e^{-μ₁ z} dz: jumps arrive at rate μ per unit of subordinator
// time with exponential sizes of mean 1/μ₁.
struct CompoundPoissonExp {
    double event_rate;  // μ
    double jump_rate;   // μ₁
};

struct Atom {
    double size;       // z_k > 0
    double intensity;  // ν_k >= 0
};

// ν = Σ ν_k δ_{z_k}.
struct TableMeasure {
    std::vector<Atom> atoms;
};

class SubordinatorSpec {
public:
    using Measure = std::variant<CompoundPoissonExp, TableMeasure>;

    SubordinatorSpec(Measure measure, double time_scale,
                     double moment_constant = kDefaultMomentConstant)
        : measure_(std::move(measure)), time_scale_(time_scale), moment_constant_(moment_constant) {
        validate();
    }

    static SubordinatorSpec compound_poisson_exp(double event_rate, double jump_rate, double time_scale,
                                                 double moment_constant = kDefaultMomentConstant) {
        return {CompoundPoissonExp{event_rate, jump_rate}, time_scale, moment_constant};
    }

    static SubordinatorSpec table(std::vector<Atom> atoms, double time_scale,
                                  double moment_constant = kDefaultMomentConstant) {
        return {TableMeasure{std::move(atoms)}, time_scale, moment_constant};
    }

    // No jumps at all; the factor then decays deterministically.
    static SubordinatorSpec none(double time_scale) { return table({}, time_scale); }

    const Measure& measure() const noexcept { return measure_; }
    double time_scale() const noexcept { return time_scale_; }
    double moment_constant() const noexcept { return moment_constant_; }

    // sup{C : ∫(e^{Cz}-1)ν(dz) < ∞}.
    double critical_exponent() const noexcept {
        if (const auto* cp = std::get_if<CompoundPoissonExp>(&measure_)) return cp->jump_rate;
        return std::numeric_limits<double>::infinity();
    }

    // ν total mass, i.e. events per unit of subordinator time.
    double total_intensity() const noexcept {
        if (const auto* cp = std::get_if<CompoundPoissonExp>(&measure_)) return cp->event_rate;
        double acc = 0.0;
        for (const auto& a : std::get<TableMeasure>(measure_).atoms) acc += a.intensity;
        return acc;
    }

    // ∫ z^k ν(dz) for k = 1, 2.
    double jump_moment(int k) const noexcept {
        if (const auto* cp = std::get_if<CompoundPoissonExp>(&measure_)) {
            return k == 1 ? cp->event_rate / cp->jump_rate
                          : 2.0 * cp->event_rate / (cp->jump_rate * cp->jump_rate);
        }
        double acc = 0.0;
        for (const auto& a : std::get<TableMeasure>(measure_).atoms)
            acc += a.intensity * std::pow(a.size, k);
        return acc;
    }

private:
    void validate() const {
        if (!(time_scale_ > 0.0) || !std::isfinite(time_scale_))
            throw ConfigError("subordinator time scale must be positive");
        if (!(moment_constant_ > 0.0)) throw ConfigError("moment constant C must be positive");
        if (const auto* cp = std::get_if<CompoundPoissonExp>(&measure_)) {
            if (!(cp->event_rate > 0.0)) throw ConfigError("compound Poisson event rate must be positive");
            if (!(cp->jump_rate > 0.0)) throw ConfigError("compound Poisson jump rate must be positive");
        } else {
            for (const auto& a : std::get<TableMeasure>(measure_).atoms) {
                if (!(a.size > 0.0) || !std::isfinite(a.size))
                    throw ConfigError("table measure jump sizes must be positive");
                if (!(a.intensity >= 0.0) || !std::isfinite(a.intensity))
                    throw ConfigError("table measure intensities must be nonnegative");
            }
        }
        if (moment_constant_ >= critical_exponent()) {
            throw MomentConditionError("exponential moment condition fails: C = " +
                                       std::to_string(moment_constant_) +
                                       " is not below the critical exponent " +
                                       std::to_string(critical_exponent()));
        }
    }

    Measure measure_;
    double time_scale_;
    double moment_constant_;
};

// ψ(C) = ∫(e^{Cz}-1)ν(dz), so E[e^{C L(λt)}] = exp(λ t ψ(C)).
inline double exp_moment_rate(const SubordinatorSpec& spec, double c) {
    if (c >= spec.critical_exponent())
        throw DomainError("exponent " + std::to_string(c) + " at or above critical exponent " +
                          std::to_string(spec.critical_exponent()));
    if (const auto* cp = std::get_if<CompoundPoissonExp>(&spec.measure()))
        return cp->event_rate * c / (cp->jump_rate - c);
    double acc = 0.0;
    for (const auto& a : std::get<TableMeasure>(spec.measure()).atoms)
        acc += a.intensity * std::expm1(c * a.size);
    return acc;
}

// Chernoff upper bound on the p-quantile of L(λt):
//   inf_{0<C<C*} (λ t ψ(C) - log(1-p)) / C.
inline double quantile_bound(const SubordinatorSpec& spec, double t, double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0,1)");
    if (spec.total_intensity() == 0.0 || t <= 0.0) return 0.0;
    double c_max = spec.critical_exponent();
    if (!std::isfinite(c_max)) {
        double z_max = 0.0;
        for (const auto& a : std::get<TableMeasure>(spec.measure()).atoms)
            if (a.intensity > 0.0) z_max = std::max(z_max, a.size);
        c_max = 50.0 / z_max;
    }
    const double lt = spec.time_scale() * t;
    const double log_tail = -std::log1p(-p);
    double best = std::numeric_limits<double>::infinity();
    constexpr int kScan = 400;
    for (int k = 1; k < kScan; ++k) {
        const double c = c_max * k / kScan;
        best = std::min(best, (lt * exp_moment_rate(spec, c) + log_tail) / c);
    }
    return best;
}

struct JumpEvent {
    double time;
    int component;
    double size;
};

// All jumps of L(λ·) on (0, horizon], sorted by time.
struct JumpPath {
    double horizon = 0.0;
    std::vector<JumpEvent> events;

    // L_i(λ_i t) for component i.
    double cumulative(int component, double t) const noexcept {
        double acc = 0.0;
        for (const auto& e : events) {
            if (e.time > t) break;
            if (e.component == component) acc += e.size;
        }
        return acc;
    }
};

namespace detail {

inline void sample_component(const SubordinatorSpec& spec, int component, double horizon, Engine& rng,
                             std::vector<JumpEvent>& out) {
    const double lambda = spec.time_scale();
    auto poisson_stream = [&](double rate, auto&& size_draw) {
        if (rate <= 0.0) return;
        std::exponential_distribution<double> gap(rate);
        double t = gap(rng);
        while (t <= horizon) {
            out.push_back({t, component, size_draw()});
            t += gap(rng);
        }
    };
    if (const auto* cp = std::get_if<CompoundPoissonExp>(&spec.measure())) {
        std::exponential_distribution<double> size(cp->jump_rate);
        poisson_stream(lambda * cp->event_rate, [&] { return size(rng); });
    } else {
        for (const auto& a : std::get<TableMeasure>(spec.measure()).atoms)
            poisson_stream(lambda * a.intensity, [&] { return a.size; });
    }
}

}  // namespace detail

// Exact sampling of the jump events of L(λ·) on (0, horizon]. Component i
// uses the sub-seed derive_seed(seed, i).
inline JumpPath sample_jump_path(std::span<const SubordinatorSpec> specs, double horizon, std::uint64_t seed) {
    if (horizon < 0.0 || !std::isfinite(horizon)) throw ConfigError("horizon must be finite and nonnegative");
    JumpPath path;
    path.horizon = horizon;
    if (horizon == 0.0) return path;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        Engine rng(derive_seed(seed, i));
        detail::sample_component(specs[i], static_cast<int>(i), horizon, rng, path.events);
    }
    std::stable_sort(path.events.begin(), path.events.end(),
                     [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });
    return path;
}

// Discretization of ν on [0, z_max] shared by the IPDE jump term and the
// BSDE driver. Weights are ν-masses (per unit subordinator time).
struct JumpQuadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
    double z_max = 0.0;
    double truncated_mass = 0.0;  // ν-mass dropped beyond z_max

    std::size_t size() const noexcept { return nodes.size(); }
    double total_weight() const noexcept {
        double acc = 0.0;
        for (double w : weights) acc += w;
        return acc;
    }
};

// For the exponential measure: composite 4-point Gauss-Legendre in z on
// [0, z_max], where z_max leaves ν-mass rate·tail_tolerance beyond it.
inline JumpQuadrature jump_quadrature(const SubordinatorSpec& spec, int panels = 16,
                                      double tail_tolerance = kTailTolerance) {
    JumpQuadrature q;
    if (const auto* cp = std::get_if<CompoundPoissonExp>(&spec.measure())) {
        using Rule = GaussLegendre<4>;
        q.z_max = -std::log(tail_tolerance) / cp->jump_rate;
        const double width = q.z_max / panels;
        for (int p = 0; p < panels; ++p) {
            const double a = p * width;
            for (int k = 0; k < 4; ++k) {
                const double z = a + 0.5 * width * (1.0 + Rule::nodes[k]);
                q.nodes.push_back(z);
                q.weights.push_back(cp->event_rate * cp->jump_rate * std::exp(-cp->jump_rate * z) * 0.5 * width *
                                    Rule::weights[k]);
            }
        }
        q.truncated_mass = cp->event_rate * tail_tolerance;
    } else {
        for (const auto& a : std::get<TableMeasure>(spec.measure()).atoms) {
            if (a.intensity == 0.0) continue;
            q.nodes.push_back(a.size);
            q.weights.push_back(a.intensity);
            q.z_max = std::max(q.z_max, a.size);
        }
    }
    return q;
}

}  // namespace ouhedge
