#pragma once

#include <array>
#include <cmath>

namespace ouhedge {

// Gauss-Legendre rule on [-1, 1].
template <int Order>
struct GaussLegendre;

template <>
struct GaussLegendre<3> {
    static constexpr std::array<double, 3> nodes{-0.7745966692414834, 0.0, 0.7745966692414834};
    static constexpr std::array<double, 3> weights{0.5555555555555556, 0.8888888888888888,
                                                   0.5555555555555556};
};

template <>
struct GaussLegendre<4> {
    static constexpr std::array<double, 4> nodes{-0.8611363115940526, -0.3399810435848563,
                                                 0.3399810435848563, 0.8611363115940526};
    static constexpr std::array<double, 4> weights{0.3478548451374538, 0.6521451548625461,
                                                   0.6521451548625461, 0.3478548451374538};
};

// ∫_a^b f(s) ds with one Gauss-Legendre panel.
template <int Order, class Fn>
double gauss_legendre(Fn&& f, double a, double b) {
    using Rule = GaussLegendre<Order>;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double acc = 0.0;
    for (int k = 0; k < Order; ++k) acc += Rule::weights[k] * f(mid + half * Rule::nodes[k]);
    return acc * half;
}

}  // namespace ouhedge
