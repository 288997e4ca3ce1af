#pragma once

#include <cmath>

#include "ouhedge/errors.hpp"

namespace ouhedge::bs {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct Quote {
    double price;
    double delta;
};

// European option on a non-dividend stock under constant volatility.
inline Quote european(bool call, double s, double strike, double rate, double vol, double maturity) {
    if (!(s > 0.0 && strike > 0.0 && vol > 0.0 && maturity >= 0.0)) throw DomainError("invalid Black-Scholes inputs");
    if (maturity == 0.0) {
        const double intrinsic = call ? std::max(s - strike, 0.0) : std::max(strike - s, 0.0);
        return {intrinsic, call ? (s > strike ? 1.0 : 0.0) : (s < strike ? -1.0 : 0.0)};
    }
    const double sq = vol * std::sqrt(maturity);
    const double d1 = (std::log(s / strike) + (rate + 0.5 * vol * vol) * maturity) / sq;
    const double d2 = d1 - sq;
    const double df = std::exp(-rate * maturity);
    if (call) return {s * normal_cdf(d1) - strike * df * normal_cdf(d2), normal_cdf(d1)};
    return {strike * df * normal_cdf(-d2) - s * normal_cdf(-d1), normal_cdf(d1) - 1.0};
}

inline double call_price(double s, double strike, double rate, double vol, double maturity) {
    return european(true, s, strike, rate, vol, maturity).price;
}

inline double call_delta(double s, double strike, double rate, double vol, double maturity) {
    return european(true, s, strike, rate, vol, maturity).delta;
}

}  // namespace ouhedge::bs
