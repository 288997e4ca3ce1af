#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace ouhedge {

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

// Welford accumulator.
class RunningStats {
public:
    void add(double x) noexcept {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }

    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stddev() const noexcept { return std::sqrt(variance()); }
    double standard_error() const noexcept {
        return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }
    Estimate estimate() const noexcept { return {mean_, standard_error(), n_}; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline Estimate estimate_of(std::span<const double> xs) noexcept {
    RunningStats s;
    for (double x : xs) s.add(x);
    return s.estimate();
}

}  // namespace ouhedge
