#pragma once

// Least-squares regression on polynomial/hinge functions of the state (D, Y),
// used for the conditional expectations of the backward scheme.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouhedge/errors.hpp"

namespace ouhedge {

enum class BasisKind { standard, spline };

struct BasisSpec {
    BasisKind kind = BasisKind::standard;
    int knots = 8;  // hinge knots per asset for the spline basis
};

inline BasisKind parse_basis_kind(const std::string& s) {
    if (s == "standard") return BasisKind::standard;
    if (s == "spline") return BasisKind::spline;
    throw ConfigError("unknown basis kind: " + s);
}

// Functions of the state, with D and Y scaled by their sample means:
//   standard: 1, D_m, Y_i, D_m Y_i, D_m², Y_i², log D_m
//   spline:   standard plus max(D_m - κ_j, 0) at sample quantiles κ_j.
// Columns that are constant over the sample (other than the intercept) are
// dropped when the basis is built.
class StateBasis {
public:
    StateBasis() = default;

    StateBasis(const Eigen::MatrixXd& d, const Eigen::MatrixXd& y, const BasisSpec& spec)
        : assets_(d.cols()), factors_(y.cols()) {
        if (d.rows() != y.rows() || d.rows() == 0) throw ConfigError("basis sample is empty or misaligned");
        d_scale_ = d.colwise().mean().transpose();
        y_scale_ = y.colwise().mean().transpose();
        for (Eigen::Index m = 0; m < assets_; ++m)
            if (!(d_scale_(m) > 0.0)) throw DomainError("discounted prices must be positive");
        for (Eigen::Index i = 0; i < factors_; ++i)
            if (!(y_scale_(i) > 0.0)) y_scale_(i) = 1.0;
        knots_.assign(static_cast<std::size_t>(assets_), {});
        if (spec.kind == BasisKind::spline) {
            for (Eigen::Index m = 0; m < assets_; ++m) {
                std::vector<double> col(static_cast<std::size_t>(d.rows()));
                for (Eigen::Index p = 0; p < d.rows(); ++p) col[static_cast<std::size_t>(p)] = d(p, m) / d_scale_(m);
                std::sort(col.begin(), col.end());
                auto& ks = knots_[static_cast<std::size_t>(m)];
                for (int j = 1; j <= spec.knots; ++j) {
                    const auto idx = static_cast<std::size_t>(static_cast<double>(j) / (spec.knots + 1) *
                                                              static_cast<double>(col.size() - 1));
                    const double k = col[idx];
                    if (ks.empty() || k > ks.back() + 1e-9) ks.push_back(k);
                }
            }
        }
        raw_size_ = 1 + 3 * assets_ + 2 * factors_ + assets_ * factors_;
        for (const auto& ks : knots_) raw_size_ += static_cast<Eigen::Index>(ks.size());

        // Keep the intercept and every column that varies over the sample.
        Eigen::VectorXd row(raw_size_), lo = Eigen::VectorXd::Constant(raw_size_, INFINITY),
                                        hi = Eigen::VectorXd::Constant(raw_size_, -INFINITY);
        for (Eigen::Index p = 0; p < d.rows(); ++p) {
            fill_raw(d.row(p).transpose(), y.row(p).transpose(), row);
            lo = lo.cwiseMin(row);
            hi = hi.cwiseMax(row);
        }
        auto varies = [&](Eigen::Index c) {
            return hi(c) - lo(c) > 1e-10 * std::max(1.0, std::max(std::abs(hi(c)), std::abs(lo(c))));
        };
        // A constant Y_i makes D_m Y_i a multiple of D_m.
        const Eigen::Index y_first = 1 + assets_, cross_first = y_first + factors_;
        auto redundant_cross = [&](Eigen::Index c) {
            if (c < cross_first || c >= cross_first + assets_ * factors_) return false;
            return !varies(y_first + (c - cross_first) % factors_);
        };
        for (Eigen::Index c = 1; c < raw_size_; ++c)
            if (varies(c) && !redundant_cross(c)) kept_.push_back(c);
    }

    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(kept_.size()); }
    Eigen::Index raw_size() const noexcept { return raw_size_; }

    template <class DVec, class YVec>
    Eigen::VectorXd features(const DVec& d, const YVec& y) const {
        Eigen::VectorXd raw(raw_size_), out(size());
        fill_raw(d, y, raw);
        for (std::size_t c = 0; c < kept_.size(); ++c) out(static_cast<Eigen::Index>(c)) = raw(kept_[c]);
        return out;
    }

    Eigen::MatrixXd design(const Eigen::MatrixXd& d, const Eigen::MatrixXd& y) const {
        Eigen::MatrixXd x(d.rows(), size());
        Eigen::VectorXd raw(raw_size_);
        for (Eigen::Index p = 0; p < d.rows(); ++p) {
            fill_raw(d.row(p).transpose(), y.row(p).transpose(), raw);
            for (std::size_t c = 0; c < kept_.size(); ++c) x(p, static_cast<Eigen::Index>(c)) = raw(kept_[c]);
        }
        return x;
    }

private:
    template <class DVec, class YVec>
    void fill_raw(const DVec& d, const YVec& y, Eigen::VectorXd& out) const {
        Eigen::Index c = 0;
        out(c++) = 1.0;
        for (Eigen::Index m = 0; m < assets_; ++m) out(c++) = d(m) / d_scale_(m);
        for (Eigen::Index i = 0; i < factors_; ++i) out(c++) = y(i) / y_scale_(i);
        for (Eigen::Index m = 0; m < assets_; ++m)
            for (Eigen::Index i = 0; i < factors_; ++i) out(c++) = d(m) / d_scale_(m) * y(i) / y_scale_(i);
        for (Eigen::Index m = 0; m < assets_; ++m) out(c++) = std::pow(d(m) / d_scale_(m), 2);
        for (Eigen::Index i = 0; i < factors_; ++i) out(c++) = std::pow(y(i) / y_scale_(i), 2);
        for (Eigen::Index m = 0; m < assets_; ++m) out(c++) = std::log(d(m) / d_scale_(m));
        for (Eigen::Index m = 0; m < assets_; ++m)
            for (double k : knots_[static_cast<std::size_t>(m)]) out(c++) = std::max(d(m) / d_scale_(m) - k, 0.0);
    }

    Eigen::Index assets_ = 0, factors_ = 0, raw_size_ = 1;
    Eigen::VectorXd d_scale_, y_scale_;
    std::vector<std::vector<double>> knots_;
    std::vector<Eigen::Index> kept_{0};
};

struct LeastSquaresFit {
    Eigen::VectorXd coef;
    double r2 = 0.0;
    double condition = 1.0;  // |R_11| / |R_rr| of the pivoted QR
    Eigen::Index rank = 0;
    bool rank_deficient = false;
};

// Ordinary least squares through column-pivoted QR. Rank-deficient designs
// are solved on the detected rank with the remaining coefficients set to zero.
inline LeastSquaresFit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& target) {
    if (x.rows() != target.size()) throw ConfigError("design and target lengths differ");
    if (x.rows() < x.cols()) throw ConfigError("fewer observations than basis functions");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    LeastSquaresFit fit;
    fit.rank = qr.rank();
    fit.rank_deficient = fit.rank < x.cols();
    fit.coef = qr.solve(target);
    if (fit.rank > 0) {
        const auto r = qr.matrixR();
        const double top = std::abs(r(0, 0));
        const double bottom = std::abs(r(fit.rank - 1, fit.rank - 1));
        fit.condition = bottom > 0.0 ? top / bottom : INFINITY;
    }
    const double mean = target.mean();
    const double tss = (target.array() - mean).square().sum();
    const double rss = (target - x * fit.coef).squaredNorm();
    fit.r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
    return fit;
}

}  // namespace ouhedge
