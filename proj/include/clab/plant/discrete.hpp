#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "clab/core/poly.hpp"
#include "clab/plant/transfer_function.hpp"

namespace clab::plant {

// Difference equation a0*y[n] + a1*y[n-1] + ... = b0*u[n] + b1*u[n-1] + ..., with a0 = 1.
// Coefficients are in ascending powers of z^-1.
class DiscreteFilter {
public:
    DiscreteFilter() = default;
    DiscreteFilter(std::vector<double> b, std::vector<double> a) : b_(std::move(b)), a_(std::move(a)) {
        require(!a_.empty() && a_[0] != 0.0, "discrete filter: a0 must be nonzero");
        double a0 = a_[0];
        for (auto& v : b_) v /= a0;
        for (auto& v : a_) v /= a0;
        std::size_t n = std::max(a_.size(), b_.size());
        b_.resize(n, 0.0);
        a_.resize(n, 0.0);
        z_.assign(n, 0.0);
    }

    const std::vector<double>& b() const { return b_; }
    const std::vector<double>& a() const { return a_; }

    void reset() { std::fill(z_.begin(), z_.end(), 0.0); }

    // Transposed direct form II.
    double step(double u) {
        std::size_t n = b_.size();
        double y = b_[0] * u + (n > 1 ? z_[0] : 0.0);
        for (std::size_t i = 1; i < n; ++i) {
            double next = (i + 1 < n) ? z_[i] : 0.0;
            z_[i - 1] = b_[i] * u - a_[i] * y + next;
        }
        return y;
    }

    std::vector<double> filter(const std::vector<double>& u) {
        std::vector<double> y(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) y[i] = step(u[i]);
        return y;
    }

    std::complex<double> response(double omega, double f_s) const {
        std::complex<double> q = std::polar(1.0, -omega / f_s);  // z^-1
        std::complex<double> num{0}, den{0}, qk{1};
        for (std::size_t i = 0; i < b_.size(); ++i) {
            num += b_[i] * qk;
            den += a_[i] * qk;
            qk *= q;
        }
        return num / den;
    }

    // Roots of the characteristic polynomial in z.
    std::vector<std::complex<double>> poles() const { return poly::roots(a_); }

    bool stable() const {
        for (auto p : poles())
            if (std::abs(p) >= 1.0) return false;
        return true;
    }

private:
    std::vector<double> b_{1.0}, a_{1.0}, z_{0.0};
};

// Bilinear transform s = 2 f_s (1 - z^-1)/(1 + z^-1).
inline DiscreteFilter discretize(const TransferFunction& tf, double f_s) {
    validate(tf);
    require(f_s > 0.0, "discretize: f_s must be positive");
    auto num = poly::trim(tf.numerator);
    auto den = poly::trim(tf.denominator);
    double limit = std::numbers::pi * f_s;
    for (const auto* c : {&num, &den})
        for (auto r : poly::roots(*c))
            if (std::abs(r) >= limit)
                throw Error(ErrorCode::domain, "discretize: f_s too low for a pole/zero at |s|=" + std::to_string(std::abs(r)) +
                                                   " (aliasing)");

    std::size_t n = den.size() - 1;
    num.insert(num.begin(), n + 1 - num.size(), 0.0);
    double K = 2.0 * f_s;
    std::vector<double> minus{1.0, -1.0}, plus{1.0, 1.0};
    std::vector<double> b(n + 1, 0.0), a(n + 1, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
        std::size_t pw = n - i;  // power of s for coefficient i
        std::vector<double> term{std::pow(K, static_cast<double>(pw))};
        for (std::size_t k = 0; k < pw; ++k) term = poly::mul(term, minus);
        for (std::size_t k = 0; k < i; ++k) term = poly::mul(term, plus);
        for (std::size_t k = 0; k <= n; ++k) {
            b[k] += num[i] * term[k];
            a[k] += den[i] * term[k];
        }
    }
    return DiscreteFilter(b, a);
}

} // namespace clab::plant
