#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "clab/core/error.hpp"
#include "clab/core/poly.hpp"
#include "clab/sysid/bode.hpp"

namespace clab::plant {

struct TransferFunction {
    std::vector<double> numerator;
    std::vector<double> denominator;

    std::complex<double> operator()(std::complex<double> s) const {
        return poly::eval(numerator, s) / poly::eval(denominator, s);
    }
};

inline void validate(const TransferFunction& tf) {
    require(!tf.numerator.empty() && !tf.denominator.empty(), "transfer function: empty coefficients");
    require(tf.denominator.front() != 0.0, "transfer function: leading denominator coefficient is zero");
    require(poly::degree(tf.numerator) <= tf.denominator.size() - 1, "transfer function: improper");
}

inline TransferFunction series(const TransferFunction& a, const TransferFunction& b) {
    return {poly::mul(a.numerator, b.numerator), poly::mul(a.denominator, b.denominator)};
}

inline TransferFunction gain(double g) { return {{g}, {1.0}}; }

inline double dc_gain(const TransferFunction& tf) {
    double d = tf.denominator.back();
    require(d != 0.0, "dc_gain: pole at origin", ErrorCode::domain);
    return tf.numerator.back() / d;
}

// Magnitude and unwrapped phase of tf(jw)*exp(-jw*delay). Phase is summed over the factors
// (jw - r) so it is continuous in w without depending on grid spacing.
inline sysid::BodeData analytic_bode(const TransferFunction& tf, double delay, const std::vector<double>& freqs) {
    validate(tf);
    require(delay >= 0.0, "analytic_bode: negative delay");
    require(!freqs.empty(), "analytic_bode: empty frequency list");
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        require(freqs[i] > 0.0, "analytic_bode: frequencies must be positive");
        if (i) require(freqs[i] > freqs[i - 1], "analytic_bode: frequencies must be strictly increasing");
    }
    auto num = poly::trim(tf.numerator);
    auto den = poly::trim(tf.denominator);
    auto zr = poly::roots(num);
    auto pr = poly::roots(den);
    double lead = num.front() / den.front();
    double base = lead < 0 ? 180.0 : 0.0;
    constexpr double deg = 180.0 / std::numbers::pi;
    // arg(jw - r) for a right-half-plane root would cross the branch cut at w = Im r.
    auto factor_arg = [](std::complex<double> s, std::complex<double> r) {
        if (r.real() > 0.0) return std::numbers::pi + std::arg(r - s);
        return std::arg(s - r);
    };

    sysid::BodeData out;
    out.source = sysid::BodeSource::analytic;
    for (double w : freqs) {
        std::complex<double> s(0.0, w);
        double pmag = 1.0;
        double ph = 0.0;
        for (auto p : pr) {
            double d = std::abs(s - p);
            if (d <= 1e-12 * std::max(1.0, w))
                throw Error(ErrorCode::domain, "analytic_bode: pole on the imaginary axis at w=" + std::to_string(w));
            pmag *= d;
            ph -= factor_arg(s, p);
        }
        double zmag = 1.0;
        for (auto z : zr) {
            zmag *= std::abs(s - z);
            ph += factor_arg(s, z);
        }
        double mag = std::abs(lead) * zmag / pmag;
        out.omega.push_back(w);
        out.mag_db.push_back(20.0 * std::log10(mag));
        out.phase_deg.push_back(base + ph * deg - w * delay * deg);
    }
    return out;
}

inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
    require(lo > 0 && hi > lo && n >= 2, "logspace: bad range");
    std::vector<double> v(n);
    double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    return v;
}

} // namespace clab::plant
