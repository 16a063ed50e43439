#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "clab/plant/experiment.hpp"
#include "clab/sysid/bode.hpp"

namespace clab::sysid {

namespace detail {

constexpr double kRad2Deg = 180.0 / std::numbers::pi;

inline void push_ratio(BodeData& b, double w, std::complex<double> h) {
    b.omega.push_back(w);
    b.mag_db.push_back(20.0 * std::log10(std::abs(h)));
    b.phase_deg.push_back(std::arg(h) * kRad2Deg);
}

} // namespace detail

// F/U over the whole record, every bin inside [omega_0, omega_1].
inline BodeData single_fft_bode(const plant::ExperimentRecord& rec) {
    plant::validate(rec);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> U, F;
    fft.fwd(U, rec.u);
    fft.fwd(F, rec.f);
    const double n = static_cast<double>(rec.size());
    const double res = 2.0 * std::numbers::pi * rec.f_s / n;
    auto k0 = static_cast<std::size_t>(std::ceil(rec.chirp.omega_0 / res));
    auto k1 = static_cast<std::size_t>(std::floor(rec.chirp.omega_1 / res));
    k0 = std::max<std::size_t>(k0, 1);
    k1 = std::min<std::size_t>(k1, rec.size() / 2);
    BodeData b;
    b.source = BodeSource::single_fft;
    b.segments = 1;
    for (std::size_t k = k0; k <= k1; ++k) {
        if (std::abs(U[k]) < 1e-12) {
            ++b.dropped;
            continue;
        }
        detail::push_ratio(b, static_cast<double>(k) * res, F[k] / U[k]);
    }
    require(b.size() >= 2, "single_fft_bode: fewer than 2 bins in the chirp band", ErrorCode::domain);
    unwrap_deg(b.phase_deg);
    return b;
}

inline BodeData piecewise_fft_bode(const plant::ExperimentRecord& rec, int n_segments = 120) {
    plant::validate(rec);
    require(n_segments >= 1, "piecewise_fft_bode: n_segments must be >= 1");
    const std::size_t L = rec.size() / static_cast<std::size_t>(n_segments);
    require(L >= 64, "piecewise_fft_bode: fewer than 64 samples per segment");

    std::vector<double> win(L);
    for (std::size_t i = 0; i < L; ++i) win[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(L));
    const double res = 2.0 * std::numbers::pi * rec.f_s / static_cast<double>(L);

    BodeData b;
    b.source = BodeSource::piecewise_fft;
    b.segments = n_segments;
    Eigen::FFT<double> fft;
    std::vector<double> us(L), fs(L);
    std::vector<std::complex<double>> U, F;
    for (int s = 0; s < n_segments; ++s) {
        std::size_t a = static_cast<std::size_t>(s) * L;
        double wc = plant::instantaneous_frequency(rec.chirp, rec.t[a + L / 2], rec.f_s);
        if (wc < res) {
            ++b.dropped;
            continue;
        }
        double mu = 0.0, mf = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            mu += rec.u[a + i];
            mf += rec.f[a + i];
        }
        mu /= static_cast<double>(L);
        mf /= static_cast<double>(L);
        for (std::size_t i = 0; i < L; ++i) {
            us[i] = (rec.u[a + i] - mu) * win[i];
            fs[i] = (rec.f[a + i] - mf) * win[i];
        }
        fft.fwd(U, us);
        fft.fwd(F, fs);
        auto k = static_cast<std::size_t>(std::lround(wc / res));
        if (k == 0 || k > L / 2 || std::abs(U[k]) < 1e-12) {
            ++b.dropped;
            continue;
        }
        detail::push_ratio(b, wc, F[k] / U[k]);
    }
    require(b.size() >= 2, "piecewise_fft_bode: fewer than 2 segments survived", ErrorCode::domain);
    unwrap_deg(b.phase_deg);
    return b;
}

} // namespace clab::sysid
