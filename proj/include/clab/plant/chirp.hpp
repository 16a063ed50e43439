#pragma once

#include <cmath>

#include "clab/core/error.hpp"

namespace clab::plant {

struct ChirpConfig {
    double u_a = 2.0;
    double u_b = 0.0;
    double omega_0 = 8.0;
    double omega_1 = 650.0;
    double t_0 = 0.0;
    double t_f = 120.0;
};

inline void validate(const ChirpConfig& c) {
    require(c.u_a > 0.0, "chirp: u_a must be > 0");
    require(c.omega_0 > 0.0 && c.omega_1 > 0.0, "chirp: frequencies must be > 0");
    require(c.omega_1 >= c.omega_0, "chirp: omega_1 must be >= omega_0");
    require(c.t_f > 0.0, "chirp: t_f must be > 0");
}

inline double chirp_log_rho(const ChirpConfig& c) { return std::log(c.omega_1 / c.omega_0) / c.t_f; }

inline double chirp_phase(const ChirpConfig& c, double t) {
    double tau = t - c.t_0;
    double lr = chirp_log_rho(c);
    if (std::abs(lr) < 1e-12) return tau * c.omega_0;
    return std::expm1(lr * tau) / lr * c.omega_0;
}

inline double chirp_sample(const ChirpConfig& c, double t) { return c.u_a * std::sin(chirp_phase(c, t)) + c.u_b; }

// Backward difference of the phase over one sample, in rad/s.
inline double instantaneous_frequency(const ChirpConfig& c, double t_k, double f_s) {
    return f_s * (chirp_phase(c, t_k) - chirp_phase(c, t_k - 1.0 / f_s));
}

} // namespace clab::plant
