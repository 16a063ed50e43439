#pragma once

#include <cmath>

#include "clab/plant/transfer_function.hpp"

namespace clab::plant {

struct PlantParams {
    double m_k = 80.0;
    double b_eff = 840.0;
    double k_s = 50000.0;
    double beta = 100.0;
    double loop_delay = 0.002;
    double f_s = 1000.0;

    long delay_samples() const { return std::lround(loop_delay * f_s); }
    // Delay actually simulated, after rounding to whole samples.
    double effective_delay() const { return static_cast<double>(delay_samples()) / f_s; }
};

inline void validate(const PlantParams& p) {
    require(p.m_k > 0.0, "plant: m_k must be > 0");
    require(p.b_eff >= 0.0, "plant: b_eff must be >= 0");
    require(p.k_s > 0.0, "plant: k_s must be > 0");
    require(p.beta > 0.0, "plant: beta must be > 0");
    require(p.f_s > 0.0, "plant: f_s must be > 0");
    require(p.loop_delay >= 0.0, "plant: loop_delay must be >= 0");
}

inline TransferFunction plant_tf(const PlantParams& p) {
    validate(p);
    return {{p.beta * p.k_s}, {p.m_k, p.b_eff, p.k_s}};
}

inline double natural_frequency(const PlantParams& p) { return std::sqrt(p.k_s / p.m_k); }
inline double damping_ratio(const PlantParams& p) { return p.b_eff / (2.0 * std::sqrt(p.m_k * p.k_s)); }

} // namespace clab::plant
