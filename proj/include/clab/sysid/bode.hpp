#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "clab/core/error.hpp"

namespace clab::sysid {

enum class BodeSource { piecewise_fft, analytic, single_fft };

inline const char* to_string(BodeSource s) {
    switch (s) {
    case BodeSource::piecewise_fft: return "piecewise_fft";
    case BodeSource::analytic: return "analytic";
    case BodeSource::single_fft: return "single_fft";
    }
    return "unknown";
}

inline BodeSource bode_source_from_string(const std::string& s) {
    if (s == "piecewise_fft") return BodeSource::piecewise_fft;
    if (s == "analytic") return BodeSource::analytic;
    if (s == "single_fft") return BodeSource::single_fft;
    throw Error(ErrorCode::invalid_argument, "unknown bode source '" + s + "'");
}

struct BodeData {
    std::vector<double> omega;
    std::vector<double> mag_db;
    std::vector<double> phase_deg;
    BodeSource source = BodeSource::analytic;
    int segments = 0;
    int dropped = 0;

    std::size_t size() const { return omega.size(); }
};

inline void validate(const BodeData& b) {
    require(b.omega.size() == b.mag_db.size() && b.omega.size() == b.phase_deg.size(),
            "bode: omega/mag/phase length mismatch");
    require(b.omega.size() >= 2, "bode: need at least 2 points");
    for (std::size_t i = 1; i < b.omega.size(); ++i) {
        require(b.omega[i] > b.omega[i - 1], "bode: omega not strictly increasing");
        require(std::abs(b.phase_deg[i] - b.phase_deg[i - 1]) < 180.0, "bode: phase not continuous");
    }
}

// Removes +-360 jumps, then shifts by a multiple of 360 so the first point lies in (-180, 180].
inline void unwrap_deg(std::vector<double>& ph) {
    if (ph.empty()) return;
    for (std::size_t i = 1; i < ph.size(); ++i) {
        double d = ph[i] - ph[i - 1];
        ph[i] -= 360.0 * std::round(d / 360.0);
    }
    double shift = -360.0 * std::ceil((ph[0] - 180.0) / 360.0);
    for (auto& p : ph) p += shift;
}

inline BodeData scale_gain(BodeData b, double gain) {
    require(gain > 0.0, "scale_gain: gain must be positive");
    double db = 20.0 * std::log10(gain);
    for (auto& m : b.mag_db) m += db;
    return b;
}

} // namespace clab::sysid
