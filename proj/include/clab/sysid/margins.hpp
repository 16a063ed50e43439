#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "clab/sysid/bode.hpp"

namespace clab::sysid {

struct MarginReport {
    double phi_pm = 0.0;
    double omega_gc = 0.0;
    bool crossover_found = false;
};

struct Crossing {
    std::size_t index;  // bracket is [index, index+1]
    double t;           // fraction inside the bracket in log-omega
    double omega;
};

// First downward 0 dB crossing of mag + shift, interpolated in log-omega / linear-dB.
inline std::optional<Crossing> first_downward_crossing(const BodeData& b, double shift_db = 0.0) {
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
        double m0 = b.mag_db[i] + shift_db, m1 = b.mag_db[i + 1] + shift_db;
        if (m0 >= 0.0 && m1 < 0.0) {
            double t = m0 / (m0 - m1);
            double lw = std::log(b.omega[i]) + t * (std::log(b.omega[i + 1]) - std::log(b.omega[i]));
            return Crossing{i, t, std::exp(lw)};
        }
    }
    return std::nullopt;
}

inline MarginReport measure_margins(const BodeData& b) {
    validate(b);
    MarginReport r;
    auto c = first_downward_crossing(b);
    if (!c) return r;
    double ph = b.phase_deg[c->index] + c->t * (b.phase_deg[c->index + 1] - b.phase_deg[c->index]);
    r.crossover_found = true;
    r.omega_gc = c->omega;
    r.phi_pm = 180.0 + ph;
    return r;
}

inline double shifted_crossover(const BodeData& b, double shift_db) {
    validate(b);
    require(std::isfinite(shift_db), "shifted_crossover: shift must be finite");
    auto c = first_downward_crossing(b, shift_db);
    if (!c)
        throw Error(ErrorCode::domain, "shifted_crossover: no 0 dB crossing after a " + std::to_string(shift_db) +
                                           " dB shift (alpha too large for the measured band)");
    return c->omega;
}

enum class PhaseWindowMode { clip, wrap };

struct PhaseView {
    BodeData data;       // wrap mode: phases moved into the window; clip mode: untouched
    double axis_lo;
    double axis_hi;
    PhaseWindowMode mode;
};

inline PhaseView display_phase_window(const BodeData& b, double lo = -270.0, double hi = 90.0,
                                      PhaseWindowMode mode = PhaseWindowMode::clip) {
    require(lo < hi, "display_phase_window: lo must be < hi");
    PhaseView v{b, lo, hi, mode};
    if (mode == PhaseWindowMode::wrap) {
        for (auto& p : v.data.phase_deg) {
            if (p >= lo && p <= hi) continue;
            p = lo + std::fmod(std::fmod(p - lo, 360.0) + 360.0, 360.0);
        }
    }
    return v;
}

} // namespace clab::sysid
