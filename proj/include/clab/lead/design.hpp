#pragma once

#include <cmath>
#include <numbers>
#include <optional>

#include "json.hpp"

#include "clab/plant/transfer_function.hpp"
#include "clab/sysid/margins.hpp"

namespace clab::lead {

constexpr double kDeg2Rad = std::numbers::pi / 180.0;

struct LeadDesignState {
    double k_ss = 1.0;
    double phi_pm = 0.0;
    double omega_gc_min = 0.0;
    double phi_d = 45.0;
    std::optional<double> delta_phi;
    std::optional<double> phi_max;
    std::optional<double> alpha;
    std::optional<double> omega_gc_max;
    std::optional<double> omega_gc;
    std::optional<double> k;
    std::optional<double> p;
    std::optional<double> z;

    void clear_answers() {
        delta_phi.reset();
        phi_max.reset();
        alpha.reset();
        omega_gc_max.reset();
        omega_gc.reset();
        k.reset();
        p.reset();
        z.reset();
    }
};

inline double delta_phi(double phi_d, double phi_pm) { return phi_d - phi_pm; }

struct PhiMaxRange {
    double lo;
    double hi;
    double reference;
};

inline PhiMaxRange phi_max_accepted_range(double dphi) {
    require(dphi >= 0.0, "phi_max_accepted_range: delta_phi must be >= 0");
    if (dphi + 10.0 >= 90.0)
        throw Error(ErrorCode::domain, "phi_max_accepted_range: delta_phi + 10 >= 90 deg, a single lead section cannot supply it");
    return {dphi + 5.0, dphi + 10.0, dphi + 7.5};
}

// sin of an angle in degrees, exact where the value is rational.
inline double sin_deg(double deg) {
    double r = std::fmod(deg, 360.0);
    if (r < 0) r += 360.0;
    if (std::fmod(r, 30.0) == 0.0) {
        switch (static_cast<int>(r / 30.0)) {
        case 0: case 6: return 0.0;
        case 1: case 5: return 0.5;
        case 3: return 1.0;
        case 7: case 11: return -0.5;
        case 9: return -1.0;
        default: break;
        }
    }
    return std::sin(deg * kDeg2Rad);
}

inline double alpha_from_phi_max(double phi_max_deg) {
    require(phi_max_deg >= 0.0 && phi_max_deg < 90.0, "alpha_from_phi_max: phi_max must be in [0, 90)");
    double s = sin_deg(phi_max_deg);
    return (1.0 + s) / (1.0 - s);
}

struct ControllerParams {
    double k;
    double p;
    double z;
};

inline ControllerParams controller_params(double alpha, double omega_gc) {
    require(alpha >= 1.0, "controller_params: alpha must be >= 1");
    require(omega_gc > 0.0, "controller_params: omega_gc must be > 0");
    double r = std::sqrt(alpha);
    return {alpha, omega_gc * r, omega_gc / r};
}

// k (s+z)/(s+p), without k_ss.
inline plant::TransferFunction lead_section(double k, double p, double z) { return {{k, k * z}, {1.0, p}}; }

inline plant::TransferFunction controller_tf(const LeadDesignState& st) {
    require(st.k && st.p && st.z, "controller_tf: k, p, z must all be accepted");
    require(st.k_ss > 0.0 && *st.p > 0.0 && *st.z > 0.0, "controller_tf: invalid parameters");
    return {{st.k_ss * *st.k, st.k_ss * *st.k * *st.z}, {1.0, *st.p}};
}

// Bode of the open loop with an analytic lead section applied on top of measured data.
inline sysid::BodeData apply_lead(const sysid::BodeData& base, double k, double p, double z) {
    sysid::BodeData out = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::complex<double> s(0.0, base.omega[i]);
        auto g = k * (s + z) / (s + p);
        out.mag_db[i] += 20.0 * std::log10(std::abs(g));
        out.phase_deg[i] += std::arg(g) / kDeg2Rad;
    }
    return out;
}

struct ReferenceDesign {
    double phi_pm;
    double omega_gc_min;
    double phi_d;
    double delta_phi;
    double phi_max;
    double alpha;
    double omega_gc_max;
    double omega_gc;
    double k;
    double p;
    double z;
    double predicted_pm;
};

// Engine reference answers. phi_max and omega_gc are searched inside their accepted ranges for
// the pair whose predicted margin (measured Bode times analytic G_c) lands closest to phi_d.
inline ReferenceDesign reference_design(const sysid::BodeData& open_loop, double phi_d) {
    auto m = sysid::measure_margins(open_loop);
    require(m.crossover_found, "reference_design: open loop has no gain crossover", ErrorCode::domain);
    ReferenceDesign best{};
    bool found = false;
    double dphi = delta_phi(phi_d, m.phi_pm);
    auto range = phi_max_accepted_range(dphi);
    constexpr int kPhiSteps = 21, kOmegaSteps = 66;
    for (int i = 0; i < kPhiSteps; ++i) {
        double phi_max = range.lo + (range.hi - range.lo) * i / (kPhiSteps - 1);
        double alpha = alpha_from_phi_max(phi_max);
        double wmax;
        try {
            wmax = sysid::shifted_crossover(open_loop, 20.0 * std::log10(alpha));
        } catch (const Error&) {
            continue;
        }
        if (!(wmax > m.omega_gc)) continue;
        double lmin = std::log(m.omega_gc), lmax = std::log(wmax);
        for (int j = 1; j + 1 < kOmegaSteps; ++j) {
            double wg = std::exp(lmin + (lmax - lmin) * j / (kOmegaSteps - 1));
            auto c = controller_params(alpha, wg);
            auto mm = sysid::measure_margins(apply_lead(open_loop, c.k, c.p, c.z));
            if (!mm.crossover_found) continue;
            if (!found || std::abs(mm.phi_pm - phi_d) < std::abs(best.predicted_pm - phi_d)) {
                best = {m.phi_pm, m.omega_gc, phi_d, dphi, phi_max, alpha, wmax, wg, c.k, c.p, c.z, mm.phi_pm};
                found = true;
            }
        }
    }
    if (!found) throw Error(ErrorCode::domain, "reference_design: no feasible lead design in the measured band");
    return best;
}

inline void to_json(nlohmann::json& j, const LeadDesignState& s) {
    j = nlohmann::json{{"k_ss", s.k_ss}, {"phi_pm", s.phi_pm}, {"omega_gc_min", s.omega_gc_min}, {"phi_d", s.phi_d}};
    auto put = [&](const char* key, const std::optional<double>& v) { j[key] = v ? nlohmann::json(*v) : nlohmann::json(); };
    put("delta_phi", s.delta_phi);
    put("phi_max", s.phi_max);
    put("alpha", s.alpha);
    put("omega_gc_max", s.omega_gc_max);
    put("omega_gc", s.omega_gc);
    put("k", s.k);
    put("p", s.p);
    put("z", s.z);
}

inline void from_json(const nlohmann::json& j, LeadDesignState& s) {
    s.k_ss = j.value("k_ss", 1.0);
    s.phi_pm = j.value("phi_pm", 0.0);
    s.omega_gc_min = j.value("omega_gc_min", 0.0);
    s.phi_d = j.value("phi_d", 45.0);
    auto get = [&](const char* key, std::optional<double>& v) {
        if (j.contains(key) && !j[key].is_null()) v = j[key].get<double>();
        else v.reset();
    };
    get("delta_phi", s.delta_phi);
    get("phi_max", s.phi_max);
    get("alpha", s.alpha);
    get("omega_gc_max", s.omega_gc_max);
    get("omega_gc", s.omega_gc);
    get("k", s.k);
    get("p", s.p);
    get("z", s.z);
}

} // namespace clab::lead
