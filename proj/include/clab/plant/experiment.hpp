#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "clab/plant/chirp.hpp"
#include "clab/plant/discrete.hpp"
#include "clab/plant/plant.hpp"

namespace clab::plant {

struct NoiseConfig {
    double sigma_f = 0.5;
    std::uint64_t seed = 7;
};

enum class RecordKind { open_loop, closed_loop };

inline const char* to_string(RecordKind k) { return k == RecordKind::open_loop ? "open_loop" : "closed_loop"; }

inline RecordKind record_kind_from_string(const std::string& s) {
    if (s == "open_loop") return RecordKind::open_loop;
    if (s == "closed_loop") return RecordKind::closed_loop;
    throw Error(ErrorCode::invalid_argument, "unknown record kind '" + s + "'");
}

struct ControllerInfo {
    TransferFunction lead;
    double k_ss = 1.0;
};

struct ExperimentRecord {
    double f_s = 1000.0;
    std::vector<double> t;
    std::vector<double> u;
    std::vector<double> f;
    ChirpConfig chirp;
    RecordKind kind = RecordKind::open_loop;
    std::optional<ControllerInfo> controller;
    PlantParams params;
    NoiseConfig noise;

    std::size_t size() const { return t.size(); }
};

inline void validate(const ExperimentRecord& r) {
    require(r.t.size() == r.u.size() && r.t.size() == r.f.size(), "record: t/u/f length mismatch");
    require(r.t.size() >= 2, "record: need at least 2 samples");
    require(r.f_s > 0.0, "record: f_s must be > 0");
    double dt = 1.0 / r.f_s;
    for (std::size_t i = 1; i < r.t.size(); ++i)
        require(std::abs(r.t[i] - r.t[i - 1] - dt) <= 1e-9, "record: time stamps not uniform at 1/f_s");
}

inline constexpr std::size_t kMaxSamples = 100'000'000;
inline constexpr std::size_t kMinSamples = 256;

namespace detail {

inline std::size_t sample_count(const PlantParams& p, const ChirpConfig& c) {
    double n = std::round(c.t_f * p.f_s);
    if (n > static_cast<double>(kMaxSamples))
        throw Error(ErrorCode::domain, "experiment: " + std::to_string(n) + " samples exceeds the 1e8 limit");
    require(n >= static_cast<double>(kMinSamples), "experiment: fewer than 256 samples");
    return static_cast<std::size_t>(n);
}

// u -> integer delay -> filters in order -> additive noise.
inline ExperimentRecord run_cascade(const PlantParams& p, const ChirpConfig& c, const NoiseConfig& noise,
                                    std::vector<DiscreteFilter> stages) {
    validate(p);
    validate(c);
    require(noise.sigma_f >= 0.0, "noise: sigma_f must be >= 0");
    std::size_t n = sample_count(p, c);
    ExperimentRecord r;
    r.f_s = p.f_s;
    r.chirp = c;
    r.params = p;
    r.noise = noise;
    r.t.resize(n);
    r.u.resize(n);
    r.f.resize(n);
    long d = p.delay_samples();
    std::vector<double> line(static_cast<std::size_t>(d) + 1, 0.0);
    std::size_t head = 0;
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(0.0, noise.sigma_f > 0 ? noise.sigma_f : 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        double t = c.t_0 + static_cast<double>(k) / p.f_s;
        double u = chirp_sample(c, t);
        r.t[k] = t;
        r.u[k] = u;
        line[head] = u;
        double x = line[(head + 1) % line.size()];  // written d samples ago
        head = (head + 1) % line.size();
        for (auto& s : stages) x = s.step(x);
        if (noise.sigma_f > 0) x += gauss(rng);
        r.f[k] = x;
    }
    return r;
}

} // namespace detail

inline ExperimentRecord run_open_loop(const PlantParams& params, const ChirpConfig& chirp, const NoiseConfig& noise) {
    auto r = detail::run_cascade(params, chirp, noise, {discretize(plant_tf(params), params.f_s)});
    r.kind = RecordKind::open_loop;
    return r;
}

inline ExperimentRecord run_closed_loop(const PlantParams& params, const TransferFunction& lead, double k_ss,
                                        const ChirpConfig& chirp, const NoiseConfig& noise) {
    validate(lead);
    require(poly::trim(lead.denominator).size() == 2 && poly::trim(lead.numerator).size() <= 2,
            "closed loop: lead must be a first-order section");
    require(k_ss > 0.0, "closed loop: k_ss must be > 0");
    TransferFunction ctrl = series(gain(k_ss), lead);
    DiscreteFilter dc = discretize(ctrl, params.f_s);
    if (!dc.stable()) throw Error(ErrorCode::domain, "closed loop: unstable discrete controller pole");
    auto r = detail::run_cascade(params, chirp, noise, {dc, discretize(plant_tf(params), params.f_s)});
    r.kind = RecordKind::closed_loop;
    r.controller = ControllerInfo{lead, k_ss};
    return r;
}

// Continuous loop transfer matching what run_closed_loop simulates (delay carried separately).
inline TransferFunction loop_tf(const PlantParams& params, const TransferFunction& lead, double k_ss) {
    return series(series(gain(k_ss), lead), plant_tf(params));
}

} // namespace clab::plant
