#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "clab/plant/io.hpp"

namespace clab {

struct Preset {
    plant::ChirpConfig chirp;
    plant::NoiseConfig noise;
};

struct ServerSettings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "var";
    std::string content_dir = "data";  // questions/, prelab/, users.json
    long long block_s = 7200;
    long long cooldown_s = 1800;
    long long slot_s = 1800;
    long long day_start_s = 9 * 3600;
    long long day_end_s = 17 * 3600;
    int decimation = 50;
    double backfill_s = 10.0;
    std::size_t queue_frames = 4096;
    double realtime_factor = 1.0;
    double default_phi_d = 45.0;
    std::string preset = "default";
};

struct AppConfig {
    plant::PlantParams plant;
    double k_ss = 0.0966;
    int segments = 120;
    std::map<std::string, Preset> presets;
    ServerSettings server;

    const Preset& preset(const std::string& name) const {
        auto it = presets.find(name);
        if (it == presets.end()) throw Error(ErrorCode::invalid_argument, "unknown preset '" + name + "'");
        return it->second;
    }
};

inline AppConfig default_config() {
    AppConfig c;
    c.presets["default"] = Preset{};
    Preset fid;
    fid.chirp.omega_0 = 1.0;
    fid.chirp.omega_1 = 300.0;
    c.presets["fidelity"] = fid;
    return c;
}

// Missing keys keep their defaults. Relative content/data dirs resolve against base_dir.
inline AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    AppConfig c = default_config();
    if (j.contains("plant")) c.plant = j["plant"].get<plant::PlantParams>();
    c.k_ss = j.value("k_ss", c.k_ss);
    c.segments = j.value("segments", c.segments);
    if (j.contains("presets"))
        for (auto& [name, pj] : j["presets"].items()) {
            Preset p;
            if (pj.contains("chirp")) p.chirp = pj["chirp"].get<plant::ChirpConfig>();
            if (pj.contains("noise")) p.noise = pj["noise"].get<plant::NoiseConfig>();
            plant::validate(p.chirp);
            c.presets[name] = p;
        }
    if (j.contains("server")) {
        const auto& s = j["server"];
        auto& o = c.server;
        o.host = s.value("host", o.host);
        o.port = s.value("port", o.port);
        o.data_dir = s.value("data_dir", o.data_dir);
        o.content_dir = s.value("content_dir", o.content_dir);
        o.block_s = s.value("block_s", o.block_s);
        o.cooldown_s = s.value("cooldown_s", o.cooldown_s);
        o.slot_s = s.value("slot_s", o.slot_s);
        o.day_start_s = s.value("day_start_s", o.day_start_s);
        o.day_end_s = s.value("day_end_s", o.day_end_s);
        o.decimation = s.value("decimation", o.decimation);
        o.backfill_s = s.value("backfill_s", o.backfill_s);
        o.queue_frames = s.value("queue_frames", o.queue_frames);
        o.realtime_factor = s.value("realtime_factor", o.realtime_factor);
        o.default_phi_d = s.value("default_phi_d", o.default_phi_d);
        o.preset = s.value("preset", o.preset);
    }
    plant::validate(c.plant);
    require(c.k_ss > 0, "config: k_ss must be > 0");
    require(c.segments >= 2, "config: segments must be >= 2");
    require(c.server.decimation >= 1, "config: decimation must be >= 1");
    require(c.server.port >= 0 && c.server.port <= 65535, "config: port out of range");
    c.preset(c.server.preset);
    if (!base_dir.empty()) {
        auto resolve = [&](std::string& p) {
            if (std::filesystem::path(p).is_relative()) p = (base_dir / p).lexically_normal().string();
        };
        resolve(c.server.data_dir);
        resolve(c.server.content_dir);
    }
    return c;
}

inline void apply_env_overrides(AppConfig& c) {
    if (const char* p = std::getenv("CLAB_PORT")) {
        char* end = nullptr;
        long v = std::strtol(p, &end, 10);
        require(*p && end && *end == '\0' && v >= 0 && v <= 65535, std::string("CLAB_PORT is not a port number: ") + p);
        c.server.port = static_cast<int>(v);
    }
    if (const char* d = std::getenv("CLAB_DATA_DIR"); d && *d) c.server.data_dir = d;
}

inline AppConfig load_config(const std::string& path) {
    auto j = nlohmann::json::parse(plant::read_file(path), nullptr, false);
    require(!j.is_discarded(), "config: '" + path + "' is not valid JSON");
    AppConfig c = config_from_json(j, std::filesystem::path(path).parent_path());
    apply_env_overrides(c);
    return c;
}

} // namespace clab
