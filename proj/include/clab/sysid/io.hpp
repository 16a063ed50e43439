#pragma once

#include <cstdio>
#include <sstream>
#include <string>

#include "json.hpp"

#include "clab/plant/io.hpp"
#include "clab/sysid/bode.hpp"

namespace clab::sysid {

using nlohmann::json;

inline std::string bode_csv(const BodeData& b) {
    std::string out = "omega_rad_s,mag_db,phase_deg\n";
    for (std::size_t i = 0; i < b.size(); ++i)
        out += plant::fmt_g9(b.omega[i]) + ',' + plant::fmt_g9(b.mag_db[i]) + ',' + plant::fmt_g9(b.phase_deg[i]) + '\n';
    return out;
}

inline json bode_metadata(const BodeData& b) {
    return json{{"source", to_string(b.source)}, {"segments", b.segments}, {"dropped", b.dropped}, {"points", b.size()}};
}

inline BodeData parse_bode(const std::string& csv, const json& meta = json::object()) {
    BodeData b;
    b.source = bode_source_from_string(meta.value("source", std::string("piecewise_fft")));
    b.segments = meta.value("segments", 0);
    b.dropped = meta.value("dropped", 0);
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line.rfind("omega_rad_s,mag_db,phase_deg", 0) != 0)
        throw Error(ErrorCode::invalid_argument, "bode csv: missing 'omega_rad_s,mag_db,phase_deg' header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        double w, m, p;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &w, &m, &p) != 3)
            throw Error(ErrorCode::invalid_argument, "bode csv: bad row at line " + std::to_string(lineno));
        b.omega.push_back(w);
        b.mag_db.push_back(m);
        b.phase_deg.push_back(p);
    }
    validate(b);
    return b;
}

inline void save_bode(const BodeData& b, const std::string& csv_path) {
    plant::write_file(csv_path, bode_csv(b));
    plant::write_file(plant::sidecar_path(csv_path), bode_metadata(b).dump(2) + "\n");
}

inline BodeData load_bode(const std::string& csv_path) {
    json meta = json::object();
    try {
        meta = json::parse(plant::read_file(plant::sidecar_path(csv_path)));
    } catch (const Error&) {
        // metadata is optional for hand-made CSVs
    }
    return parse_bode(plant::read_file(csv_path), meta);
}

} // namespace clab::sysid
