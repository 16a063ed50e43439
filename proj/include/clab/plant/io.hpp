#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "clab/plant/experiment.hpp"

namespace clab::plant {

using nlohmann::json;

inline void to_json(json& j, const PlantParams& p) {
    j = json{{"m_k", p.m_k}, {"b_eff", p.b_eff}, {"k_s", p.k_s}, {"beta", p.beta}, {"loop_delay", p.loop_delay}, {"f_s", p.f_s}};
}
inline void from_json(const json& j, PlantParams& p) {
    PlantParams d;
    p.m_k = j.value("m_k", d.m_k);
    p.b_eff = j.value("b_eff", d.b_eff);
    p.k_s = j.value("k_s", d.k_s);
    p.beta = j.value("beta", d.beta);
    p.loop_delay = j.value("loop_delay", d.loop_delay);
    p.f_s = j.value("f_s", d.f_s);
}

inline void to_json(json& j, const ChirpConfig& c) {
    j = json{{"u_a", c.u_a}, {"u_b", c.u_b}, {"omega_0", c.omega_0}, {"omega_1", c.omega_1}, {"t_0", c.t_0}, {"t_f", c.t_f}};
}
inline void from_json(const json& j, ChirpConfig& c) {
    ChirpConfig d;
    c.u_a = j.value("u_a", d.u_a);
    c.u_b = j.value("u_b", d.u_b);
    c.omega_0 = j.value("omega_0", d.omega_0);
    c.omega_1 = j.value("omega_1", d.omega_1);
    c.t_0 = j.value("t_0", d.t_0);
    c.t_f = j.value("t_f", d.t_f);
}

inline void to_json(json& j, const NoiseConfig& n) { j = json{{"sigma_f", n.sigma_f}, {"seed", n.seed}}; }
inline void from_json(const json& j, NoiseConfig& n) {
    NoiseConfig d;
    n.sigma_f = j.value("sigma_f", d.sigma_f);
    n.seed = j.value("seed", d.seed);
}

inline void to_json(json& j, const TransferFunction& tf) { j = json{{"numerator", tf.numerator}, {"denominator", tf.denominator}}; }
inline void from_json(const json& j, TransferFunction& tf) {
    j.at("numerator").get_to(tf.numerator);
    j.at("denominator").get_to(tf.denominator);
}

inline std::string fmt_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string record_csv(const ExperimentRecord& r) {
    std::string out = "t,u,f\n";
    out.reserve(r.size() * 36);
    for (std::size_t i = 0; i < r.size(); ++i) {
        out += fmt_g9(r.t[i]);
        out += ',';
        out += fmt_g9(r.u[i]);
        out += ',';
        out += fmt_g9(r.f[i]);
        out += '\n';
    }
    return out;
}

inline json record_metadata(const ExperimentRecord& r) {
    json j{{"kind", to_string(r.kind)}, {"f_s", r.f_s}, {"samples", r.size()},
           {"params", r.params}, {"chirp", r.chirp}, {"noise", r.noise}};
    if (r.controller) j["controller"] = json{{"lead", r.controller->lead}, {"k_ss", r.controller->k_ss}};
    return j;
}

// Inverse of record_csv + record_metadata.
inline ExperimentRecord parse_record(const std::string& csv, const json& meta) {
    ExperimentRecord r;
    r.kind = record_kind_from_string(meta.at("kind").get<std::string>());
    r.params = meta.at("params").get<PlantParams>();
    r.chirp = meta.at("chirp").get<ChirpConfig>();
    r.noise = meta.value("noise", json::object()).get<NoiseConfig>();
    r.f_s = meta.value("f_s", r.params.f_s);
    if (meta.contains("controller"))
        r.controller = ControllerInfo{meta["controller"].at("lead").get<TransferFunction>(), meta["controller"].at("k_ss").get<double>()};
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,u,f", 0) != 0)
        throw Error(ErrorCode::invalid_argument, "record csv: missing 't,u,f' header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        double a, b, c;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &a, &b, &c) != 3)
            throw Error(ErrorCode::invalid_argument, "record csv: bad row at line " + std::to_string(lineno));
        r.t.push_back(a);
        r.u.push_back(b);
        r.f.push_back(c);
    }
    validate(r);
    return r;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::invalid_argument, "cannot write '" + path + "'");
    out << data;
    if (!out) throw Error(ErrorCode::invalid_argument, "write failed for '" + path + "'");
}

inline std::string sidecar_path(const std::string& csv_path) { return csv_path + ".json"; }

inline void save_record(const ExperimentRecord& r, const std::string& csv_path) {
    write_file(csv_path, record_csv(r));
    write_file(sidecar_path(csv_path), record_metadata(r).dump(2) + "\n");
}

inline ExperimentRecord load_record(const std::string& csv_path) {
    return parse_record(read_file(csv_path), json::parse(read_file(sidecar_path(csv_path))));
}

} // namespace clab::plant
