#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "clab/core/error.hpp"

namespace clab::lab {

namespace fs = std::filesystem;

// JSON documents in a directory; writes go through a temp file and rename.
class JsonStore {
public:
    explicit JsonStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    const fs::path& dir() const { return dir_; }

    std::optional<nlohmann::json> read(const std::string& name) const {
        std::lock_guard lk(mu_);
        fs::path p = dir_ / name;
        if (!fs::exists(p)) return std::nullopt;
        std::ifstream in(p);
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::invalid_argument, "store: corrupt document " + p.string() + ": " + e.what());
        }
    }

    void write(const std::string& name, const nlohmann::json& doc) const {
        std::lock_guard lk(mu_);
        fs::path p = dir_ / name;
        fs::create_directories(p.parent_path());
        fs::path tmp = p;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << doc.dump(2) << "\n";
            if (!out) throw Error(ErrorCode::invalid_argument, "store: cannot write " + tmp.string());
        }
        fs::rename(tmp, p);
    }

private:
    fs::path dir_;
    mutable std::mutex mu_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json_file(const fs::path& p) {
    try {
        return nlohmann::json::parse(slurp(p));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_argument, "invalid JSON in " + p.string() + ": " + e.what());
    }
}

} // namespace clab::lab
