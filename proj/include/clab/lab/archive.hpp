#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "clab/lab/store.hpp"

namespace clab::lab {

// Write-once archive directories: <root>/<id>/meta.json plus data files.
class ArchiveStore {
public:
    explicit ArchiveStore(fs::path root) : root_(std::move(root)) {
        fs::create_directories(root_);
        for (const auto& e : fs::directory_iterator(root_)) {
            auto name = e.path().filename().string();
            if (e.is_directory() && name.rfind("arc-", 0) == 0) {
                try {
                    next_ = std::max(next_, std::stoi(name.substr(4)) + 1);
                } catch (const std::exception&) {
                }
            }
        }
    }

    const fs::path& root() const { return root_; }

    // files: name -> bytes. meta gets "archive_id" and "files" filled in.
    std::string create(nlohmann::json meta, const std::map<std::string, std::string>& files) {
        for (const auto& [name, bytes] : files)
            require(valid_name(name) && name != "meta.json", "archive: bad file name '" + name + "'");
        std::lock_guard lk(mu_);
        std::string id = "arc-" + std::to_string(next_++);
        fs::path dir = root_ / id;
        fs::path tmp = root_ / (id + ".partial");
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        meta["archive_id"] = id;
        nlohmann::json names = nlohmann::json::array();
        for (const auto& [name, bytes] : files) {
            std::ofstream out(tmp / name, std::ios::binary);
            out << bytes;
            if (!out) throw Error(ErrorCode::invalid_argument, "archive: cannot write " + name);
            names.push_back(name);
        }
        meta["files"] = names;
        {
            std::ofstream out(tmp / "meta.json", std::ios::binary);
            out << meta.dump(2) << "\n";
        }
        if (fs::exists(dir)) throw Error(ErrorCode::conflict, "archive: " + id + " already exists");
        fs::rename(tmp, dir);
        return id;
    }

    bool exists(const std::string& id) const { return valid_name(id) && fs::is_directory(root_ / id); }

    std::string read(const std::string& id, const std::string& file) const {
        if (!exists(id)) throw Error(ErrorCode::not_found, "archive: no archive '" + id + "'");
        if (!valid_name(file) || !fs::exists(root_ / id / file))
            throw Error(ErrorCode::not_found, "archive: " + id + " has no file '" + file + "'");
        return slurp(root_ / id / file);
    }

    nlohmann::json meta(const std::string& id) const { return nlohmann::json::parse(read(id, "meta.json")); }

    std::vector<std::string> ids() const {
        std::vector<std::pair<int, std::string>> v;
        for (const auto& e : fs::directory_iterator(root_)) {
            auto name = e.path().filename().string();
            if (e.is_directory() && name.rfind("arc-", 0) == 0 && name.find('.') == std::string::npos)
                v.emplace_back(std::stoi(name.substr(4)), name);
        }
        std::sort(v.begin(), v.end());
        std::vector<std::string> out;
        for (auto& [n, s] : v) out.push_back(s);
        return out;
    }

private:
    static bool valid_name(const std::string& s) {
        if (s.empty() || s.size() > 64 || s[0] == '.') return false;
        for (char c : s)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
        return true;
    }

    fs::path root_;
    int next_ = 1;
    std::mutex mu_;
};

} // namespace clab::lab
