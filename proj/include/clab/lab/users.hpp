#pragma once

#include <map>
#include <mutex>
#include <random>
#include <string>

#include "json.hpp"

#include "clab/core/error.hpp"

namespace clab::lab {

struct UserRecord {
    std::string id;
    std::string display_name;
    std::string password;
};

struct UserSession {
    std::string user_id;
    std::string display_name;
    std::string auth_token;
    int active_login_count = 0;
};

// Local user file plus in-memory bearer tokens. Several tokens per user are fine.
class UserDirectory {
public:
    explicit UserDirectory(const nlohmann::json& doc) {
        for (const auto& u : doc.at("users")) {
            UserRecord r{u.at("id").get<std::string>(), u.value("display_name", u.at("id").get<std::string>()),
                         u.value("password", "")};
            require(users_.emplace(r.id, r).second, "users: duplicate id '" + r.id + "'");
        }
    }

    UserSession login(const std::string& id, const std::string& password) {
        std::lock_guard lk(mu_);
        auto it = users_.find(id);
        if (it == users_.end() || it->second.password != password)
            throw Error(ErrorCode::unauthorized, "login: unknown user or wrong password");
        std::string token = new_token();
        tokens_[token] = id;
        int count = ++logins_[id];
        return {id, it->second.display_name, token, count};
    }

    std::string authenticate(const std::string& token) const {
        std::lock_guard lk(mu_);
        auto it = tokens_.find(token);
        if (it == tokens_.end()) throw Error(ErrorCode::unauthorized, "missing or unknown bearer token");
        return it->second;
    }

    std::string display_name(const std::string& id) const {
        auto it = users_.find(id);
        return it == users_.end() ? id : it->second.display_name;
    }

    int active_logins(const std::string& id) const {
        std::lock_guard lk(mu_);
        auto it = logins_.find(id);
        return it == logins_.end() ? 0 : it->second;
    }

private:
    std::string new_token() {
        static const char* hex = "0123456789abcdef";
        std::string t;
        for (int i = 0; i < 32; ++i) t += hex[rng_() & 15];
        return t;
    }

    std::map<std::string, UserRecord> users_;
    std::map<std::string, std::string> tokens_;
    std::map<std::string, int> logins_;
    std::mt19937_64 rng_{std::random_device{}()};
    mutable std::mutex mu_;
};

} // namespace clab::lab
