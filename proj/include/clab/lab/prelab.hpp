#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "clab/lab/store.hpp"

namespace clab::lab {

enum class PrelabKind { exact_free_response, range_free_response, multiple_choice };

inline PrelabKind prelab_kind_from_string(const std::string& s) {
    if (s == "exact_free_response") return PrelabKind::exact_free_response;
    if (s == "range_free_response") return PrelabKind::range_free_response;
    if (s == "multiple_choice") return PrelabKind::multiple_choice;
    throw Error(ErrorCode::invalid_argument, "prelab: unknown question kind '" + s + "'");
}

struct PrelabQuestion {
    std::string id;
    std::string experiment;
    std::string prompt;
    std::string image;
    PrelabKind kind = PrelabKind::exact_free_response;
    nlohmann::json answer;  // exact: value(+tolerance) ; range: lo, hi ; choice: correct option index
    std::vector<std::string> options;
    std::string hint;
};

inline std::vector<PrelabQuestion> parse_prelab(const nlohmann::json& doc) {
    std::vector<PrelabQuestion> out;
    std::string exp = doc.at("experiment").get<std::string>();
    std::set<std::string> ids;
    for (const auto& q : doc.at("questions")) {
        PrelabQuestion p;
        p.id = q.at("id").get<std::string>();
        p.experiment = exp;
        p.prompt = q.value("prompt", "");
        p.image = q.value("image", "");
        p.kind = prelab_kind_from_string(q.at("kind").get<std::string>());
        p.answer = q.at("answer");
        p.options = q.value("options", std::vector<std::string>{});
        p.hint = q.value("hint", "");
        require(ids.insert(p.id).second, "prelab: duplicate question id '" + p.id + "'");
        switch (p.kind) {
        case PrelabKind::exact_free_response:
            require(p.answer.contains("value"), "prelab: exact question '" + p.id + "' needs answer.value");
            break;
        case PrelabKind::range_free_response:
            require(p.answer.contains("lo") && p.answer.contains("hi") && p.answer["lo"].get<double>() <= p.answer["hi"].get<double>(),
                    "prelab: range question '" + p.id + "' needs answer.lo <= answer.hi");
            break;
        case PrelabKind::multiple_choice: {
            int c = p.answer.value("correct", -1);
            require(c >= 0 && c < static_cast<int>(p.options.size()), "prelab: choice question '" + p.id + "' has no valid correct option");
            break;
        }
        }
        out.push_back(std::move(p));
    }
    return out;
}

namespace detail {

inline std::string lower_trim(std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline bool as_number(const nlohmann::json& j, double& out) {
    if (j.is_number()) {
        out = j.get<double>();
        return true;
    }
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        char* end = nullptr;
        out = std::strtod(s.c_str(), &end);
        return !s.empty() && end && *end == '\0';
    }
    return false;
}

} // namespace detail

inline bool grade_prelab(const PrelabQuestion& q, const nlohmann::json& answer) {
    double x = 0;
    switch (q.kind) {
    case PrelabKind::exact_free_response: {
        const auto& v = q.answer["value"];
        if (v.is_string()) return answer.is_string() && detail::lower_trim(answer.get<std::string>()) == detail::lower_trim(v.get<std::string>());
        if (!detail::as_number(answer, x)) return false;
        return std::abs(x - v.get<double>()) <= q.answer.value("tolerance", 1e-9);
    }
    case PrelabKind::range_free_response:
        if (!detail::as_number(answer, x)) return false;
        return x >= q.answer["lo"].get<double>() && x <= q.answer["hi"].get<double>();
    case PrelabKind::multiple_choice: {
        int c = q.answer["correct"].get<int>();
        if (answer.is_number_integer()) return answer.get<int>() == c;
        if (answer.is_string()) return detail::lower_trim(answer.get<std::string>()) == detail::lower_trim(q.options[static_cast<std::size_t>(c)]);
        return false;
    }
    }
    return false;
}

struct PrelabVerdict {
    bool correct = false;
    std::string hint;
    bool completed = false;  // whole prelab for the experiment
};

// Per-user progress, persisted as one document.
class PrelabBook {
public:
    PrelabBook(std::map<std::string, std::vector<PrelabQuestion>> catalogs, const JsonStore* store)
        : catalogs_(std::move(catalogs)), store_(store) {
        if (store_)
            if (auto doc = store_->read("prelab_progress.json"))
                for (auto& [user, exps] : doc->items())
                    for (auto& [exp, ids] : exps.items()) progress_[user][exp] = ids.get<std::set<std::string>>();
    }

    const std::vector<PrelabQuestion>& questions(const std::string& exp) const {
        auto it = catalogs_.find(exp);
        if (it == catalogs_.end()) throw Error(ErrorCode::not_found, "no prelab for experiment '" + exp + "'");
        return it->second;
    }

    std::set<std::string> completed_ids(const std::string& user, const std::string& exp) const {
        std::lock_guard lk(mu_);
        auto u = progress_.find(user);
        if (u == progress_.end()) return {};
        auto e = u->second.find(exp);
        return e == u->second.end() ? std::set<std::string>{} : e->second;
    }

    bool complete(const std::string& user, const std::string& exp) const {
        auto done = completed_ids(user, exp);
        for (const auto& q : questions(exp))
            if (!done.count(q.id)) return false;
        return true;
    }

    PrelabVerdict submit(const std::string& user, const std::string& exp, const std::string& qid, const nlohmann::json& answer) {
        const auto& qs = questions(exp);
        auto it = std::find_if(qs.begin(), qs.end(), [&](const auto& q) { return q.id == qid; });
        if (it == qs.end()) throw Error(ErrorCode::not_found, "unknown prelab question '" + qid + "'");
        auto done = completed_ids(user, exp);
        for (auto p = qs.begin(); p != it; ++p)
            if (!done.count(p->id))
                throw Error(ErrorCode::protocol_violation, "prelab: answer '" + p->id + "' before '" + qid + "'");
        PrelabVerdict v;
        v.correct = grade_prelab(*it, answer);
        if (!v.correct) v.hint = it->hint;
        if (v.correct && !done.count(qid)) {
            std::lock_guard lk(mu_);
            progress_[user][exp].insert(qid);
            persist();
        }
        v.completed = complete(user, exp);
        return v;
    }

private:
    void persist() const {
        if (!store_) return;
        nlohmann::json doc = nlohmann::json::object();
        for (const auto& [user, exps] : progress_)
            for (const auto& [exp, ids] : exps) doc[user][exp] = ids;
        store_->write("prelab_progress.json", doc);
    }

    std::map<std::string, std::vector<PrelabQuestion>> catalogs_;
    std::map<std::string, std::map<std::string, std::set<std::string>>> progress_;
    const JsonStore* store_;
    mutable std::mutex mu_;
};

} // namespace clab::lab
