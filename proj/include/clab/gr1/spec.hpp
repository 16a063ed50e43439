#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "clab/core/error.hpp"
#include "clab/gr1/expr.hpp"

namespace clab::gr1 {

enum class Owner { environment, system };

enum class Category { sh_ask, h_input, sc_check, c_verdict, sm_trigger, m_report, s_self };

inline const char* to_string(Category c) {
    switch (c) {
    case Category::sh_ask: return "s-h";
    case Category::h_input: return "h";
    case Category::sc_check: return "s-c";
    case Category::c_verdict: return "c";
    case Category::sm_trigger: return "s-m";
    case Category::m_report: return "m";
    case Category::s_self: return "s";
    }
    return "?";
}

inline Owner owner_of(Category c) {
    switch (c) {
    case Category::h_input:
    case Category::c_verdict:
    case Category::m_report: return Owner::environment;
    default: return Owner::system;
    }
}

struct AtomicProposition {
    std::string name;
    Owner owner;
    Category category;
};

struct NamedPredicate {
    std::string name;
    std::string description;
    ExprPtr expr;
};

struct GameSpec {
    std::vector<AtomicProposition> vars;  // bit i of a Valuation is vars[i]
    std::vector<NamedPredicate> env_safety;
    std::vector<NamedPredicate> env_liveness;  // state predicates, read through nxt()
    std::vector<NamedPredicate> sys_safety;
    std::vector<NamedPredicate> sys_liveness;
    std::vector<std::string> question_chain;
    std::vector<std::pair<std::string, std::string>> prerequisites;  // (before, after)
    Valuation initial = 0;

    int index(const std::string& name) const {
        for (std::size_t i = 0; i < vars.size(); ++i)
            if (vars[i].name == name) return static_cast<int>(i);
        throw Error(ErrorCode::invalid_argument, "unknown atomic proposition '" + name + "'");
    }
    bool has(const std::string& name) const {
        return std::any_of(vars.begin(), vars.end(), [&](const auto& v) { return v.name == name; });
    }
    Valuation bit(const std::string& name) const { return Valuation{1} << index(name); }

    Valuation mask(Owner o) const {
        Valuation m = 0;
        for (std::size_t i = 0; i < vars.size(); ++i)
            if (vars[i].owner == o) m |= Valuation{1} << i;
        return m;
    }
    Valuation env_mask() const { return mask(Owner::environment); }
    Valuation sys_mask() const { return mask(Owner::system); }

    std::vector<std::string> names() const {
        std::vector<std::string> n;
        for (const auto& v : vars) n.push_back(v.name);
        return n;
    }
    std::vector<int> indices(Owner o) const {
        std::vector<int> out;
        for (std::size_t i = 0; i < vars.size(); ++i)
            if (vars[i].owner == o) out.push_back(static_cast<int>(i));
        return out;
    }
    std::size_t count(Owner o) const { return indices(o).size(); }

    std::vector<std::string> true_names(Valuation v, Valuation m = ~Valuation{0}) const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < vars.size(); ++i)
            if ((v & m) >> i & 1) out.push_back(vars[i].name);
        return out;
    }
    Valuation from_names(const std::vector<std::string>& ns) const {
        Valuation v = 0;
        for (const auto& n : ns) v |= bit(n);
        return v;
    }
};

// Checks declared-AP references and that environment predicates never read the next system move.
inline void validate(const GameSpec& s) {
    require(!s.vars.empty() && s.vars.size() <= 64, "spec: between 1 and 64 atomic propositions required");
    std::set<std::string> seen;
    for (const auto& v : s.vars) {
        require(seen.insert(v.name).second, "spec: duplicate atomic proposition '" + v.name + "'");
        require(owner_of(v.category) == v.owner, "spec: category/owner mismatch for '" + v.name + "'");
    }
    Valuation declared = s.vars.size() == 64 ? ~Valuation{0} : ((Valuation{1} << s.vars.size()) - 1);
    Valuation sys = s.sys_mask();
    auto check = [&](const std::vector<NamedPredicate>& ps, bool env_side) {
        for (const auto& p : ps) {
            require(p.expr.get() != nullptr, "spec: predicate '" + p.name + "' has no formula");
            Valuation c = 0, n = 0;
            support(*p.expr, c, n);
            require(((c | n) & ~declared) == 0, "spec: predicate '" + p.name + "' references an undeclared AP");
            if (env_side) require((n & sys) == 0, "spec: environment predicate '" + p.name + "' reads the next system move");
        }
    };
    check(s.env_safety, true);
    check(s.env_liveness, true);
    check(s.sys_safety, false);
    check(s.sys_liveness, false);
}

namespace detail {

inline bool reserved_name(const std::string& q) {
    static const std::set<std::string> r{"exp", "reset", "true", "false", "result", "error", "h", "m", "c"};
    return r.count(q) > 0;
}

inline bool identifier(const std::string& q) {
    if (q.empty()) return false;
    return std::all_of(q.begin(), q.end(), [](char ch) { return (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_'; });
}

} // namespace detail

// Interaction spec for an ordered question chain. `extra_prerequisites` are (before, after) edges on top
// of the chain; any edge pointing backwards closes a cycle and is rejected.
inline GameSpec build_spec(const std::vector<std::string>& questions, const std::string& final_var,
                           const std::vector<std::pair<std::string, std::string>>& extra_prerequisites = {}) {
    require(!questions.empty(), "build_spec: question list is empty");
    require(questions.back() == final_var, "build_spec: final_var must be the last question");
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        const auto& q = questions[i];
        require(detail::identifier(q), "build_spec: '" + q + "' is not a lowercase identifier");
        require(!detail::reserved_name(q), "build_spec: '" + q + "' is a reserved name");
        require(pos.emplace(q, i).second, "build_spec: duplicate variable '" + q + "'");
    }
    require(questions.size() * 3 + 7 + questions.size() + 6 <= 64, "build_spec: too many questions for a 64-bit valuation");

    GameSpec s;
    s.question_chain = questions;
    for (std::size_t i = 0; i + 1 < questions.size(); ++i) s.prerequisites.emplace_back(questions[i], questions[i + 1]);
    for (const auto& [a, b] : extra_prerequisites) {
        require(pos.count(a) && pos.count(b), "build_spec: prerequisite edge references an unknown variable");
        if (pos[a] >= pos[b])
            throw Error(ErrorCode::invalid_argument,
                        "build_spec: prerequisite " + a + " -> " + b + " makes the question chain cyclic");
        s.prerequisites.emplace_back(a, b);
    }

    auto add = [&](const std::string& n, Category c) {
        s.vars.push_back({n, owner_of(c), c});
        return static_cast<int>(s.vars.size() - 1);
    };
    const std::size_t n = questions.size();
    std::vector<int> h(n), sh(n), sc(n), sv(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = add("h_" + questions[i], Category::h_input);
    int h_exp = add("h_exp", Category::h_input), h_reset = add("h_reset", Category::h_input);
    int c_true = add("c_true", Category::c_verdict), c_false = add("c_false", Category::c_verdict);
    int m_result = add("m_result", Category::m_report), m_error = add("m_error", Category::m_report);
    for (std::size_t i = 0; i < n; ++i) sh[i] = add("sh_" + questions[i], Category::sh_ask);
    int sh_exp = add("sh_exp", Category::sh_ask), sh_reset = add("sh_reset", Category::sh_ask);
    for (std::size_t i = 0; i < n; ++i) sc[i] = add("sc_" + questions[i], Category::sc_check);
    int sm_exp = add("sm_exp", Category::sm_trigger);
    int s_h = add("s_h", Category::s_self), s_m = add("s_m", Category::s_self), s_c = add("s_c", Category::s_self);
    for (std::size_t i = 0; i < n; ++i) sv[i] = add("s_" + questions[i], Category::s_self);
    int s_result = add("s_result", Category::s_self);

    std::vector<ExprPtr> env_next, sc_cur, sc_next;
    for (int i : s.indices(Owner::environment)) env_next.push_back(nxt(i));
    for (int i : sc) {
        sc_cur.push_back(cur(i));
        sc_next.push_back(nxt(i));
    }

    auto env = [&](std::string name, std::string desc, ExprPtr e) { s.env_safety.push_back({std::move(name), std::move(desc), std::move(e)}); };
    env("Safety Assumption 1", "more than one environment action in a step", at_most_one(env_next));
    {
        std::vector<ExprPtr> parts;
        for (std::size_t i = 0; i < n; ++i) parts.push_back(implies(!cur(sh[i]), !nxt(h[i])));
        env("Safety Assumption 2", "value entered before requested", all_of(parts));
    }
    env("Safety Assumption 3", "experiment requested before offered", implies(!cur(sh_exp), !nxt(h_exp)));
    env("Safety Assumption 4", "reset entered before offered", implies(!cur(sh_reset), !nxt(h_reset)));
    env("Safety Assumption 5", "machine report must answer exactly a trigger", iff(cur(sm_exp), nxt(m_result) || nxt(m_error)));
    env("Safety Assumption 6", "check request must be answered with a verdict", implies(any_of(sc_cur), nxt(c_true) || nxt(c_false)));

    for (int i : s.indices(Owner::environment))
        s.env_liveness.push_back({"Liveness Assumption 1[" + s.vars[static_cast<std::size_t>(i)].name + "]",
                                  "environment action recurs", nxt(i)});

    auto req = [&](std::string name, std::string desc, ExprPtr e) { s.sys_safety.push_back({std::move(name), std::move(desc), std::move(e)}); };
    for (std::size_t i = 0; i < n; ++i) {
        ExprPtr cond = !nxt(sv[i]) && nxt(s_h);
        if (i > 0) cond = cond && nxt(sv[i - 1]);
        req("Safety Requirement 1[" + questions[i] + "]", "ask a question iff its prerequisite holds and it is unanswered",
            iff(nxt(sh[i]), cond));
    }
    req("Safety Requirement 2", "offer the experiment iff the final value holds", iff(nxt(sh_exp), nxt(sv[n - 1]) && nxt(s_h)));
    req("Safety Requirement 3", "offer reset iff in human mode", iff(nxt(sh_reset), nxt(s_h)));
    for (std::size_t i = 0; i < n; ++i)
        req("Safety Requirement 4[" + questions[i] + "]", "check a value iff it was just entered", iff(nxt(h[i]), nxt(sc[i])));
    req("Safety Requirement 5", "trigger the experiment iff requested", iff(nxt(h_exp), nxt(sm_exp)));
    req("Safety Requirement 6[m]", "machine mode iff triggering", iff(nxt(s_m), nxt(sm_exp)));
    req("Safety Requirement 6[c]", "computation mode iff checking", iff(nxt(s_c), any_of(sc_next)));
    req("Safety Requirement 6[h]", "human mode iff neither machine nor computation", iff(nxt(s_h), !nxt(s_m) && !nxt(s_c)));
    for (std::size_t i = 0; i < n; ++i) {
        ExprPtr keep = (cur(sv[i]) || nxt(h[i])) && (!cur(sc[i]) || !nxt(c_false)) && !nxt(m_error) && !nxt(h_reset);
        req("Safety Requirement 7[" + questions[i] + "]", "hold a value until rejected, reset, or machine error", iff(keep, nxt(sv[i])));
    }
    req("Safety Requirement 8", "hold the result until reset",
        iff((cur(s_result) || nxt(m_result)) && !nxt(h_reset), nxt(s_result)));

    s.initial = (Valuation{1} << s_h) | (Valuation{1} << sh_reset) | (Valuation{1} << sh[0]);
    validate(s);
    return s;
}

// Depth-first enumeration of the free bits in `free` (in index order) that keep every predicate
// possibly true; complete assignments that satisfy all predicates are passed to `emit`.
inline void enumerate(const std::vector<NamedPredicate>& preds, Assignment a, const std::vector<int>& free, std::size_t at,
                      const std::function<void(Valuation)>& emit) {
    for (const auto& p : preds)
        if (eval3(*p.expr, a) == Tri::F) return;
    if (at == free.size()) {
        emit(a.nxt);
        return;
    }
    Valuation bit = Valuation{1} << free[at];
    a.nxt_known |= bit;
    a.nxt &= ~bit;
    enumerate(preds, a, free, at + 1, emit);
    a.nxt |= bit;
    enumerate(preds, a, free, at + 1, emit);
}

// Environment moves allowed by env_safety from the full valuation `c` (returned as env bits only).
inline std::vector<Valuation> admissible_inputs(const GameSpec& s, Valuation c) {
    Assignment a;
    a.cur = c;
    a.nxt = 0;
    a.nxt_known = 0;
    std::vector<Valuation> out;
    enumerate(s.env_safety, a, s.indices(Owner::environment), 0, [&](Valuation v) { out.push_back(v); });
    return out;
}

// System responses (sys bits only) satisfying sys_safety from `c` after env move `e`.
inline std::vector<Valuation> system_responses(const GameSpec& s, Valuation c, Valuation e) {
    Assignment a;
    a.cur = c;
    a.nxt = e & s.env_mask();
    a.nxt_known = s.env_mask();
    std::vector<Valuation> out;
    Valuation env = s.env_mask();
    // Requests and modes first, asks last: asks depend on held values, so pruning kicks in early.
    auto order = s.indices(Owner::system);
    auto rank = [&](int i) {
        switch (s.vars[static_cast<std::size_t>(i)].category) {
        case Category::sc_check:
        case Category::sm_trigger: return 0;
        case Category::s_self: return 1;
        default: return 2;
        }
    };
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return rank(x) < rank(y); });
    enumerate(s.sys_safety, a, order, 0, [&](Valuation v) { out.push_back(v & ~env); });
    return out;
}

inline const NamedPredicate* first_violated(const std::vector<NamedPredicate>& ps, Valuation c, Valuation n) {
    for (const auto& p : ps)
        if (!eval(*p.expr, c, n)) return &p;
    return nullptr;
}

// Human-readable mode of a system valuation.
inline std::string mode_of(const GameSpec& s, Valuation v) {
    auto on = [&](const std::string& n) { return s.has(n) && (v & s.bit(n)); };
    if (on("s_m")) return "running";
    for (const auto& q : s.question_chain)
        if (on("sc_" + q)) return "checking:" + q;
    if (on("s_result") && on("s_h")) return "done";
    for (const auto& q : s.question_chain)
        if (on("sh_" + q)) return "asking:" + q;
    if (on("sh_exp")) return "asking:exp";
    return "idle";
}

inline std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string canonical_text(const GameSpec& s) {
    auto names = s.names();
    std::string t = "vars:";
    for (const auto& v : s.vars) t += v.name + (v.owner == Owner::environment ? "/e," : "/s,");
    auto dump = [&](const char* tag, const std::vector<NamedPredicate>& ps) {
        t += tag;
        for (const auto& p : ps) t += p.name + "=" + to_string(*p.expr, names) + ";";
    };
    dump("\nenv_safety:", s.env_safety);
    dump("\nenv_liveness:", s.env_liveness);
    dump("\nsys_safety:", s.sys_safety);
    dump("\nsys_liveness:", s.sys_liveness);
    t += "\ninitial:" + std::to_string(s.initial);
    return t;
}

inline std::string spec_hash(const GameSpec& s) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_text(s))));
    return buf;
}

} // namespace clab::gr1
