#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "clab/gr1/spec.hpp"

namespace clab::gr1 {

struct Transition {
    Valuation input = 0;   // environment bits of the next valuation
    Valuation output = 0;  // system bits of the next valuation
    int next = -1;
};

struct StrategyState {
    Valuation valuation = 0;  // system bits carried by this state
    std::string mode;
    std::vector<Transition> transitions;

    const Transition* find(Valuation input) const {
        for (const auto& t : transitions)
            if (t.input == input) return &t;
        return nullptr;
    }
};

// Deterministic Mealy machine over the APs of the spec it was synthesized from.
struct Strategy {
    std::vector<std::string> vars;
    Valuation env_mask = 0;
    int initial = 0;
    std::vector<StrategyState> states;
    std::size_t raw_states = 0;  // before bisimulation quotient
    std::size_t arena_states = 0;
    std::string spec_hash;

    std::size_t transition_count() const {
        std::size_t n = 0;
        for (const auto& s : states) n += s.transitions.size();
        return n;
    }
};

// Quotient by Mealy bisimulation, starting from a partition by system valuation.
inline Strategy minimize(const Strategy& in) {
    const std::size_t n = in.states.size();
    std::vector<int> block(n);
    {
        std::map<Valuation, int> ids;
        for (std::size_t i = 0; i < n; ++i) {
            auto [it, _] = ids.emplace(in.states[i].valuation, static_cast<int>(ids.size()));
            block[i] = it->second;
        }
    }
    std::size_t blocks = 0;
    while (true) {
        using Sig = std::pair<int, std::vector<std::tuple<Valuation, Valuation, int>>>;
        std::map<Sig, int> ids;
        std::vector<int> nb(n);
        for (std::size_t i = 0; i < n; ++i) {
            Sig sig{block[i], {}};
            for (const auto& t : in.states[i].transitions) sig.second.emplace_back(t.input, t.output, block[static_cast<std::size_t>(t.next)]);
            std::sort(sig.second.begin(), sig.second.end());
            auto [it, _] = ids.emplace(std::move(sig), static_cast<int>(ids.size()));
            nb[i] = it->second;
        }
        block.swap(nb);
        if (ids.size() == blocks) break;
        blocks = ids.size();
    }
    // Renumber blocks in BFS order from the initial state for stable output.
    Strategy out;
    out.vars = in.vars;
    out.env_mask = in.env_mask;
    out.raw_states = in.raw_states ? in.raw_states : n;
    out.arena_states = in.arena_states;
    out.spec_hash = in.spec_hash;
    std::vector<int> order(blocks, -1), rep(blocks, -1);
    std::vector<int> queue{in.initial};
    order[static_cast<std::size_t>(block[static_cast<std::size_t>(in.initial)])] = 0;
    rep[0] = in.initial;
    int next_id = 1;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const auto& st = in.states[static_cast<std::size_t>(queue[qi])];
        for (const auto& t : st.transitions) {
            auto b = static_cast<std::size_t>(block[static_cast<std::size_t>(t.next)]);
            if (order[b] < 0) {
                order[b] = next_id;
                rep[static_cast<std::size_t>(next_id)] = t.next;
                ++next_id;
                queue.push_back(t.next);
            }
        }
    }
    out.states.resize(static_cast<std::size_t>(next_id));
    for (int id = 0; id < next_id; ++id) {
        const auto& src = in.states[static_cast<std::size_t>(rep[static_cast<std::size_t>(id)])];
        auto& dst = out.states[static_cast<std::size_t>(id)];
        dst.valuation = src.valuation;
        dst.mode = src.mode;
        for (auto t : src.transitions) {
            t.next = order[static_cast<std::size_t>(block[static_cast<std::size_t>(t.next)])];
            dst.transitions.push_back(t);
        }
        std::sort(dst.transitions.begin(), dst.transitions.end(), [](const auto& a, const auto& b) { return a.input < b.input; });
    }
    out.initial = 0;
    return out;
}

namespace detail {

inline std::vector<std::string> names_of(const std::vector<std::string>& vars, Valuation v) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < vars.size(); ++i)
        if (v >> i & 1) out.push_back(vars[i]);
    return out;
}

inline Valuation from_names(const std::vector<std::string>& vars, const std::vector<std::string>& ns) {
    Valuation v = 0;
    for (const auto& n : ns) {
        auto it = std::find(vars.begin(), vars.end(), n);
        require(it != vars.end(), "strategy json: unknown AP '" + n + "'");
        v |= Valuation{1} << (it - vars.begin());
    }
    return v;
}

} // namespace detail

inline nlohmann::json strategy_to_json(const Strategy& s) {
    using nlohmann::json;
    json env = json::array(), sys = json::array();
    for (std::size_t i = 0; i < s.vars.size(); ++i) ((s.env_mask >> i & 1) ? env : sys).push_back(s.vars[i]);
    json states = json::array();
    for (std::size_t i = 0; i < s.states.size(); ++i) {
        const auto& st = s.states[i];
        json tr = json::array();
        for (const auto& t : st.transitions)
            tr.push_back({{"in", detail::names_of(s.vars, t.input)}, {"out", detail::names_of(s.vars, t.output)}, {"next", t.next}});
        states.push_back({{"id", i}, {"mode", st.mode}, {"valuation", detail::names_of(s.vars, st.valuation)}, {"transitions", tr}});
    }
    return json{{"format", "clab-strategy/1"}, {"spec_hash", s.spec_hash}, {"vars", s.vars}, {"env", env}, {"sys", sys},
                {"initial", s.initial}, {"raw_states", s.raw_states}, {"arena_states", s.arena_states},
                {"state_count", s.states.size()}, {"states", states}};
}

inline Strategy strategy_from_json(const nlohmann::json& j) {
    require(j.value("format", "") == "clab-strategy/1", "strategy json: unknown format");
    Strategy s;
    s.vars = j.at("vars").get<std::vector<std::string>>();
    s.env_mask = detail::from_names(s.vars, j.at("env").get<std::vector<std::string>>());
    s.initial = j.at("initial").get<int>();
    s.raw_states = j.value("raw_states", std::size_t{0});
    s.arena_states = j.value("arena_states", std::size_t{0});
    s.spec_hash = j.value("spec_hash", "");
    for (const auto& sj : j.at("states")) {
        StrategyState st;
        st.mode = sj.value("mode", "");
        st.valuation = detail::from_names(s.vars, sj.at("valuation").get<std::vector<std::string>>());
        for (const auto& tj : sj.at("transitions"))
            st.transitions.push_back({detail::from_names(s.vars, tj.at("in").get<std::vector<std::string>>()),
                                      detail::from_names(s.vars, tj.at("out").get<std::vector<std::string>>()), tj.at("next").get<int>()});
        s.states.push_back(std::move(st));
    }
    const int n = static_cast<int>(s.states.size());
    require(s.initial >= 0 && s.initial < n, "strategy json: initial state out of range");
    for (const auto& st : s.states)
        for (const auto& t : st.transitions) require(t.next >= 0 && t.next < n, "strategy json: transition target out of range");
    return s;
}

// Graphviz description; edge labels list the environment action and the asks/requests emitted.
inline std::string strategy_to_dot(const Strategy& s) {
    auto label = [&](Valuation v, bool requests_only) {
        std::string out;
        for (const auto& n : detail::names_of(s.vars, v)) {
            if (requests_only && !(n.rfind("sh_", 0) == 0 || n.rfind("sc_", 0) == 0 || n.rfind("sm_", 0) == 0)) continue;
            if (!out.empty()) out += ",";
            out += n;
        }
        return out.empty() ? std::string("-") : out;
    };
    std::string d = "digraph strategy {\n  rankdir=LR;\n  node [shape=box, fontsize=10];\n";
    for (std::size_t i = 0; i < s.states.size(); ++i) {
        d += "  s" + std::to_string(i) + " [label=\"" + std::to_string(i) + "\\n" + s.states[i].mode + "\"";
        if (static_cast<int>(i) == s.initial) d += ", penwidth=2";
        d += "];\n";
    }
    for (std::size_t i = 0; i < s.states.size(); ++i)
        for (const auto& t : s.states[i].transitions)
            d += "  s" + std::to_string(i) + " -> s" + std::to_string(t.next) + " [label=\"" + label(t.input, false) + " / " +
                 label(t.output, true) + "\"];\n";
    return d + "}\n";
}

} // namespace clab::gr1
