#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "clab/gr1/spec.hpp"
#include "clab/gr1/strategy.hpp"

namespace clab::gr1 {

struct TraceStep {
    int state = -1;
    std::vector<std::string> input;
    std::vector<std::string> output;
};

class UnrealizableError : public Error {
public:
    UnrealizableError(const std::string& msg, std::vector<TraceStep> trace)
        : Error(ErrorCode::unrealizable, msg), trace_(std::move(trace)) {}
    const std::vector<TraceStep>& trace() const { return trace_; }

private:
    std::vector<TraceStep> trace_;
};

// Explicit game graph: nodes are full valuations reached after a (env, sys) step.
struct Arena {
    struct Choice {
        Valuation input;
        std::vector<Valuation> outputs;
        std::vector<int> succ;  // parallel to outputs
    };
    std::vector<Valuation> nodes;
    std::vector<std::vector<Choice>> choices;
    int initial = 0;
};

inline constexpr std::size_t kMaxArenaStates = 1'000'000;

inline Arena build_arena(const GameSpec& spec) {
    validate(spec);
    Arena a;
    std::unordered_map<Valuation, int> id;
    auto intern = [&](Valuation v) {
        auto [it, fresh] = id.emplace(v, static_cast<int>(a.nodes.size()));
        if (fresh) {
            if (a.nodes.size() >= kMaxArenaStates)
                throw Error(ErrorCode::domain, "synthesize: reachable arena exceeds 1e6 valuations");
            a.nodes.push_back(v);
        }
        return it->second;
    };
    a.initial = intern(spec.initial & spec.sys_mask());
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        Valuation v = a.nodes[i];
        std::vector<Arena::Choice> cs;
        for (Valuation e : admissible_inputs(spec, v)) {
            Arena::Choice c{e, system_responses(spec, v, e), {}};
            for (Valuation o : c.outputs) c.succ.push_back(intern(e | o));
            cs.push_back(std::move(c));
        }
        a.choices.push_back(std::move(cs));
    }
    return a;
}

namespace detail {

using Set = std::vector<char>;

inline Set cpre(const Arena& a, const Set& target) {
    Set out(a.nodes.size(), 0);
    for (std::size_t v = 0; v < a.nodes.size(); ++v) {
        bool ok = true;
        for (const auto& c : a.choices[v]) {
            bool any = false;
            for (int s : c.succ)
                if (target[static_cast<std::size_t>(s)]) {
                    any = true;
                    break;
                }
            if (!any) {
                ok = false;
                break;
            }
        }
        out[v] = ok;
    }
    return out;
}

inline Set predicate_set(const Arena& a, const NamedPredicate& p) {
    Set s(a.nodes.size(), 0);
    for (std::size_t v = 0; v < a.nodes.size(); ++v) s[v] = eval(*p.expr, 0, a.nodes[v]);
    return s;
}

inline Set unite(Set a, const Set& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] || b[i];
    return a;
}

inline Set intersect(Set a, const Set& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] && b[i];
    return a;
}

} // namespace detail

struct GameSolution {
    detail::Set winning;
    // Per system goal j, rank r: Y layer and, per env assumption i, the X set of that layer.
    std::vector<std::vector<detail::Set>> y;
    std::vector<std::vector<std::vector<detail::Set>>> x;
    std::vector<detail::Set> goals;
    std::vector<detail::Set> justice;
};

// Three-nested GR(1) fixed point: nu Z. /\_j mu Y. \/_i nu X. (J_j & cpre Z) | cpre Y | (!A_i & cpre X).
inline GameSolution solve(const Arena& a, const GameSpec& spec) {
    using namespace detail;
    const std::size_t n = a.nodes.size();
    GameSolution sol;
    if (spec.sys_liveness.empty()) sol.goals.push_back(Set(n, 1));
    for (const auto& g : spec.sys_liveness) sol.goals.push_back(predicate_set(a, g));
    if (spec.env_liveness.empty()) sol.justice.push_back(Set(n, 1));
    for (const auto& j : spec.env_liveness) sol.justice.push_back(predicate_set(a, j));

    Set z(n, 1);
    while (true) {
        Set z_start = z;
        sol.y.assign(sol.goals.size(), {});
        sol.x.assign(sol.goals.size(), {});
        for (std::size_t j = 0; j < sol.goals.size(); ++j) {
            Set cz = cpre(a, z);
            Set y(n, 0);
            while (true) {
                Set start = unite(intersect(sol.goals[j], cz), cpre(a, y));
                Set ynew(n, 0);
                std::vector<Set> xs;
                for (const auto& just : sol.justice) {
                    Set x = z;
                    while (true) {
                        Set nj(n);
                        for (std::size_t v = 0; v < n; ++v) nj[v] = !just[v];
                        Set xn = unite(start, intersect(nj, cpre(a, x)));
                        if (xn == x) break;
                        x = std::move(xn);
                    }
                    ynew = unite(ynew, x);
                    xs.push_back(std::move(x));
                }
                if (ynew == y) break;
                y = ynew;
                sol.y[j].push_back(std::move(ynew));
                sol.x[j].push_back(std::move(xs));
            }
            z = y;
        }
        if (z == z_start) break;
    }
    sol.winning = z;
    return sol;
}

namespace detail {

inline std::vector<TraceStep> counter_trace(const Arena& a, const GameSpec& spec) {
    // Environment attractor to states where some admissible move leaves the system without a response.
    const std::size_t n = a.nodes.size();
    std::vector<int> rank(n, -1);
    for (std::size_t v = 0; v < n; ++v)
        for (const auto& c : a.choices[v])
            if (c.succ.empty()) rank[v] = 0;
    for (int r = 1;; ++r) {
        bool grew = false;
        for (std::size_t v = 0; v < n; ++v) {
            if (rank[v] >= 0) continue;
            for (const auto& c : a.choices[v]) {
                bool all = !c.succ.empty();
                for (int s : c.succ)
                    if (rank[static_cast<std::size_t>(s)] < 0 || rank[static_cast<std::size_t>(s)] >= r) all = false;
                if (all) {
                    rank[v] = r;
                    grew = true;
                    break;
                }
            }
        }
        if (!grew) break;
    }
    std::vector<TraceStep> trace;
    auto v = static_cast<std::size_t>(a.initial);
    if (rank[v] < 0) return trace;
    Valuation em = spec.env_mask();
    while (true) {
        int r = rank[v];
        for (const auto& c : a.choices[v]) {
            if (r == 0 && c.succ.empty()) {
                trace.push_back({static_cast<int>(v), spec.true_names(c.input, em), {"<no legal response>"}});
                return trace;
            }
            bool all = !c.succ.empty();
            for (int s : c.succ) all = all && rank[static_cast<std::size_t>(s)] >= 0 && rank[static_cast<std::size_t>(s)] < r;
            if (r > 0 && all) {
                trace.push_back({static_cast<int>(v), spec.true_names(c.input, em), spec.true_names(c.outputs[0], ~em)});
                v = static_cast<std::size_t>(c.succ[0]);
                break;
            }
        }
    }
}

} // namespace detail

// Strategy extraction: memory is the current system goal index.
inline Strategy synthesize(const GameSpec& spec) {
    Arena a = build_arena(spec);
    GameSolution sol = solve(a, spec);
    if (!sol.winning[static_cast<std::size_t>(a.initial)]) {
        auto trace = detail::counter_trace(a, spec);
        throw UnrealizableError("synthesize: specification is unrealizable from the initial state (counter-trace of " +
                                    std::to_string(trace.size()) + " steps)",
                                std::move(trace));
    }
    const std::size_t goals = sol.goals.size();
    auto rank_of = [&](std::size_t j, int v) {
        for (std::size_t r = 0; r < sol.y[j].size(); ++r)
            if (sol.y[j][r][static_cast<std::size_t>(v)]) return static_cast<int>(r);
        return -1;
    };
    auto pick = [&](int v, std::size_t j, const Arena::Choice& c, std::size_t& next_j) -> int {
        auto in = [&](const detail::Set& s, int k) { return s[static_cast<std::size_t>(c.succ[static_cast<std::size_t>(k)])] != 0; };
        const int m = static_cast<int>(c.succ.size());
        next_j = j;
        if (sol.goals[j][static_cast<std::size_t>(v)]) {
            for (int k = 0; k < m; ++k)
                if (in(sol.winning, k)) {
                    next_j = (j + 1) % goals;
                    return k;
                }
        }
        int r = rank_of(j, v);
        if (r > 0)
            for (int k = 0; k < m; ++k)
                if (in(sol.y[j][static_cast<std::size_t>(r - 1)], k)) return k;
        if (r >= 0)
            for (std::size_t i = 0; i < sol.justice.size(); ++i) {
                const auto& xs = sol.x[j][static_cast<std::size_t>(r)][i];
                if (!xs[static_cast<std::size_t>(v)] || sol.justice[i][static_cast<std::size_t>(v)]) continue;
                for (int k = 0; k < m; ++k)
                    if (in(xs, k)) return k;
            }
        for (int k = 0; k < m; ++k)
            if (in(sol.winning, k)) return k;
        throw Error(ErrorCode::unrealizable, "synthesize: no winning move from a winning state");
    };

    Strategy raw;
    raw.vars = spec.names();
    raw.env_mask = spec.env_mask();
    raw.arena_states = a.nodes.size();
    raw.spec_hash = spec_hash(spec);
    std::map<std::pair<int, std::size_t>, int> id;
    std::vector<std::pair<int, std::size_t>> work;
    auto intern = [&](int v, std::size_t j) {
        auto [it, fresh] = id.emplace(std::make_pair(v, j), static_cast<int>(work.size()));
        if (fresh) {
            work.emplace_back(v, j);
            StrategyState st;
            st.valuation = a.nodes[static_cast<std::size_t>(v)] & spec.sys_mask();
            st.mode = mode_of(spec, st.valuation);
            raw.states.push_back(std::move(st));
        }
        return it->second;
    };
    raw.initial = intern(a.initial, 0);
    for (std::size_t w = 0; w < work.size(); ++w) {
        auto [v, j] = work[w];
        std::vector<Transition> ts;
        for (const auto& c : a.choices[static_cast<std::size_t>(v)]) {
            std::size_t nj = j;
            int k = pick(v, j, c, nj);
            int target = intern(c.succ[static_cast<std::size_t>(k)], nj);
            ts.push_back({c.input, c.outputs[static_cast<std::size_t>(k)], target});
        }
        raw.states[w].transitions = std::move(ts);
    }
    raw.raw_states = raw.states.size();
    return minimize(raw);
}

} // namespace clab::gr1
