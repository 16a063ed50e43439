#pragma once

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "clab/gr1/solver.hpp"
#include "clab/gr1/spec.hpp"
#include "clab/gr1/strategy.hpp"

namespace clab::gr1 {

struct Violation {
    std::string property;
    std::string detail;
    std::vector<TraceStep> trace;
};

struct VerificationReport {
    std::size_t plays = 0;
    std::size_t play_steps = 0;
    int bfs_depth = 0;
    std::size_t bfs_nodes = 0;
    std::size_t transitions_checked = 0;
    std::size_t states_total = 0;
    std::size_t states_covered = 0;
    std::size_t violation_count = 0;
    std::vector<Violation> violations;  // first few, with traces

    bool ok() const { return violation_count == 0; }
    bool flagged(const std::string& prefix) const {
        for (const auto& v : violations)
            if (v.property.rfind(prefix, 0) == 0) return true;
        return false;
    }
};

struct VerifyOptions {
    std::size_t plays = 1000;
    std::uint64_t seed = 1;
    int play_length = 64;
    int bfs_depth = 12;
    std::size_t keep_violations = 20;
};

namespace detail {

// Checks one strategy move against the spec, independent of how the strategy was built.
class Checker {
public:
    Checker(const Strategy& st, const GameSpec& spec, VerificationReport& rep, std::size_t keep)
        : st_(st), spec_(spec), rep_(rep), keep_(keep), sys_(spec.sys_mask()), env_(spec.env_mask()) {
        for (const auto& q : spec.question_chain) {
            sh_.push_back(spec.bit("sh_" + q));
            sc_.push_back(spec.bit("sc_" + q));
            s_.push_back(spec.bit("s_" + q));
        }
        h_reset_ = spec.bit("h_reset");
    }

    void flag(std::string prop, std::string detail, const std::vector<TraceStep>& trace) {
        ++rep_.violation_count;
        if (rep_.violations.size() < keep_) rep_.violations.push_back({std::move(prop), std::move(detail), trace});
    }

    // Returns false when the state has no transition for `input` (reported as totality elsewhere).
    bool check_move(int state, Valuation cur, Valuation input, std::vector<TraceStep>& trace, int& next, Valuation& nxt) {
        const auto& s = st_.states[static_cast<std::size_t>(state)];
        const Transition* t = s.find(input);
        if (!t) return false;
        ++rep_.transitions_checked;
        nxt = (t->input & env_) | (t->output & sys_);
        next = t->next;
        trace.push_back({state, spec_.true_names(input, env_), spec_.true_names(nxt, sys_)});
        for (const auto& p : spec_.sys_safety)
            if (!eval(*p.expr, cur, nxt)) flag(p.name, p.description, trace);
        int modes = !!(nxt & spec_.bit("s_h")) + !!(nxt & spec_.bit("s_m")) + !!(nxt & spec_.bit("s_c"));
        int asks = 0, checks = 0;
        for (std::size_t i = 0; i < sh_.size(); ++i) {
            asks += !!(nxt & sh_[i]);
            checks += !!(nxt & sc_[i]);
            if (i > 0 && (nxt & sh_[i]) && !(nxt & s_[i - 1]))
                flag("Prerequisite order", "asked " + spec_.question_chain[i] + " before " + spec_.question_chain[i - 1] + " holds", trace);
        }
        if (modes != 1 || asks > 1 || checks > 1) flag("Mode exclusivity", "modes=" + std::to_string(modes) + " asks=" + std::to_string(asks), trace);
        if ((nxt & spec_.bit("sm_exp")) && !(input & spec_.bit("h_exp")))
            flag("Experiment gating", "experiment triggered without a request", trace);
        if ((input & spec_.bit("h_exp")) && !(cur & spec_.bit("sh_exp")))
            flag("Experiment gating", "experiment request admitted before it was offered", trace);
        const auto& target = st_.states[static_cast<std::size_t>(next)];
        if ((target.valuation & sys_) != (nxt & sys_))
            flag("State labeling", "target state label differs from the emitted valuation", trace);
        return true;
    }

    // Determinism and totality over admissible inputs of a visited (state, valuation) pair.
    const std::vector<Valuation>& inputs_of(Valuation cur) {
        auto it = inputs_.find(cur);
        if (it == inputs_.end()) it = inputs_.emplace(cur, admissible_inputs(spec_, cur)).first;
        return it->second;
    }

    std::vector<Valuation> check_state(int state, Valuation cur, const std::vector<TraceStep>& trace) {
        const auto& inputs = inputs_of(cur);
        if (!checked_.insert({state, cur}).second) return inputs;
        const auto& s = st_.states[static_cast<std::size_t>(state)];
        std::map<Valuation, int> seen;
        for (const auto& t : s.transitions) ++seen[t.input & env_];
        for (auto [in, cnt] : seen)
            if (cnt > 1) flag("Determinism", "state " + std::to_string(state) + " has " + std::to_string(cnt) + " moves on one input", trace);
        for (Valuation in : inputs)
            if (!seen.count(in)) flag("Totality", "state " + std::to_string(state) + " has no move on an admissible input", trace);
        if (checked_reset_.insert(state).second) {
            const Transition* r = s.find(h_reset_);
            if (r && !bisimilar(r->next, st_.initial))
                flag("Reset completeness", "reset from state " + std::to_string(state) + " is not equivalent to the initial state", trace);
        }
        return inputs;
    }

    bool bisimilar(int a, int b) {
        std::set<std::pair<int, int>> seen;
        std::vector<std::pair<int, int>> work{{a, b}};
        while (!work.empty()) {
            auto [x, y] = work.back();
            work.pop_back();
            if (x == y || !seen.insert({x, y}).second) continue;
            const auto& sx = st_.states[static_cast<std::size_t>(x)];
            const auto& sy = st_.states[static_cast<std::size_t>(y)];
            if ((sx.valuation & sys_) != (sy.valuation & sys_)) return false;
            if (sx.transitions.size() != sy.transitions.size()) return false;
            for (const auto& t : sx.transitions) {
                const Transition* u = sy.find(t.input);
                if (!u || u->output != t.output) return false;
                work.emplace_back(t.next, u->next);
            }
        }
        return true;
    }

private:
    const Strategy& st_;
    const GameSpec& spec_;
    VerificationReport& rep_;
    std::size_t keep_;
    Valuation sys_, env_, h_reset_ = 0;
    std::vector<Valuation> sh_, sc_, s_;
    std::set<std::pair<int, Valuation>> checked_;
    std::set<int> checked_reset_;
    std::map<Valuation, std::vector<Valuation>> inputs_;
};

} // namespace detail

// Random plays (compliant, progress-seeking, liveness-starving, disruptive) plus exhaustive
// bounded BFS over (strategy state, last valuation).
inline VerificationReport verify(const Strategy& strategy, const GameSpec& spec, const VerifyOptions& opt = {}) {
    require(strategy.vars == spec.names(), "verify: strategy and spec AP lists differ");
    VerificationReport rep;
    rep.states_total = strategy.states.size();
    detail::Checker chk(strategy, spec, rep, opt.keep_violations);
    std::set<int> covered;
    const Valuation init = spec.initial & spec.sys_mask();
    const auto env_idx = spec.indices(Owner::environment);

    std::mt19937_64 rng(opt.seed);
    std::vector<Valuation> progress{spec.bit("c_true"), spec.bit("h_exp"), spec.bit("m_result")};
    for (const auto& q : spec.question_chain) progress.push_back(spec.bit("h_" + q));
    std::vector<Valuation> disrupt{spec.bit("h_reset"), spec.bit("m_error"), spec.bit("c_false")};
    auto pick_from = [&](const std::vector<Valuation>& v) {
        return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    };
    auto filter = [&](const std::vector<Valuation>& in, auto pred) {
        std::vector<Valuation> out;
        for (Valuation v : in)
            if (pred(v)) out.push_back(v);
        return out;
    };
    for (std::size_t p = 0; p < opt.plays; ++p) {
        int state = strategy.initial;
        Valuation cur = init;
        std::vector<TraceStep> trace;
        int behaviour = static_cast<int>(p % 4);
        Valuation starved = Valuation{1} << env_idx[std::uniform_int_distribution<std::size_t>(0, env_idx.size() - 1)(rng)];
        for (int k = 0; k < opt.play_length; ++k) {
            covered.insert(state);
            auto inputs = chk.check_state(state, cur, trace);
            if (inputs.empty()) break;
            std::vector<Valuation> pool = inputs;
            std::bernoulli_distribution coin(0.8);
            if (behaviour == 1 && coin(rng)) {
                auto pr = filter(inputs, [&](Valuation v) { for (auto b : progress) if (v == b) return true; return false; });
                if (!pr.empty()) pool = pr;
            } else if (behaviour == 2) {
                auto pr = filter(inputs, [&](Valuation v) { return !(v & starved); });
                if (!pr.empty()) pool = pr;
            } else if (behaviour == 3 && coin(rng)) {
                auto pr = filter(inputs, [&](Valuation v) { for (auto b : disrupt) if (v == b) return true; return false; });
                if (!pr.empty()) pool = pr;
            }
            Valuation in = pick_from(pool);
            int next;
            Valuation nxt;
            if (!chk.check_move(state, cur, in, trace, next, nxt)) break;  // totality already flagged
            ++rep.play_steps;
            state = next;
            cur = nxt;
        }
        ++rep.plays;
    }

    struct Node {
        int state;
        Valuation cur;
        int parent;
        TraceStep step;
    };
    std::vector<Node> nodes{{strategy.initial, init, -1, {}}};
    std::set<std::pair<int, Valuation>> seen{{strategy.initial, init}};
    auto trace_of = [&](int idx) {
        std::vector<TraceStep> t;
        for (int i = idx; i > 0; i = nodes[static_cast<std::size_t>(i)].parent) t.push_back(nodes[static_cast<std::size_t>(i)].step);
        return std::vector<TraceStep>(t.rbegin(), t.rend());
    };
    std::size_t frontier_begin = 0;
    for (int depth = 0; depth < opt.bfs_depth; ++depth) {
        std::size_t frontier_end = nodes.size();
        if (frontier_begin == frontier_end) break;
        rep.bfs_depth = depth + 1;
        for (std::size_t i = frontier_begin; i < frontier_end; ++i) {
            Node node = nodes[i];
            covered.insert(node.state);
            auto trace = trace_of(static_cast<int>(i));
            for (Valuation in : chk.check_state(node.state, node.cur, trace)) {
                auto t = trace;
                int next;
                Valuation nxt;
                if (!chk.check_move(node.state, node.cur, in, t, next, nxt)) continue;
                covered.insert(next);
                if (seen.insert({next, nxt}).second) nodes.push_back({next, nxt, static_cast<int>(i), t.back()});
            }
        }
        frontier_begin = frontier_end;
    }
    rep.bfs_nodes = nodes.size();
    rep.states_covered = covered.size();
    return rep;
}

} // namespace clab::gr1
