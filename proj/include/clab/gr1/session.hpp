#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clab/gr1/spec.hpp"
#include "clab/gr1/strategy.hpp"

namespace clab::gr1 {

struct Reaction {
    int state = 0;
    std::string mode;
    std::vector<std::string> active;  // system APs true after the step
    std::optional<std::string> asking;
    std::optional<std::string> checking;
    bool offers_experiment = false;
    bool offers_reset = false;
    bool triggers_experiment = false;
    bool result_held = false;
};

// Runs a synthesized strategy. Single-writer: callers serialize step().
class EngineSession {
public:
    EngineSession(const Strategy& strategy, const GameSpec& spec)
        : strategy_(&strategy), spec_(&spec), current_(strategy.initial), last_(spec.initial & spec.sys_mask()) {
        require(strategy.vars == spec.names(), "engine session: strategy and spec AP lists differ");
    }

    int current() const { return current_; }
    Valuation valuation() const { return last_; }
    const std::map<std::string, std::vector<double>>& accepted_values() const { return accepted_; }
    bool result_held() const { return on(last_, "s_result"); }

    Reaction reaction() const { return describe(current_, last_); }

    Reaction step(Valuation input) {
        input &= spec_->env_mask();
        const auto& st = strategy_->states[static_cast<std::size_t>(current_)];
        const Transition* t = st.find(input);
        if (!t) {
            const NamedPredicate* bad = first_violated(spec_->env_safety, last_, input);
            std::string msg = bad ? bad->name + ": " + bad->description
                                  : std::string("input not handled by the strategy in mode ") + st.mode;
            throw Error(ErrorCode::protocol_violation, msg);
        }
        Valuation nxt = t->input | t->output;
        if (input & spec_->bit("h_reset") || input & spec_->bit("m_error")) {
            accepted_.clear();
            pending_.reset();
        }
        for (const auto& q : spec_->question_chain) {
            if (input & spec_->bit("h_" + q)) pending_ = std::make_pair(q, pending_value_);
            if ((last_ & spec_->bit("sc_" + q)) && pending_ && pending_->first == q) {
                if (input & spec_->bit("c_true")) accepted_[q] = pending_->second;
                if (input & (spec_->bit("c_true") | spec_->bit("c_false"))) pending_.reset();
            }
        }
        pending_value_.clear();
        last_ = nxt;
        current_ = t->next;
        return describe(current_, last_);
    }

    Reaction step(const std::vector<std::string>& env_names) { return step(spec_->from_names(env_names)); }

    Reaction stutter() { return step(Valuation{0}); }

    // Enters a value: the h_<var> action, with the numbers kept until the verdict arrives.
    Reaction submit(const std::string& var, std::vector<double> values) {
        pending_value_ = std::move(values);
        try {
            return step(spec_->bit("h_" + var));
        } catch (...) {
            pending_value_.clear();
            throw;
        }
    }

private:
    bool on(Valuation v, const std::string& n) const { return spec_->has(n) && (v & spec_->bit(n)); }

    Reaction describe(int state, Valuation v) const {
        Reaction r;
        r.state = state;
        r.mode = mode_of(*spec_, v);
        r.active = spec_->true_names(v, spec_->sys_mask());
        for (const auto& q : spec_->question_chain) {
            if (on(v, "sh_" + q)) r.asking = q;
            if (on(v, "sc_" + q)) r.checking = q;
        }
        r.offers_experiment = on(v, "sh_exp");
        r.offers_reset = on(v, "sh_reset");
        r.triggers_experiment = on(v, "sm_exp");
        r.result_held = on(v, "s_result");
        return r;
    }

    const Strategy* strategy_;
    const GameSpec* spec_;
    int current_;
    Valuation last_;
    std::map<std::string, std::vector<double>> accepted_;
    std::optional<std::pair<std::string, std::vector<double>>> pending_;
    std::vector<double> pending_value_;
};

} // namespace clab::gr1
