#pragma once

#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "clab/lead/design.hpp"

namespace clab::lead {

struct Tolerance {
    std::string kind;  // absolute | relative | range | open_interval
    double value = 0.0;
};

struct Question {
    std::string id;
    std::string prompt;
    std::vector<std::string> prerequisites;
    int components = 1;
    std::vector<std::string> labels;
    Tolerance tolerance;
};

struct QuestionCatalog {
    std::string experiment;
    std::vector<Question> questions;

    const Question& find(const std::string& id) const {
        for (const auto& q : questions)
            if (q.id == id) return q;
        throw Error(ErrorCode::invalid_argument, "unknown question id '" + id + "'");
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> v;
        for (const auto& q : questions) v.push_back(q.id);
        return v;
    }
};

inline QuestionCatalog parse_catalog(const nlohmann::json& j) {
    QuestionCatalog c;
    c.experiment = j.at("experiment").get<std::string>();
    std::set<std::string> seen;
    for (const auto& qj : j.at("questions")) {
        Question q;
        q.id = qj.at("id").get<std::string>();
        q.prompt = qj.value("prompt", "");
        q.prerequisites = qj.value("prerequisites", std::vector<std::string>{});
        q.components = qj.value("components", 1);
        q.labels = qj.value("labels", std::vector<std::string>{});
        if (qj.contains("tolerance")) {
            q.tolerance.kind = qj["tolerance"].value("kind", "");
            q.tolerance.value = qj["tolerance"].value("value", 0.0);
        }
        require(!seen.count(q.id), "catalog: duplicate question id '" + q.id + "'");
        require(q.components >= 1, "catalog: question '" + q.id + "' needs at least one component");
        for (const auto& p : q.prerequisites)
            require(seen.count(p), "catalog: prerequisite '" + p + "' of '" + q.id + "' is not an earlier question");
        seen.insert(q.id);
        c.questions.push_back(std::move(q));
    }
    require(!c.questions.empty(), "catalog: no questions");
    return c;
}

struct AnswerVerdict {
    bool correct = false;
    std::string expected_summary;
    std::string tolerance_used;
};

inline bool is_accepted(const LeadDesignState& s, const std::string& id) {
    if (id == "delta_phi") return s.delta_phi.has_value();
    if (id == "phi_max") return s.phi_max.has_value();
    if (id == "alpha") return s.alpha.has_value();
    if (id == "omega_gc_max") return s.omega_gc_max.has_value();
    if (id == "omega_gc") return s.omega_gc.has_value();
    if (id == "kpz") return s.k && s.p && s.z;
    return false;
}

namespace detail {

inline std::string num(double v) {
    std::ostringstream o;
    o.precision(6);
    o << v;
    return o.str();
}

inline double need(const std::optional<double>& v, const char* name) {
    if (!v) throw Error(ErrorCode::protocol_violation, std::string("'") + name + "' has not been accepted yet");
    return *v;
}

inline bool within_rel(double x, double expected, double tol) {
    return std::abs(x - expected) <= tol * std::abs(expected);
}

} // namespace detail

// Grades one submission against the student's own accepted upstream values and, when correct,
// writes the accepted value(s) into state. `measured` is the session's open-loop Bode (k_ss applied).
inline AnswerVerdict check_answer(const QuestionCatalog& catalog, const std::string& question_id,
                                  const std::vector<double>& submitted, LeadDesignState& state,
                                  const sysid::BodeData& measured) {
    const Question& q = catalog.find(question_id);
    require(static_cast<int>(submitted.size()) == q.components,
            "question '" + q.id + "' expects " + std::to_string(q.components) + " value(s)");
    for (double v : submitted) require(std::isfinite(v), "submitted value is not finite");
    for (const auto& p : q.prerequisites)
        if (!is_accepted(state, p))
            throw Error(ErrorCode::protocol_violation, "question '" + q.id + "' needs '" + p + "' accepted first");

    using detail::num;
    AnswerVerdict v;
    const double x = submitted[0];
    const double tol = q.tolerance.value;
    if (q.id == "delta_phi") {
        double e = delta_phi(state.phi_d, state.phi_pm);
        v.correct = std::abs(x - e) <= tol;
        v.expected_summary = "delta_phi = phi_d - phi_pm = " + num(e);
        v.tolerance_used = "+-" + num(tol) + " deg";
        if (v.correct) state.delta_phi = x;
    } else if (q.id == "phi_max") {
        v.tolerance_used = "inside [delta_phi+5, delta_phi+10] deg";
        try {
            auto r = phi_max_accepted_range(detail::need(state.delta_phi, "delta_phi"));
            v.correct = x >= r.lo && x <= r.hi;
            v.expected_summary = "phi_max in [" + num(r.lo) + ", " + num(r.hi) + "], reference " + num(r.reference);
        } catch (const Error& e) {
            v.correct = false;
            v.expected_summary = e.what();
        }
        if (v.correct) state.phi_max = x;
    } else if (q.id == "alpha") {
        double e = alpha_from_phi_max(detail::need(state.phi_max, "phi_max"));
        v.correct = detail::within_rel(x, e, tol);
        v.expected_summary = "alpha = (1+sin phi_max)/(1-sin phi_max) = " + num(e);
        v.tolerance_used = num(tol * 100) + "% relative";
        if (v.correct) state.alpha = x;
    } else if (q.id == "omega_gc_max") {
        v.tolerance_used = num(tol * 100) + "% relative";
        try {
            double e = sysid::shifted_crossover(measured, 20.0 * std::log10(detail::need(state.alpha, "alpha")));
            v.correct = detail::within_rel(x, e, tol);
            v.expected_summary = "crossover after +20 log10(alpha) shift = " + num(e) + " rad/s";
        } catch (const Error& e) {
            v.correct = false;
            v.expected_summary = e.what();
        }
        if (v.correct) state.omega_gc_max = x;
    } else if (q.id == "omega_gc") {
        v.correct = x > state.omega_gc_min && x < detail::need(state.omega_gc_max, "omega_gc_max");
        v.expected_summary = "omega_gc in (" + num(state.omega_gc_min) + ", " + num(detail::need(state.omega_gc_max, "omega_gc_max")) + ") rad/s";
        v.tolerance_used = "open interval";
        if (v.correct) state.omega_gc = x;
    } else if (q.id == "kpz") {
        auto e = controller_params(detail::need(state.alpha, "alpha"), detail::need(state.omega_gc, "omega_gc"));
        v.correct = detail::within_rel(submitted[0], e.k, tol) && detail::within_rel(submitted[1], e.p, tol) &&
                    detail::within_rel(submitted[2], e.z, tol);
        v.expected_summary = "k = " + num(e.k) + ", p = " + num(e.p) + ", z = " + num(e.z);
        v.tolerance_used = num(tol * 100) + "% relative each";
        if (v.correct) {
            state.k = submitted[0];
            state.p = submitted[1];
            state.z = submitted[2];
        }
    } else {
        throw Error(ErrorCode::invalid_argument, "no grading rule for question '" + q.id + "'");
    }
    return v;
}

// Reference answers in catalog order, suitable for feeding back through check_answer.
inline std::vector<double> reference_answer(const ReferenceDesign& r, const std::string& id) {
    if (id == "delta_phi") return {r.delta_phi};
    if (id == "phi_max") return {r.phi_max};
    if (id == "alpha") return {r.alpha};
    if (id == "omega_gc_max") return {r.omega_gc_max};
    if (id == "omega_gc") return {r.omega_gc};
    if (id == "kpz") return {r.k, r.p, r.z};
    throw Error(ErrorCode::invalid_argument, "no reference answer for '" + id + "'");
}

} // namespace clab::lead
