#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace clab::gr1 {

using Valuation = std::uint64_t;

enum class Tri : std::uint8_t { F, T, U };

inline Tri tri_not(Tri a) { return a == Tri::U ? Tri::U : (a == Tri::T ? Tri::F : Tri::T); }

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Propositional formula over two valuations: the current step and the next one.
struct Expr {
    enum class Op { Const, Var, Not, And, Or, Implies, Iff };
    Op op = Op::Const;
    bool value = false;
    int var = -1;
    bool next = false;
    std::vector<ExprPtr> kids;
};

inline ExprPtr constant(bool v) {
    auto e = std::make_shared<Expr>();
    e->op = Expr::Op::Const;
    e->value = v;
    return e;
}

inline ExprPtr cur(int var) {
    auto e = std::make_shared<Expr>();
    e->op = Expr::Op::Var;
    e->var = var;
    return e;
}

inline ExprPtr nxt(int var) {
    auto e = std::make_shared<Expr>();
    e->op = Expr::Op::Var;
    e->var = var;
    e->next = true;
    return e;
}

inline ExprPtr make(Expr::Op op, std::vector<ExprPtr> kids) {
    auto e = std::make_shared<Expr>();
    e->op = op;
    e->kids = std::move(kids);
    return e;
}

inline ExprPtr operator!(const ExprPtr& a) { return make(Expr::Op::Not, {a}); }
inline ExprPtr operator&&(const ExprPtr& a, const ExprPtr& b) { return make(Expr::Op::And, {a, b}); }
inline ExprPtr operator||(const ExprPtr& a, const ExprPtr& b) { return make(Expr::Op::Or, {a, b}); }
inline ExprPtr implies(const ExprPtr& a, const ExprPtr& b) { return make(Expr::Op::Implies, {a, b}); }
inline ExprPtr iff(const ExprPtr& a, const ExprPtr& b) { return make(Expr::Op::Iff, {a, b}); }

inline ExprPtr all_of(std::vector<ExprPtr> v) { return v.empty() ? constant(true) : make(Expr::Op::And, std::move(v)); }
inline ExprPtr any_of(std::vector<ExprPtr> v) { return v.empty() ? constant(false) : make(Expr::Op::Or, std::move(v)); }

// No two of the given atoms true at once.
inline ExprPtr at_most_one(const std::vector<ExprPtr>& v) {
    std::vector<ExprPtr> pairs;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j) pairs.push_back(!(v[i] && v[j]));
    return all_of(std::move(pairs));
}

// Partial assignment: bit i is meaningful only where the known mask has bit i set.
struct Assignment {
    Valuation cur = 0, cur_known = ~Valuation{0};
    Valuation nxt = 0, nxt_known = ~Valuation{0};
};

inline Tri eval3(const Expr& e, const Assignment& a) {
    using Op = Expr::Op;
    switch (e.op) {
    case Op::Const: return e.value ? Tri::T : Tri::F;
    case Op::Var: {
        Valuation bit = Valuation{1} << e.var;
        Valuation known = e.next ? a.nxt_known : a.cur_known;
        if (!(known & bit)) return Tri::U;
        return ((e.next ? a.nxt : a.cur) & bit) ? Tri::T : Tri::F;
    }
    case Op::Not: return tri_not(eval3(*e.kids[0], a));
    case Op::And: {
        bool unknown = false;
        for (const auto& k : e.kids) {
            Tri t = eval3(*k, a);
            if (t == Tri::F) return Tri::F;
            if (t == Tri::U) unknown = true;
        }
        return unknown ? Tri::U : Tri::T;
    }
    case Op::Or: {
        bool unknown = false;
        for (const auto& k : e.kids) {
            Tri t = eval3(*k, a);
            if (t == Tri::T) return Tri::T;
            if (t == Tri::U) unknown = true;
        }
        return unknown ? Tri::U : Tri::F;
    }
    case Op::Implies: {
        Tri l = eval3(*e.kids[0], a);
        if (l == Tri::F) return Tri::T;
        Tri r = eval3(*e.kids[1], a);
        if (r == Tri::T) return Tri::T;
        if (l == Tri::T && r == Tri::F) return Tri::F;
        return Tri::U;
    }
    case Op::Iff: {
        Tri l = eval3(*e.kids[0], a), r = eval3(*e.kids[1], a);
        if (l == Tri::U || r == Tri::U) return Tri::U;
        return l == r ? Tri::T : Tri::F;
    }
    }
    return Tri::U;
}

inline bool eval(const Expr& e, Valuation c, Valuation n) {
    Assignment a;
    a.cur = c;
    a.nxt = n;
    return eval3(e, a) == Tri::T;
}

// Bitmasks of variables read in the current and next step.
inline void support(const Expr& e, Valuation& cur_vars, Valuation& nxt_vars) {
    if (e.op == Expr::Op::Var) {
        (e.next ? nxt_vars : cur_vars) |= Valuation{1} << e.var;
        return;
    }
    for (const auto& k : e.kids) support(*k, cur_vars, nxt_vars);
}

inline std::string to_string(const Expr& e, const std::vector<std::string>& names) {
    using Op = Expr::Op;
    auto join = [&](const char* sep) {
        std::string s = "(";
        for (std::size_t i = 0; i < e.kids.size(); ++i) {
            if (i) s += sep;
            s += to_string(*e.kids[i], names);
        }
        return s + ")";
    };
    switch (e.op) {
    case Op::Const: return e.value ? "true" : "false";
    case Op::Var: return (e.next ? "X " : "") + names.at(static_cast<std::size_t>(e.var));
    case Op::Not: return "!" + to_string(*e.kids[0], names);
    case Op::And: return join(" & ");
    case Op::Or: return join(" | ");
    case Op::Implies: return join(" -> ");
    case Op::Iff: return join(" <-> ");
    }
    return "?";
}

} // namespace clab::gr1
