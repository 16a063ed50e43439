#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/Polynomials>

#include "clab/core/error.hpp"

// Coefficient vectors are in descending powers throughout.
namespace clab::poly {

using Coeffs = std::vector<double>;
using cplx = std::complex<double>;

inline Coeffs trim(Coeffs c) {
    std::size_t i = 0;
    while (i + 1 < c.size() && c[i] == 0.0) ++i;
    return Coeffs(c.begin() + static_cast<long>(i), c.end());
}

inline std::size_t degree(const Coeffs& c) {
    Coeffs t = trim(c);
    return t.empty() ? 0 : t.size() - 1;
}

inline Coeffs mul(const Coeffs& a, const Coeffs& b) {
    if (a.empty() || b.empty()) return {};
    Coeffs r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

inline Coeffs scale(Coeffs a, double g) {
    for (auto& v : a) v *= g;
    return a;
}

template <class T>
T eval(const Coeffs& c, T x) {
    T acc{0};
    for (double v : c) acc = acc * x + v;
    return acc;
}

inline std::vector<cplx> roots(const Coeffs& c) {
    Coeffs t = trim(c);
    if (t.size() <= 1) return {};
    if (t.size() == 2) return {cplx(-t[1] / t[0], 0.0)};
    // Eigen wants ascending order.
    Eigen::VectorXd asc(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) asc[static_cast<Eigen::Index>(i)] = t[t.size() - 1 - i];
    Eigen::PolynomialSolver<double, Eigen::Dynamic> solver;
    solver.compute(asc);
    std::vector<cplx> out;
    for (Eigen::Index i = 0; i < solver.roots().size(); ++i) out.push_back(solver.roots()[i]);
    return out;
}

} // namespace clab::poly
