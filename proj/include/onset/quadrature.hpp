#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace onset::quad {

/// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre nodes and weights (Newton on P_n, Golub-Welsch free).
GaussRule gauss_legendre(std::size_t n);

/// Integrate f over [a, b] with the rule mapped affinely.
double integrate(const GaussRule& rule, double a, double b, const std::function<double(double)>& f);

/// Adaptive Simpson with absolute tolerance tol; throws onset::Error past max_depth.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth = 40);

/// Vector-valued adaptive Simpson: integrates all components on a shared
/// subdivision, refining until every component meets tol.
std::vector<double> adaptive_simpson(const std::function<void(double, std::vector<double>&)>& f,
                                     std::size_t dim, double a, double b, double tol,
                                     int max_depth = 40);

}  // namespace onset::quad
