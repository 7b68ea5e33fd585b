#pragma once

#include <functional>
#include <vector>

namespace dtl {

// Nodes and weights with sum_i w_i f(x_i) ~ E_{z~N(0,1)}[f(z)].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Cached, thread-safe.
const GaussRule& gauss_hermite(int order);

// Adaptive 61-point Gauss-Kronrod on [a, b].
double integrate_gk(const std::function<double(double)>& f, double a, double b, double abs_tol = 1e-11,
                    double rel_tol = 1e-12);

// E_{xi~N(0,1)}[f(xi)] restricted to [-10, 10].
double gaussian_expectation(const std::function<double(double)>& f, double abs_tol = 1e-11);

}  // namespace dtl
