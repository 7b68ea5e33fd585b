#include "dtl/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dtl/error.hpp"

namespace dtl {

namespace {

// Golub-Welsch on the probabilists' Hermite Jacobi matrix.
GaussRule build_hermite(int n) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int i = 1; i < n; ++i) sub(i - 1) = std::sqrt(double(i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        rule.weights[i] = v * v;
    }
    // symmetrize to remove eigen-solver round-off
    for (int i = 0; i < n / 2; ++i) {
        const int j = n - 1 - i;
        const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = rule.weights[j] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

}  // namespace

const GaussRule& gauss_hermite(int order) {
    if (order < 2 || order > 4000) throw DomainError("gauss_hermite: order must lie in [2, 4000]");
    static std::mutex mu;
    static std::map<int, std::unique_ptr<GaussRule>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[order];
    if (!slot) slot = std::make_unique<GaussRule>(build_hermite(order));
    return *slot;
}

double integrate_gk(const std::function<double(double)>& f, double a, double b, double abs_tol, double rel_tol) {
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, rel_tol, &err);
    if (!std::isfinite(v)) throw NumericalError("integrate_gk: non-finite integral");
    if (err > std::max(abs_tol, rel_tol * std::abs(v)) * 10.0)
    {
        std::ostringstream os;
        os << "integrate_gk: tolerance not reached on [" << a << ", " << b << "] (error estimate " << err << ")";
        throw NumericalError(os.str());
    }
    return v;
}

double gaussian_expectation(const std::function<double(double)>& f, double abs_tol) {
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    auto g = [&](double x) { return c * std::exp(-0.5 * x * x) * f(x); };
    // split at 0 so symmetric integrands with kinks at the origin converge quickly
    return integrate_gk(g, -10.0, 0.0, abs_tol) + integrate_gk(g, 0.0, 10.0, abs_tol);
}

}  // namespace dtl
