#include "dtl/theory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "dtl/error.hpp"
#include "dtl/quadrature.hpp"

namespace dtl {

namespace {

constexpr double kPi = std::numbers::pi;

template <std::size_t N>
using State = std::array<double, N>;

// x <- (1 - eta) x + eta F(x); eta halves after 10 consecutive residual increases.
template <std::size_t N, class F>
State<N> damped_iterate(State<N> x, F&& update, const SolverConfig& cfg, const char* what, long& iterations,
                        double& residual) {
    if (!(cfg.damping > 0 && cfg.damping <= 1)) throw DomainError("solver damping must lie in (0, 1]");
    double eta = cfg.damping;
    double prev = std::numeric_limits<double>::infinity();
    int rising = 0;
    for (long it = 1; it <= cfg.max_iter; ++it) {
        const State<N> y = update(x);
        double res = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            if (!std::isfinite(y[i])) throw NumericalError(std::string(what) + ": non-finite update");
            res = std::max(res, std::abs(y[i] - x[i]));
        }
        iterations = it;
        residual = res;
        if (res < cfg.tol) return y;
        rising = res > prev ? rising + 1 : 0;
        if (rising >= 10) {
            eta *= 0.5;
            rising = 0;
        }
        prev = res;
        for (std::size_t i = 0; i < N; ++i) x[i] = (1.0 - eta) * x[i] + eta * y[i];
    }
    std::ostringstream os;
    os << what << ": no convergence after " << cfg.max_iter << " iterations (residual " << residual << ")";
    throw ConvergenceError(os.str(), residual, cfg.max_iter);
}

// Root of h(v) = v (1 + V(v)) - alpha for the conjugate variable V_hat. For
// positive lambda the root lies in (0, alpha); otherwise the valid half-line
// (lb, inf) is scanned and the largest root is kept. v_of throws DomainError
// where the equations are undefined.
double solve_vhat(const std::function<double(double)>& v_of, double alpha, double lambda, double lb,
                  const char* domain_msg) {
    auto h = [&](double v) { return v * (1.0 + v_of(v)) - alpha; };
    boost::uintmax_t max_it = 200;
    auto tol = [](double a, double b) { return std::abs(a - b) <= 1e-15 * std::max(1.0, std::abs(a)); };
    if (lambda > 0 && lb <= 0) {
        double lo = alpha * 1e-3, hi = alpha;
        while (!(h(lo) < 0)) {
            hi = lo;
            lo *= 1e-3;
            if (lo < alpha * 1e-30) throw NumericalError(domain_msg);
        }
        const auto [a, b] = boost::math::tools::toms748_solve(h, lo, hi, tol, max_it);
        return 0.5 * (a + b);
    }
    const double start = std::max(lb, 0.0);
    const double span = std::max({alpha, start, 1.0}) * 1e3;
    std::vector<double> grid;
    for (int i = 0; i <= 400; ++i) grid.push_back(start + span * std::pow(10.0, -12.0 + 12.0 * i / 400.0));
    double best = std::numeric_limits<double>::quiet_NaN();
    double prev_v = 0, prev_h = std::numeric_limits<double>::quiet_NaN();
    for (double v : grid) {
        double hv;
        try {
            hv = h(v);
        } catch (const DomainError&) {
            prev_h = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        if (std::isfinite(prev_h) && std::isfinite(hv) && (prev_h < 0) != (hv < 0)) {
            max_it = 200;
            const auto [a, b] = boost::math::tools::toms748_solve(h, prev_v, v, prev_h, hv, tol, max_it);
            best = 0.5 * (a + b);
        }
        prev_v = v;
        prev_h = hv;
    }
    if (!std::isfinite(best)) throw DomainError(domain_msg);
    return best;
}

double arccos_error(double m, double q, double total) {
    if (q < 1e-14) return 0.5;
    double c = m / std::sqrt(total * q);
    if (c > 1.0 + 1e-9) throw NumericalError("classification error: cosine exceeds one");
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c) / kPi;
}

// log(erfc(x)), accurate where erfc underflows.
double log_erfc(double x) {
    if (x < 25.0) return std::log(std::erfc(x));
    const double x2 = x * x;
    const double s = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2);
    return -x2 - std::log(x * std::sqrt(kPi)) + std::log(s);
}

void require_alpha(double alpha) {
    if (!(alpha > 0) || !std::isfinite(alpha)) throw DomainError("alpha must be positive");
}

void require_isotropic(const GepProfile& p, const char* what) {
    if (!p.isotropic) throw DomainError(std::string(what) + " requires an isotropic input spectrum (unit atom)");
}

struct FeatureCoefficients {
    double k1sq;
    double kstar_sq;
};

FeatureCoefficients feature_coefficients(const Activation& act, double r) {
    const double mean = gaussian_moment(act, r, MomentWeight::Plain);
    if (std::abs(mean) > 1e-8) throw ModelError("feature activation " + act.name() + " is not zero-mean at r = " + std::to_string(r));
    const double k1 = gaussian_moment(act, r, MomentWeight::TimesZ) / r;
    const double ks = gaussian_moment(act, r, MomentWeight::Square) - r * k1 * k1;
    return {k1 * k1, std::max(0.0, ks)};
}

State<2> initial_qm(const GepProfile& p, const SolverConfig& cfg) {
    if (cfg.init) return {cfg.init->q, cfg.init->m};
    const double q = 0.01 * p.rho * p.mu1;
    return {q, q};
}

// Square-loss regression overlaps once V and V_hat are known:
// m = rho m_hat A, q = rho m_hat^2 B + q_hat C.
struct LinearBlock {
    double A, B, C;
};

CurvePoint finish_square_regression(const GepProfile& p, double alpha_eff, double V, double V_hat, LinearBlock blk,
                                    const SolverConfig& cfg, const char* what) {
    const double T = p.total_variance();
    const double m_hat = alpha_eff / (1.0 + V);
    Overlaps o;
    auto update = [&](const State<2>& x) {
        const double q_hat = alpha_eff * (T + x[0] - 2.0 * x[1]) / ((1.0 + V) * (1.0 + V));
        return State<2>{p.rho * m_hat * m_hat * blk.B + q_hat * blk.C, p.rho * m_hat * blk.A};
    };
    State<2> x = damped_iterate<2>(initial_qm(p, cfg), update, cfg, what, o.iterations, o.residual);
    o.V = V;
    o.V_hat = V_hat;
    o.m_hat = m_hat;
    o.q = x[0];
    o.m = x[1];
    o.q_hat = alpha_eff * (T + o.q - 2.0 * o.m) / ((1.0 + V) * (1.0 + V));
    CurvePoint cp;
    cp.overlaps = o;
    cp.error = T + o.q - 2.0 * o.m;
    return cp;
}

}  // namespace

std::string to_string(CurveKind kind) {
    switch (kind) {
        case CurveKind::BayesRegression: return "bayes_regression";
        case CurveKind::BayesClassification: return "bayes_classification";
        case CurveKind::Ridge: return "ridge";
        case CurveKind::RandomFeatures: return "random_features";
        case CurveKind::Kernel: return "kernel";
        case CurveKind::Logistic: return "logistic";
        case CurveKind::RidgeClassification: return "ridge_classification";
    }
    return "unknown";
}

CurvePoint bayes_regression(const GepProfile& p, const SpectralMeasure& mu, double alpha, const SolverConfig& cfg) {
    require_alpha(alpha);
    const double K1 = p.kappa1_product * p.kappa1_product;
    const double D = p.weight_product;
    const double prior = D * p.mu1;
    const double floor = std::max(p.eps_r * 1e-12, 1e-300);
    const double half = cfg.eq9_main_text ? 0.5 : 1.0;
    bool floored = false;
    auto eps_of = [&](double q) {
        double e = K1 * (prior - q) + p.eps_r;
        if (e <= floor) {
            e = floor;
            floored = true;
        }
        return e;
    };
    auto q_of = [&](double q_hat) {
        return half * mu.integrate([&](double z) { return q_hat * D * D * z * z / (1.0 + q_hat * D * z); });
    };
    Overlaps o;
    State<1> x{cfg.init ? cfg.init->q / K1 : 0.01 * p.rho * p.mu1 / K1};
    x = damped_iterate<1>(x, [&](const State<1>& s) { return State<1>{q_of(alpha * K1 / eps_of(s[0]))}; }, cfg,
                          "bayes_regression", o.iterations, o.residual);
    const double eps = eps_of(x[0]);
    o.q = o.m = K1 * x[0];
    o.q_hat = o.m_hat = alpha * K1 / eps;
    o.floored = floored;
    CurvePoint cp;
    cp.alpha = alpha;
    cp.kind = CurveKind::BayesRegression;
    cp.error = eps;
    cp.overlaps = o;
    return cp;
}

CurvePoint bayes_classification(const GepProfile& p, const SpectralMeasure& mu, double alpha, const SolverConfig& cfg) {
    require_alpha(alpha);
    const double K1 = p.kappa1_product * p.kappa1_product;
    const double D = p.weight_product;
    const double T = p.total_variance();
    const double c = 4.0 / std::pow(2.0 * kPi, 1.5);
    bool floored = false;
    auto q_hat_of = [&](double q) {
        const double qt = K1 * q;
        double V = T - qt;
        if (V <= T * 1e-14) {
            V = T * 1e-14;
            floored = true;
        }
        const double a = (T + qt) / V;
        const double b = std::sqrt(std::max(qt, 0.0) / (2.0 * V));
        const double I = integrate_gk(
            [&](double xi) { return std::exp(-0.5 * a * xi * xi - log_erfc(b * xi)); }, -10.0, 0.0, 1e-13) +
                         integrate_gk(
            [&](double xi) { return std::exp(-0.5 * a * xi * xi - log_erfc(b * xi)); }, 0.0, 10.0, 1e-13);
        return alpha * K1 / V * c * I;
    };
    auto q_of = [&](double q_hat) {
        return mu.integrate([&](double z) { return q_hat * D * D * z * z / (1.0 + q_hat * D * z); });
    };
    Overlaps o;
    State<1> x{cfg.init ? cfg.init->q / K1 : 0.01 * p.rho * p.mu1 / K1};
    x = damped_iterate<1>(x, [&](const State<1>& s) { return State<1>{q_of(q_hat_of(s[0]))}; }, cfg,
                          "bayes_classification", o.iterations, o.residual);
    o.q = o.m = K1 * x[0];
    o.q_hat = o.m_hat = q_hat_of(x[0]);
    o.floored = floored;
    CurvePoint cp;
    cp.alpha = alpha;
    cp.kind = CurveKind::BayesClassification;
    cp.error = arccos_error(o.q, o.q, T);
    cp.overlaps = o;
    return cp;
}

namespace {

// V(V_hat) = int z / (lambda + V_hat z) dmu with the positivity check on the support.
double ridge_V(const SpectralMeasure& mu, double lambda, double v) {
    const double zmin = mu.support_min(), zmax = mu.support_max();
    if (lambda + v * zmin <= 0 || lambda + v * zmax <= 0)
        throw DomainError("ridge: effective regularization non-positive");
    return mu.integrate([&](double z) { return z / (lambda + v * z); });
}

double ridge_vhat(const SpectralMeasure& mu, double alpha, double lambda) {
    const double zmin = mu.support_min();
    double lb = 0.0;
    if (lambda <= 0) {
        if (zmin <= 0) throw DomainError("ridge: effective regularization non-positive");
        lb = -lambda / zmin;
    }
    return solve_vhat([&](double v) { return ridge_V(mu, lambda, v); }, alpha, lambda, lb,
                      "ridge: effective regularization non-positive");
}

}  // namespace

CurvePoint ridge_regression(const GepProfile& p, const SpectralMeasure& mu, double alpha, double lambda,
                            const SolverConfig& cfg) {
    require_alpha(alpha);
    const double vh = ridge_vhat(mu, alpha, lambda);
    const double V = ridge_V(mu, lambda, vh);
    LinearBlock blk;
    blk.A = mu.integrate([&](double z) { return z * z / (lambda + vh * z); });
    blk.B = mu.integrate([&](double z) { const double d = lambda + vh * z; return z * z * z / (d * d); });
    blk.C = mu.integrate([&](double z) { const double d = lambda + vh * z; return z * z / (d * d); });
    CurvePoint cp = finish_square_regression(p, alpha, V, vh, blk, cfg, "ridge_regression");
    cp.alpha = alpha;
    cp.kind = CurveKind::Ridge;
    cp.lambda = lambda;
    return cp;
}

double optimal_lambda_ridge(const GepProfile& p) {
    if (!(p.rho > 0)) throw DomainError("optimal_lambda_ridge: rho must be positive");
    return p.eps_r / p.rho;
}

CurvePoint kernel_regression(const GepProfile& p, double alpha, double delta_f, const Activation& act, double lambda,
                             const SolverConfig& cfg) {
    require_alpha(alpha);
    require_isotropic(p, "kernel_regression");
    if (!(delta_f > 0)) throw DomainError("kernel_regression: delta_f must be positive");
    if (lambda == 0.0) throw DomainError("kernel_regression: lambda = 0 is not allowed");
    const FeatureCoefficients fc = feature_coefficients(act, delta_f * p.mu1);
    const double c = fc.k1sq * delta_f;
    const double b = fc.kstar_sq;
    if (!(c > 0)) throw DomainError("kernel_regression: kernel has no linear component");
    if (lambda + b <= 0) throw DomainError("kernel_regression: implicit regularization exhausted");
    // Solved as ridge with shift lambda + b; overlaps are reported in the form where
    // V = b / lambda + c / (lambda + V_hat c), related by V_hat = beta V_hat', 1 + V = (1 + V') / beta.
    const double shift = lambda + b;
    const double beta = lambda / shift;
    auto V_of = [&](double v) { return c / (shift + v * c); };
    const double vh = solve_vhat(V_of, alpha, shift, 0.0, "kernel_regression: implicit regularization exhausted");
    const double V = V_of(vh);
    const double den = shift + vh * c;
    LinearBlock blk{c / den, c * c / (den * den), c * c / (den * den)};
    CurvePoint cp = finish_square_regression(p, alpha, V, vh, blk, cfg, "kernel_regression");
    Overlaps& o = cp.overlaps;
    o.V = (1.0 + V) / beta - 1.0;
    o.V_hat = beta * vh;
    o.m_hat *= beta;
    o.q_hat *= beta * beta;
    cp.alpha = alpha;
    cp.kind = CurveKind::Kernel;
    cp.lambda = lambda;
    cp.delta_f = delta_f;
    cp.feature_activation = act;
    return cp;
}

double optimal_lambda_kernel(const GepProfile& p, double delta_f, const Activation& act) {
    const FeatureCoefficients fc = feature_coefficients(act, delta_f * p.mu1);
    return fc.k1sq * delta_f * (p.eps_r / p.rho) - fc.kstar_sq;
}

CurvePoint random_features(const GepProfile& p, double alpha, double gamma, double delta_f, const Activation& act,
                           double lambda, const SolverConfig& cfg) {
    require_alpha(alpha);
    require_isotropic(p, "random_features");
    if (!(gamma > 0) || !(delta_f > 0)) throw DomainError("random_features: gamma and delta_f must be positive");
    const FeatureCoefficients fc = feature_coefficients(act, delta_f * p.mu1);
    const double a = fc.k1sq, b = fc.kstar_sq;
    if (!(a > 0)) throw DomainError("random_features: feature map has no linear component");
    const MarchenkoPastur mp{gamma, delta_f};
    const double alpha_p = alpha / gamma;
    // with lambda + V_hat (a s + b) = V_hat a (s - z0)
    auto z0_of = [&](double v) { return -(lambda + v * b) / (v * a); };
    auto V_of = [&](double v) {
        if (!(v > 0)) throw DomainError("random_features: invalid conjugate variable");
        const StieltjesValue st = mp_stieltjes(mp, z0_of(v));
        return (a * st.h + b * st.g) / (v * a);
    };
    const double vh = solve_vhat(V_of, alpha_p, lambda, 0.0, "random_features: Stieltjes argument left the domain");
    const double V = V_of(vh);
    const StieltjesValue st = mp_stieltjes(mp, z0_of(vh));
    const double va = vh * a;
    LinearBlock blk;
    blk.A = gamma * a * st.h / va;
    blk.B = gamma * a * (a * st.k + b * st.h_prime) / (va * va);
    blk.C = (a * a * st.k + 2.0 * a * b * st.h_prime + b * b * st.g_prime) / (va * va);
    CurvePoint cp = finish_square_regression(p, alpha_p, V, vh, blk, cfg, "random_features");
    cp.alpha = alpha;
    cp.kind = CurveKind::RandomFeatures;
    cp.lambda = lambda;
    cp.gamma = gamma;
    cp.delta_f = delta_f;
    cp.feature_activation = act;
    return cp;
}

double logistic_force(double y, double omega, double V) {
    // g(u) = u - 1/(1 + exp(V u + y omega)) is increasing on [0, 1]
    auto sig = [](double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); };
    auto g = [&](double u) { return u - sig(-(V * u + y * omega)); };
    const double g0 = g(0.0), g1 = g(1.0);
    if (g0 >= 0) return 0.0;
    if (g1 <= 0) return 1.0;
    boost::uintmax_t max_it = 200;
    const auto [a, b] =
        boost::math::tools::toms748_solve(g, 0.0, 1.0, g0, g1, boost::math::tools::eps_tolerance<double>(52), max_it);
    const double u = 0.5 * (a + b);
    if (std::abs(g(u)) < 1e-12) return u;
    std::ostringstream os;
    os << "logistic_force: root search failed at y = " << y << ", omega = " << omega << ", V = " << V;
    throw NumericalError(os.str());
}

namespace {

void require_noiseless(const GepProfile& p, const char* what) {
    if (p.noise_var != 0.0) throw DomainError(std::string(what) + " requires noise variance 0");
}

struct ClassificationBlock {
    double A, B, C;
};

ClassificationBlock ridge_block(const SpectralMeasure& mu, double lambda, double vh) {
    ClassificationBlock blk;
    blk.A = mu.integrate([&](double z) { return z * z / (lambda + vh * z); });
    blk.B = mu.integrate([&](double z) { const double d = lambda + vh * z; return z * z * z / (d * d); });
    blk.C = mu.integrate([&](double z) { const double d = lambda + vh * z; return z * z / (d * d); });
    return blk;
}

}  // namespace

CurvePoint ridge_classification(const GepProfile& p, const SpectralMeasure& mu, double alpha, double lambda,
                                const SolverConfig& cfg) {
    require_alpha(alpha);
    require_noiseless(p, "ridge_classification");
    if (!(lambda > 0)) throw DomainError("ridge_classification: lambda must be positive");
    const double T = p.total_variance();
    const double c0 = std::sqrt(2.0 / (kPi * T));
    const double vh = ridge_vhat(mu, alpha, lambda);
    const double V = ridge_V(mu, lambda, vh);
    const ClassificationBlock blk = ridge_block(mu, lambda, vh);
    const double m_hat = c0 * alpha / (1.0 + V);
    auto q_hat_of = [&](double q, double m) { return alpha * (1.0 + q - 2.0 * c0 * m) / ((1.0 + V) * (1.0 + V)); };
    Overlaps o;
    auto update = [&](const State<2>& x) {
        return State<2>{p.rho * m_hat * m_hat * blk.B + q_hat_of(x[0], x[1]) * blk.C, p.rho * m_hat * blk.A};
    };
    State<2> x = damped_iterate<2>(initial_qm(p, cfg), update, cfg, "ridge_classification", o.iterations, o.residual);
    o.V = V;
    o.V_hat = vh;
    o.m_hat = m_hat;
    o.q = x[0];
    o.m = x[1];
    o.q_hat = q_hat_of(o.q, o.m);
    CurvePoint cp;
    cp.alpha = alpha;
    cp.kind = CurveKind::RidgeClassification;
    cp.lambda = lambda;
    cp.error = arccos_error(o.m, o.q, T);
    cp.overlaps = o;
    return cp;
}

CurvePoint logistic_regression(const GepProfile& p, const SpectralMeasure& mu, double alpha, double lambda,
                               const SolverConfig& cfg) {
    require_alpha(alpha);
    require_noiseless(p, "logistic_regression");
    if (!(lambda > 0)) throw DomainError("logistic_regression: lambda must be positive");
    const double T = p.total_variance();
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * kPi);
    struct Hats {
        double V_hat, q_hat, m_hat;
    };
    auto hats = [&](double V, double q, double m) {
        const double sq = std::sqrt(q);
        const double V0 = std::max(T - m * m / q, T * 1e-14);
        const double sV0 = std::sqrt(2.0 * V0);
        auto pieces = [&](double xi, int which) {
            const double w0 = m * xi / sq;
            const double om = sq * xi;
            double acc = 0.0;
            for (double y : {1.0, -1.0}) {
                const double u = logistic_force(y, om, V);
                const double Z = 0.5 * std::erfc(-y * w0 / sV0);
                if (which == 0) acc += Z * u * (1.0 - u) / (1.0 + V * u * (1.0 - u));
                else if (which == 1) acc += Z * u * u;
                else acc += u;
            }
            if (which == 2) acc *= std::exp(-w0 * w0 / (2.0 * V0)) * inv_sqrt2pi / std::sqrt(V0);
            return acc;
        };
        Hats h;
        h.V_hat = alpha * gaussian_expectation([&](double xi) { return pieces(xi, 0); });
        h.q_hat = alpha * gaussian_expectation([&](double xi) { return pieces(xi, 1); });
        h.m_hat = alpha * gaussian_expectation([&](double xi) { return pieces(xi, 2); });
        return h;
    };
    auto update = [&](const State<3>& x) {
        const double V = x[0], q = std::max(x[1], 1e-14), m = x[2];
        const Hats h = hats(V, q, m);
        const ClassificationBlock blk = ridge_block(mu, lambda, h.V_hat);
        const double Vn = mu.integrate([&](double z) { return z / (lambda + h.V_hat * z); });
        return State<3>{Vn, p.rho * h.m_hat * h.m_hat * blk.B + h.q_hat * blk.C, p.rho * h.m_hat * blk.A};
    };
    State<3> x0{1.0, 0.01 * T, 0.01 * T};
    if (cfg.init) x0 = {cfg.init->V, cfg.init->q, cfg.init->m};
    Overlaps o;
    const State<3> x = damped_iterate<3>(x0, update, cfg, "logistic_regression", o.iterations, o.residual);
    o.V = x[0];
    o.q = x[1];
    o.m = x[2];
    const Hats h = hats(o.V, std::max(o.q, 1e-14), o.m);
    o.V_hat = h.V_hat;
    o.q_hat = h.q_hat;
    o.m_hat = h.m_hat;
    CurvePoint cp;
    cp.alpha = alpha;
    cp.kind = CurveKind::Logistic;
    cp.lambda = lambda;
    cp.error = arccos_error(o.m, o.q, T);
    cp.overlaps = o;
    return cp;
}

double minimize_lambda(const std::function<double(double)>& err, double lo, double hi, double rel_tol) {
    if (!(lo > 0) || !(hi > lo)) throw DomainError("minimize_lambda: need 0 < lo < hi");
    const int bits = std::max(8, int(std::ceil(-std::log2(rel_tol))));
    boost::uintmax_t max_it = 200;
    const auto res = boost::math::tools::brent_find_minima(
        [&](double t) { return err(std::exp(t)); }, std::log(lo), std::log(hi), bits, max_it);
    return std::exp(res.first);
}

}  // namespace dtl
