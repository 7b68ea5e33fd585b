#pragma once

#include <functional>
#include <optional>
#include <string>

#include "dtl/activations.hpp"
#include "dtl/gep.hpp"
#include "dtl/spectrum.hpp"

namespace dtl {

// Overlaps are reported in output units: q is the second moment of the
// learned predictor's output and m its correlation with the linear part of the
// target. Hats are the conjugate variables in the same units.
struct Overlaps {
    double V = 0.0, q = 0.0, m = 0.0;
    double V_hat = 0.0, q_hat = 0.0, m_hat = 0.0;
    long iterations = 0;
    double residual = 0.0;
    bool floored = false;
};

struct SolverConfig {
    double damping = 0.5;
    double tol = 1e-10;
    long max_iter = 100000;
    std::optional<Overlaps> init;
    bool eq9_main_text = false;  // halve the Bayes self-overlap update
};

enum class CurveKind { BayesRegression, BayesClassification, Ridge, RandomFeatures, Kernel, Logistic, RidgeClassification };

std::string to_string(CurveKind kind);

struct CurvePoint {
    double alpha = 0.0;
    double error = 0.0;
    CurveKind kind = CurveKind::BayesRegression;
    double lambda = 0.0;
    double gamma = 0.0;
    double delta_f = 0.0;
    std::optional<Activation> feature_activation;
    Overlaps overlaps;
};

CurvePoint bayes_regression(const GepProfile& profile, const SpectralMeasure& mu, double alpha, const SolverConfig& cfg = {});
CurvePoint bayes_classification(const GepProfile& profile, const SpectralMeasure& mu, double alpha,
                                const SolverConfig& cfg = {});

CurvePoint ridge_regression(const GepProfile& profile, const SpectralMeasure& mu, double alpha, double lambda,
                            const SolverConfig& cfg = {});
double optimal_lambda_ridge(const GepProfile& profile);

CurvePoint random_features(const GepProfile& profile, double alpha, double gamma, double delta_f,
                           const Activation& rf_activation, double lambda, const SolverConfig& cfg = {});

CurvePoint kernel_regression(const GepProfile& profile, double alpha, double delta_f, const Activation& kernel_activation,
                             double lambda, const SolverConfig& cfg = {});
double optimal_lambda_kernel(const GepProfile& profile, double delta_f, const Activation& kernel_activation);

CurvePoint logistic_regression(const GepProfile& profile, const SpectralMeasure& mu, double alpha, double lambda,
                               const SolverConfig& cfg = {});
CurvePoint ridge_classification(const GepProfile& profile, const SpectralMeasure& mu, double alpha, double lambda,
                                const SolverConfig& cfg = {});

// Solution u in (0, 1) of u = 1 / (1 + exp(V u + y omega)); the logistic proximal force is f = y u.
double logistic_force(double y, double omega, double V);

// Minimizes err(lambda) over [lo, hi] on a log scale (Brent).
double minimize_lambda(const std::function<double(double)>& err, double lo, double hi, double rel_tol = 1e-6);

}  // namespace dtl
