#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtl/activations.hpp"
#include "dtl/gep.hpp"
#include "dtl/network.hpp"

namespace dtl {

enum class Task { Regression, Classification };

struct Dataset {
    Eigen::MatrixXd X;  // n x d
    Eigen::VectorXd y;
    int d = 0;
    long n = 0;
    std::uint64_t generator_seed = 0;
    Task task = Task::Regression;
};

struct ErmResult {
    std::string method;
    double lambda = 0.0;
    double train_loss = 0.0;
    double test_error = 0.0;
    double test_std_error = 0.0;
    long n_test = 0;
    long n_train = 0;
    double wallclock = 0.0;
    std::uint64_t seed = 0;
};

// Labels y = f*(a^T h_L / sqrt(k_L) + sqrt(Delta) xi); sample i uses stream index first_row + i.
Dataset generate(const NetworkSpec& spec, const WeightSet& weights, long n, Task task, std::uint64_t seed,
                 std::uint64_t first_row = 0);

// Exact minimiser of sum (y - w.x/sqrt(d))^2 + (lambda/2) |w|^2.
Eigen::VectorXd ridge_weights(const Dataset& train, double lambda);
ErmResult fit_ridge(const Dataset& train, double lambda, const Dataset& test);

// Minimiser of sum (y - w.x/sqrt(d))^2 / 2 + (lambda/2) |w|^2 scored by sign agreement.
ErmResult fit_ridge_classification(const Dataset& train, double lambda, const Dataset& test);

enum class KernelKind { ArcCosine0, ArcCosine1, ArcSine, Nngp };

struct KernelSpec {
    KernelKind kind = KernelKind::ArcCosine1;
    Activation activation;  // Nngp only
    double delta_f = 1.0;   // Nngp only
    int quadrature_order = 48;

    // Closed form for (|x|^2/d, |x'|^2/d, x.x'/d).
    double operator()(double n1, double n2, double c) const;
    std::string name() const;
};

KernelSpec nngp_kernel(const Activation& act, double delta_f);

Eigen::MatrixXd gram(const KernelSpec& k, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

struct KernelOptions {
    long max_n = 20000;
};

// Kernel limit of the random-features risk: solves (K + (lambda/2) I) c = y.
ErmResult fit_kernel(const Dataset& train, const KernelSpec& kernel, double lambda, const Dataset& test,
                     const KernelOptions& opt = {});

// Solves for several lambdas, reusing the Gram matrices.
std::vector<ErmResult> fit_kernel_path(const Dataset& train, const KernelSpec& kernel,
                                       const std::vector<double>& lambdas, const Dataset& test,
                                       const KernelOptions& opt = {});

// Random features sigma(F x / sqrt(d)) / sqrt(k) with F_ij ~ N(0, delta_f).
ErmResult fit_random_features(const Dataset& train, int k_features, const Activation& act, double delta_f,
                              double lambda, std::uint64_t seed, const Dataset& test,
                              const std::optional<Eigen::MatrixXd>& feature_override = std::nullopt);

// Logistic loss with ridge penalty, Newton with backtracking.
ErmResult fit_logistic(const Dataset& train, double lambda, const Dataset& test, Eigen::VectorXd* w_out = nullptr);

enum class SweepMethod { Ridge, Kernel };

struct SweepOptions {
    KernelSpec kernel;
    long n_test = 10000;
    long n_validation = 2000;
    std::vector<double> lambda_factors;  // multiplicative refinement around the theory start
    long max_n = 20000;
};

// n = c d^2 for each c; lambda picked on a held-out validation set.
std::vector<ErmResult> quadratic_regime_sweep(const NetworkSpec& spec, int d, const std::vector<double>& n_over_d2,
                                              const std::vector<SweepMethod>& methods,
                                              const std::vector<std::uint64_t>& seeds, const SweepOptions& opt = {});

// Runs f(0..trials-1) on a worker pool; results are ordered by trial index.
std::vector<double> run_trials(int trials, const std::function<double(int)>& f, int workers = 0);

struct MeanStd {
    double mean = 0.0;
    double std_error = 0.0;
    long count = 0;
};

MeanStd summarize(const std::vector<double>& values);

}  // namespace dtl
