#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dtl/gep.hpp"
#include "dtl/network.hpp"

namespace dtl {

// Omega_layer = kappa1^2 W Omega_{layer-1} W^T / k_{layer-1} + kappa*^2 I, Omega_0 = sigma.
Eigen::MatrixXd theory_covariance(const NetworkSpec& spec, const WeightSet& weights, int layer,
                                  const Eigen::MatrixXd& sigma);

// Population cross-covariance E[h*_{layer_star} h_layer^T] of two independent networks fed the same input.
Eigen::MatrixXd cross_covariance(const NetworkSpec& spec_star, const WeightSet& weights_star, int layer_star,
                                 const NetworkSpec& spec, const WeightSet& weights, int layer,
                                 const Eigen::MatrixXd& sigma);

// Sample second-moment matrices of post-activations over x ~ N(0, sigma).
std::map<int, Eigen::MatrixXd> empirical_covariances(const NetworkSpec& spec, const WeightSet& weights,
                                                     const std::vector<int>& layers, long n_samples,
                                                     std::uint64_t seed, const Eigen::MatrixXd& sigma);
Eigen::MatrixXd empirical_covariance(const NetworkSpec& spec, const WeightSet& weights, int layer, long n_samples,
                                     std::uint64_t seed, const Eigen::MatrixXd& sigma);

Eigen::MatrixXd empirical_cross_covariance(const NetworkSpec& spec_star, const WeightSet& weights_star, int layer_star,
                                           const NetworkSpec& spec, const WeightSet& weights, int layer,
                                           long n_samples, std::uint64_t seed, const Eigen::MatrixXd& sigma);

// ||emp - theory||_F^2 / ||emp||_F^2
double rel_frobenius(const Eigen::MatrixXd& empirical, const Eigen::MatrixXd& theory);

struct CovarianceReport {
    int layer = 0;
    Eigen::MatrixXd theory;
    Eigen::MatrixXd empirical;
    double rel_frobenius = 0.0;
    long n_samples = 0;
};

std::vector<CovarianceReport> covariance_check(const NetworkSpec& spec, const WeightSet& weights,
                                               const std::vector<int>& layers, long n_samples, std::uint64_t seed);

// Unbiased cumulant estimators (k-statistics) of the given order, 1 <= order <= 8.
double k_statistic(const Eigen::VectorXd& x, int order);

struct GaussianityReport {
    std::map<int, double> cumulants;  // orders 3, 4, 6, 8
    double ks_statistic = 0.0;
    std::vector<std::pair<double, double>> qq_points;
    double scaled_variance = 0.0;
    long n_samples = 0;
};

GaussianityReport gaussianity_diagnostics(const NetworkSpec& spec, const WeightSet& weights, long n_samples,
                                          std::uint64_t seed);

// Little-endian float64 dump: 8-byte magic, 4-byte rows, 4-byte cols, then column-major data.
void write_matrix_binary(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_binary(const std::string& path);

}  // namespace dtl
