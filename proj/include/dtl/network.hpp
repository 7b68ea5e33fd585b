#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dtl/gep.hpp"

namespace dtl {

struct WeightSet {
    std::vector<Eigen::MatrixXd> layers;  // W_l is k_l x k_{l-1}, k_0 = d
    Eigen::VectorXd readout;
    std::uint64_t seed = 0;

    int input_dim() const { return layers.empty() ? 0 : int(layers.front().cols()); }
    int width(int layer) const;  // k_layer, layer 0 is the input
};

std::vector<int> layer_widths(const NetworkSpec& spec, int d);

WeightSet sample_target(const NetworkSpec& spec, int d, std::uint64_t seed);

void check_shapes(const NetworkSpec& spec, const WeightSet& w);

// Per-coordinate standard deviations of a diagonal covariance whose empirical
// spectrum follows the spec's input spectrum.
Eigen::VectorXd input_scales(const SpectralMeasure& mu, int d);

// Inputs x ~ N(0, diag(scales^2)), rows are samples; row i draws from stream
// (seed, "inputs", first_row + i).
Eigen::MatrixXd sample_inputs(const Eigen::VectorXd& scales, Eigen::Index n, std::uint64_t seed,
                              std::uint64_t first_row = 0);

// Post-activations of layer `layer` (rows are samples); layer 0 returns X.
Eigen::MatrixXd forward(const NetworkSpec& spec, const WeightSet& w, const Eigen::MatrixXd& X, int layer);

// Noiseless network output a^T h_L / sqrt(k_L).
Eigen::VectorXd network_output(const NetworkSpec& spec, const WeightSet& w, const Eigen::MatrixXd& X);

}  // namespace dtl
