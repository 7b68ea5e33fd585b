#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dtl/activations.hpp"
#include "dtl/spectrum.hpp"

namespace dtl {

struct NetworkSpec {
    std::vector<double> widths;       // gamma_l = k_l / d
    std::vector<double> weight_vars;  // Delta_l
    double readout_var = 1.0;         // Delta_a
    double noise_var = 0.0;           // Delta
    std::vector<Activation> activations;
    SpectralMeasure input_spectrum;

    int depth() const { return int(activations.size()); }
    void validate() const;

    // L layers of one activation with all variances equal to one.
    static NetworkSpec uniform(int depth, const Activation& act, double width = 1.0);
};

struct GepProfile {
    std::vector<double> r;
    std::vector<double> kappa1;
    std::vector<double> kappa_star;
    double rho = 0.0;
    double eps_r = 0.0;
    double check_q = 0.0;  // output variance of the noiseless network

    // quantities consumed by the saddle-point solvers
    double mu1 = 1.0;              // first moment of the input spectrum
    bool isotropic = true;         // spectrum is a unit atom
    double noise_var = 0.0;
    double kappa1_product = 1.0;   // prod kappa1
    double weight_product = 1.0;   // Delta_a prod Delta_l
    std::vector<std::string> warnings;

    double total_variance() const { return rho * mu1 + eps_r; }
};

GepProfile propagate(const NetworkSpec& spec);

// (rho, eps_r) of the equivalent single-layer target.
std::pair<double, double> equivalent_shallow(const GepProfile& profile);

// Linear single-layer spec sharing the Bayes curve of the given profile.
NetworkSpec collapsed_spec(const GepProfile& profile, const SpectralMeasure& mu);

}  // namespace dtl
