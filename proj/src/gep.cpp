#include "dtl/gep.hpp"

#include <cmath>
#include <sstream>

#include "dtl/error.hpp"

namespace dtl {

void NetworkSpec::validate() const {
    const std::size_t L = activations.size();
    if (L == 0) throw ModelError("network spec: depth must be at least 1");
    if (widths.size() != L || weight_vars.size() != L)
        throw ModelError("network spec: widths, weight_vars and activations must have equal length");
    for (std::size_t l = 0; l < L; ++l) {
        if (!(widths[l] > 0)) throw ModelError("network spec: width ratio of layer " + std::to_string(l + 1) + " must be positive");
        if (!(weight_vars[l] > 0))
            throw ModelError("network spec: weight variance of layer " + std::to_string(l + 1) + " must be positive");
    }
    if (!(readout_var > 0)) throw ModelError("network spec: readout variance must be positive");
    if (!(noise_var >= 0)) throw ModelError("network spec: noise variance must be non-negative");
}

NetworkSpec NetworkSpec::uniform(int depth, const Activation& act, double width) {
    NetworkSpec s;
    s.widths.assign(depth, width);
    s.weight_vars.assign(depth, 1.0);
    s.activations.assign(depth, act);
    return s;
}

GepProfile propagate(const NetworkSpec& spec) {
    spec.validate();
    const int L = spec.depth();
    GepProfile p;
    p.mu1 = spec.input_spectrum.moment(1);
    p.isotropic = spec.input_spectrum.is_delta_one();
    p.noise_var = spec.noise_var;
    double r = spec.weight_vars[0] * p.mu1;
    double second = 0.0;
    for (int l = 0; l < L; ++l) {
        const Activation& act = spec.activations[l];
        const double mean = gaussian_moment(act, r, MomentWeight::Plain);
        if (std::abs(mean) > 1e-8) {
            std::ostringstream os;
            os << "layer " << l + 1 << " (" << act.name() << ") has Gaussian mean " << mean << " at r = " << r
               << "; activations must be zero-mean at their operating variance";
            throw ModelError(os.str());
        }
        if (!act.is_odd()) p.warnings.push_back("layer " + std::to_string(l + 1) + " activation " + act.name() + " is not odd");
        const double k1 = gaussian_moment(act, r, MomentWeight::TimesZ) / r;
        second = gaussian_moment(act, r, MomentWeight::Square);
        const double ks2 = second - r * k1 * k1;
        if (ks2 < -1e-10) throw NumericalError("negative residual variance at layer " + std::to_string(l + 1));
        p.r.push_back(r);
        p.kappa1.push_back(k1);
        p.kappa_star.push_back(std::sqrt(std::max(0.0, ks2)));
        if (l + 1 < L) r = spec.weight_vars[l + 1] * second;
    }
    double rho = spec.readout_var;
    for (int l = 0; l < L; ++l) rho *= p.kappa1[l] * p.kappa1[l] * spec.weight_vars[l];
    double eps = spec.noise_var + p.kappa_star[L - 1] * p.kappa_star[L - 1] * spec.readout_var;
    for (int l0 = 0; l0 + 1 < L; ++l0) {
        double t = p.kappa_star[l0] * p.kappa_star[l0] * spec.readout_var;
        for (int l = l0 + 1; l < L; ++l) t *= p.kappa1[l] * p.kappa1[l] * spec.weight_vars[l];
        eps += t;
    }
    p.rho = rho;
    p.eps_r = eps;
    p.check_q = spec.readout_var * second;
    p.kappa1_product = 1.0;
    p.weight_product = spec.readout_var;
    for (int l = 0; l < L; ++l) {
        p.kappa1_product *= p.kappa1[l];
        p.weight_product *= spec.weight_vars[l];
    }
    return p;
}

std::pair<double, double> equivalent_shallow(const GepProfile& profile) { return {profile.rho, profile.eps_r}; }

NetworkSpec collapsed_spec(const GepProfile& profile, const SpectralMeasure& mu) {
    NetworkSpec s = NetworkSpec::uniform(1, Activation::identity());
    s.weight_vars[0] = profile.rho;
    s.noise_var = profile.eps_r;
    s.input_spectrum = mu;
    return s;
}

}  // namespace dtl
