#include "dtl/network.hpp"

#include <algorithm>
#include <cmath>

#include "dtl/error.hpp"
#include "dtl/rng.hpp"

namespace dtl {

int WeightSet::width(int layer) const {
    if (layer == 0) return input_dim();
    return int(layers.at(layer - 1).rows());
}

std::vector<int> layer_widths(const NetworkSpec& spec, int d) {
    std::vector<int> k{d};
    for (double g : spec.widths) {
        const int kl = int(std::lround(g * d));
        if (kl < 1) throw ModelError("layer width rounds to zero");
        k.push_back(kl);
    }
    return k;
}

WeightSet sample_target(const NetworkSpec& spec, int d, std::uint64_t seed) {
    spec.validate();
    if (d < 2) throw DomainError("sample_target: d must be at least 2");
    const std::vector<int> k = layer_widths(spec, d);
    WeightSet w;
    w.seed = seed;
    for (int l = 0; l < spec.depth(); ++l) {
        Stream s(seed, "target-weights", std::uint64_t(l));
        w.layers.push_back(s.normal_matrix(k[l + 1], k[l], std::sqrt(spec.weight_vars[l])));
    }
    Stream s(seed, "target-readout");
    w.readout = s.normal_vector(k.back(), std::sqrt(spec.readout_var));
    return w;
}

void check_shapes(const NetworkSpec& spec, const WeightSet& w) {
    if (int(w.layers.size()) != spec.depth()) throw ModelError("weight set depth does not match the spec");
    for (std::size_t l = 1; l < w.layers.size(); ++l)
        if (w.layers[l].cols() != w.layers[l - 1].rows()) throw ModelError("weight set: inconsistent layer shapes");
    if (w.readout.size() != w.layers.back().rows()) throw ModelError("weight set: readout length mismatch");
}

Eigen::VectorXd input_scales(const SpectralMeasure& mu, int d) {
    Eigen::VectorXd s(d);
    if (mu.is_delta_one()) {
        s.setOnes();
        return s;
    }
    // quantile of the measure at the midpoint of each of d equal-mass cells
    std::vector<std::pair<double, double>> pts(mu.atoms());
    if (mu.density()) {
        const auto& g = mu.density()->grid;
        const auto& v = mu.density()->values;
        for (std::size_t i = 0; i + 1 < g.size(); ++i) {
            const int sub = 16;
            for (int j = 0; j < sub; ++j) {
                const double a = g[i] + (g[i + 1] - g[i]) * j / sub, b = g[i] + (g[i + 1] - g[i]) * (j + 1) / sub;
                const double fa = v[i] + (v[i + 1] - v[i]) * (a - g[i]) / (g[i + 1] - g[i]);
                const double fb = v[i] + (v[i + 1] - v[i]) * (b - g[i]) / (g[i + 1] - g[i]);
                const double m = 0.5 * (fa + fb) * (b - a);
                if (m > 0) pts.emplace_back(0.5 * (a + b), m);
            }
        }
    }
    std::sort(pts.begin(), pts.end());
    double cum = 0.0;
    std::size_t j = 0;
    for (int i = 0; i < d; ++i) {
        const double target = (i + 0.5) / d;
        while (j + 1 < pts.size() && cum + pts[j].second < target) cum += pts[j++].second;
        s(i) = std::sqrt(pts[j].first);
    }
    return s;
}

Eigen::MatrixXd sample_inputs(const Eigen::VectorXd& scales, Eigen::Index n, std::uint64_t seed, std::uint64_t first_row) {
    Eigen::MatrixXd X(n, scales.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        Stream s(seed, "inputs", first_row + std::uint64_t(i));
        for (Eigen::Index j = 0; j < scales.size(); ++j) X(i, j) = scales(j) * s.normal();
    }
    return X;
}

Eigen::MatrixXd forward(const NetworkSpec& spec, const WeightSet& w, const Eigen::MatrixXd& X, int layer) {
    check_shapes(spec, w);
    if (layer < 0 || layer > spec.depth()) throw DomainError("forward: layer out of range");
    if (X.cols() != w.input_dim()) throw ModelError("forward: input dimension mismatch");
    Eigen::MatrixXd h = X;
    for (int l = 0; l < layer; ++l) {
        Eigen::MatrixXd pre = (h * w.layers[l].transpose()) / std::sqrt(double(w.layers[l].cols()));
        apply(spec.activations[l], pre);
        h = std::move(pre);
    }
    return h;
}

Eigen::VectorXd network_output(const NetworkSpec& spec, const WeightSet& w, const Eigen::MatrixXd& X) {
    const Eigen::MatrixXd h = forward(spec, w, X, spec.depth());
    return h * w.readout / std::sqrt(double(w.readout.size()));
}

}  // namespace dtl
