#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtl/covariance.hpp"
#include "dtl/error.hpp"
#include "dtl/gep.hpp"
#include "dtl/network.hpp"
#include "dtl/simulator.hpp"
#include "dtl/theory.hpp"

using namespace dtl;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* title;
    double budget_seconds;
    std::function<Outcome()> run;
};

bool g_fast = false;

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

NetworkSpec random_spec(std::mt19937_64& gen, int L, double noise, bool smooth = false) {
    std::uniform_int_distribution<int> pick(0, smooth ? 1 : 2);
    std::uniform_real_distribution<double> var(0.5, 2.0);
    const Activation acts[] = {Activation::tanh_scale(2), Activation::erf_scale(2), Activation::sign()};
    NetworkSpec s;
    for (int l = 0; l < L; ++l) {
        s.activations.push_back(acts[pick(gen)]);
        s.widths.push_back(var(gen));
        s.weight_vars.push_back(var(gen));
    }
    s.readout_var = var(gen);
    s.noise_var = noise;
    return s;
}

// depth and noise are stratified and the first spec is shallow, noiseless and smooth;
// everything else is drawn at random
std::vector<NetworkSpec> identity_specs() {
    std::mt19937_64 gen(20240611);
    const int depths[] = {1, 2, 3, 1, 2};
    const double noises[] = {0.0, 0.2, 0.0, 0.2, 0.0};
    std::vector<NetworkSpec> specs;
    for (int i = 0; i < 5; ++i) specs.push_back(random_spec(gen, depths[i], noises[i], i == 0));
    return specs;
}

const std::vector<double> kAlphas = {0.5, 1.0, 2.0, 4.0};

Outcome ridge_identity() {
    double worst = 0.0;
    for (const NetworkSpec& s : identity_specs()) {
        const GepProfile p = propagate(s);
        const double lam = optimal_lambda_ridge(p);
        for (double a : kAlphas)
            worst = std::max(worst, std::abs(ridge_regression(p, s.input_spectrum, a, lam).error -
                                             bayes_regression(p, s.input_spectrum, a).error));
    }
    return {worst <= 1e-8, fmt("max |ridge(lambda*) - bayes| = %.2e over 5 specs x 4 alphas", worst)};
}

Outcome kernel_identity() {
    double worst = 0.0, most_negative = INFINITY;
    int negatives = 0;
    for (const NetworkSpec& s : identity_specs()) {
        const GepProfile p = propagate(s);
        for (const Activation& k : {Activation::tanh_scale(2), Activation::sign()}) {
            const double lam = optimal_lambda_kernel(p, 1.0, k);
            most_negative = std::min(most_negative, lam);
            negatives += lam < 0;
            for (double a : kAlphas)
                worst = std::max(worst, std::abs(kernel_regression(p, a, 1.0, k, lam).error -
                                                 bayes_regression(p, s.input_spectrum, a).error));
        }
    }
    return {worst <= 1e-8 && negatives > 0,
            fmt("max |kernel(lambda*) - bayes| = %.2e, %d of 10 lambda* negative (min %.4f)", worst, negatives,
                most_negative)};
}

Outcome fig3_lambda() {
    const GepProfile p = propagate(NetworkSpec::uniform(1, Activation::tanh_scale(2), 1.4));
    const double lam = optimal_lambda_kernel(p, 1.0, Activation::sign());
    return {std::abs(lam + 0.24) <= 0.02, fmt("lambda* = %.6f", lam)};
}

Outcome ridge_monte_carlo() {
    const int d = g_fast ? 200 : 500;
    const int trials = 30;
    const NetworkSpec s = NetworkSpec::uniform(1, Activation::tanh_scale(2), 1.4);
    const GepProfile p = propagate(s);
    const double lam = optimal_lambda_ridge(p);
    bool ok = true;
    std::string detail = fmt("d=%d:", d);
    for (double a : kAlphas) {
        const double bayes = bayes_regression(p, s.input_spectrum, a).error;
        const auto errs = run_trials(trials, [&](int t) {
            const std::uint64_t seed = 1000 + std::uint64_t(t);
            const WeightSet w = sample_target(s, d, seed);
            const Dataset train = generate(s, w, std::lround(a * d), Task::Regression, seed);
            const Dataset test = generate(s, w, 10000, Task::Regression, seed, 1ull << 40);
            return fit_ridge(train, 2.0 * lam, test).test_error;
        });
        const MeanStd m = summarize(errs);
        const bool hit = std::abs(m.mean - bayes) <= 3.0 * m.std_error;
        ok = ok && hit;
        detail += fmt(" a=%g %.4f+-%.4f vs %.4f%s", a, m.mean, m.std_error, bayes, hit ? "" : "(!)");
    }
    return {ok, detail};
}

Outcome covariance_recursion() {
    const int d = 500;
    const long n = 100000;
    struct Case {
        const char* name;
        Activation act;
        double limit;
    };
    const Case cases[] = {{"tanh", Activation::tanh_scale(1), 0.02},
                          {"sign", Activation::sign(), 0.025},
                          {"erf", Activation::erf_scale(1), 0.02}};
    bool ok = true;
    std::string detail;
    for (const Case& c : cases) {
        const NetworkSpec s = NetworkSpec::uniform(7, c.act);
        const WeightSet w = sample_target(s, d, 7);
        const auto reps = covariance_check(s, w, {4, 7}, n, 11);
        double worst = 0.0;
        for (const auto& r : reps) worst = std::max(worst, r.rel_frobenius);
        ok = ok && worst <= c.limit;
        detail += fmt("%s%s l4=%.4f l7=%.4f (<= %g)", detail.empty() ? "" : ", ", c.name, reps[0].rel_frobenius,
                      reps[1].rel_frobenius, c.limit);
    }
    return {ok, detail};
}

Outcome gaussianity_suppression() {
    const NetworkSpec s = NetworkSpec::uniform(3, Activation::tanh_scale(2));
    const long n = 50000;
    auto median_k4 = [&](int d) {
        std::vector<double> k4;
        for (std::uint64_t draw = 0; draw < 10; ++draw)
            k4.push_back(std::abs(gaussianity_diagnostics(s, sample_target(s, d, 500 + draw), n, 900 + draw).cumulants.at(4)));
        return median(k4);
    };
    const double small = median_k4(100), large = median_k4(1000);
    return {large < small, fmt("median |k4|: d=100 %.4f, d=1000 %.4f", small, large)};
}

Outcome classification_gaps() {
    const NetworkSpec s = NetworkSpec::uniform(2, Activation::tanh_scale(2), 1.4);
    const GepProfile p = propagate(s);
    bool ok = true;
    std::string detail;
    for (double a : {2.0, 3.0, 4.0}) {
        const double bayes = bayes_classification(p, s.input_spectrum, a).error;
        const auto lg = [&](double l) { return logistic_regression(p, s.input_spectrum, a, l).error; };
        const auto rc = [&](double l) { return ridge_classification(p, s.input_spectrum, a, l).error; };
        const double el = lg(minimize_lambda(lg, 1e-3, 10.0));
        const double er = rc(minimize_lambda(rc, 1e-3, 10.0));
        const double gl = el - bayes, gr = er - bayes;
        ok = ok && gl > 0 && gl < 1e-2 && gr > 0 && gr < 1e-2 && el <= er;
        detail += fmt("%sa=%g gaps logistic %.2e ridge %.2e", detail.empty() ? "" : ", ", a, gl, gr);
    }
    return {ok, detail};
}

// Exact population residual of the best linear predictor for a one-hidden-layer ShiftedRelu target.
double best_linear_residual(const NetworkSpec& s, const WeightSet& w) {
    const Eigen::MatrixXd& W = w.layers[0];
    const double d = double(W.cols()), k = double(W.rows());
    const Eigen::MatrixXd G = gram(nngp_kernel(s.activations[0], 1.0), W, W);
    const double second = w.readout.dot(G * w.readout) / k;
    // E[x sigma(u)] = (w / sqrt d) E[u sigma(u)] / var(u), and E[u relu(u)] / var(u) = 1/2
    const Eigen::VectorXd theta = W.transpose() * w.readout * (0.5 / std::sqrt(d * k));
    return second - theta.squaredNorm() + s.noise_var;
}

Outcome quadratic_regime() {
    const int d = 30;
    const NetworkSpec s = NetworkSpec::uniform(1, Activation::shifted_relu(), 20.0 / 30.0);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 10; ++i) seeds.push_back(100 + i);
    SweepOptions opt;
    opt.kernel.kind = KernelKind::ArcCosine1;
    opt.n_test = 20000;
    const auto res = quadratic_regime_sweep(s, d, {3.0}, {SweepMethod::Ridge, SweepMethod::Kernel}, seeds, opt);
    std::vector<double> ridge, kernel, gaps;
    for (const auto& r : res) {
        if (r.method == "ridge") {
            ridge.push_back(r.test_error);
            const double n = double(r.n_train);
            const double plateau = best_linear_residual(s, sample_target(s, d, r.seed)) * (1.0 + d / (n - d - 1.0));
            gaps.push_back(r.test_error - plateau);
        } else {
            kernel.push_back(r.test_error);
        }
    }
    const double ratio = median(ridge) / median(kernel);
    const MeanStd g = summarize(gaps);
    const bool plateau_ok = std::abs(g.mean) <= 3.0 * g.std_error;
    return {ratio >= 2.0 && plateau_ok,
            fmt("median ridge %.4f, kernel %.4f, ratio %.2f; ridge - linear plateau %.2e +- %.1e", median(ridge),
                median(kernel), ratio, g.mean, g.std_error)};
}

Outcome limiting_cases() {
    std::vector<NetworkSpec> specs = identity_specs();
    specs.push_back(NetworkSpec::uniform(2, Activation::tanh_scale(2), 1.4));
    double prior_gap = 0.0, large_gap = 0.0, damping_gap = 0.0;
    int violations = 0;
    std::vector<double> grid;
    for (int i = 0; i < 20; ++i) grid.push_back(0.05 * std::pow(400.0, i / 19.0));
    SolverConfig slow, fast;
    slow.damping = 0.3;
    fast.damping = 0.7;
    slow.tol = fast.tol = 1e-12;
    for (const NetworkSpec& s : specs) {
        const GepProfile p = propagate(s);
        const SpectralMeasure& mu = s.input_spectrum;
        const double prior = p.total_variance();
        const double tiny = 1e-12;
        prior_gap = std::max({prior_gap, std::abs(bayes_regression(p, mu, tiny).error - prior),
                              std::abs(ridge_regression(p, mu, tiny, optimal_lambda_ridge(p)).error - prior),
                              std::abs(bayes_classification(p, mu, tiny).error - 0.5)});
        if (p.noise_var == 0.0) prior_gap = std::max(prior_gap, std::abs(logistic_regression(p, mu, tiny, 0.1).error - 0.5));
        large_gap = std::max(large_gap, std::abs(bayes_regression(p, mu, 1e4).error - p.eps_r));
        double last_r = INFINITY, last_c = INFINITY;
        for (double a : grid) {
            const double er = bayes_regression(p, mu, a).error, ec = bayes_classification(p, mu, a).error;
            violations += er > last_r + 1e-12;
            violations += ec > last_c + 1e-12;
            last_r = er;
            last_c = ec;
        }
        for (double a : {0.5, 2.0})
            damping_gap = std::max({damping_gap,
                                    std::abs(bayes_regression(p, mu, a, slow).error - bayes_regression(p, mu, a, fast).error),
                                    std::abs(bayes_classification(p, mu, a, slow).error -
                                             bayes_classification(p, mu, a, fast).error)});
    }
    return {prior_gap <= 1e-6 && large_gap <= 1e-3 && violations == 0 && damping_gap <= 1e-8,
            fmt("prior %.1e, alpha=1e4 %.1e, monotonicity violations %d, damping %.1e", prior_gap, large_gap,
                violations, damping_gap)};
}

Outcome shallow_consistency() {
    std::mt19937_64 gen(77);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        const NetworkSpec s = random_spec(gen, 2 + i, i == 1 ? 0.2 : 0.0);
        const GepProfile p = propagate(s);
        const NetworkSpec flat = collapsed_spec(p, s.input_spectrum);
        const GepProfile q = propagate(flat);
        for (double a : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0})
            worst = std::max(worst, std::abs(bayes_regression(p, s.input_spectrum, a).error -
                                             bayes_regression(q, flat.input_spectrum, a).error));
    }
    return {worst <= 1e-9, fmt("max |deep - collapsed| = %.2e over 3 specs x 6 alphas", worst)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    app.add_option("criteria", only, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
    app.add_flag("--fast", g_fast, "Run the Monte Carlo criterion at d=200");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all = {
        Criterion{1, "ridge optimality identity", 10.0, ridge_identity},
        Criterion{2, "kernel optimality identity", 10.0, kernel_identity},
        Criterion{3, "arc-cosine kernel optimal lambda", 1.0, fig3_lambda},
        Criterion{4, "ridge Monte Carlo vs Bayes", 1200.0, ridge_monte_carlo},
        Criterion{5, "covariance recursion", 600.0, covariance_recursion},
        Criterion{6, "Gaussianity suppression", 300.0, gaussianity_suppression},
        Criterion{7, "classification near-optimality", 30.0, classification_gaps},
        Criterion{8, "quadratic-regime ordering", 600.0, quadratic_regime},
        Criterion{9, "limiting cases", 30.0, limiting_cases},
        Criterion{10, "equivalent shallow network", 5.0, shallow_consistency},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failures = 0;
    for (const Criterion& c : all) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("criterion %2d %s  %s: %s [%.1f s, budget %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.title,
                    o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
