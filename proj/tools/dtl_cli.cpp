#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>

#include "dtl/covariance.hpp"
#include "dtl/error.hpp"
#include "dtl/gep.hpp"
#include "dtl/io.hpp"
#include "dtl/network.hpp"
#include "dtl/rng.hpp"
#include "dtl/simulator.hpp"
#include "dtl/theory.hpp"

namespace fs = std::filesystem;
using namespace dtl;

namespace {

constexpr const char* kVersion = "1.0.0";

enum class Exit { Ok = 0, Config = 2, Solver = 3, Resource = 4 };

// ---------------------------------------------------------------- grids and policies

std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
    if (text.empty()) throw ConfigError(flag + ": empty grid");
    std::vector<double> g;
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw ConfigError(flag + ": cannot parse '" + s + "'");
        }
        if (used != s.size() || !std::isfinite(v)) throw ConfigError(flag + ": cannot parse '" + s + "'");
        return v;
    };
    const auto c1 = text.find(':');
    if (c1 == std::string::npos) {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) g.push_back(number(item));
    } else {
        const auto c2 = text.find(':', c1 + 1);
        if (c2 == std::string::npos) throw ConfigError(flag + ": expected start:stop:logN or start:stop:linN");
        const double a = number(text.substr(0, c1)), b = number(text.substr(c1 + 1, c2 - c1 - 1));
        const std::string mode = text.substr(c2 + 1);
        if (mode.size() < 4 || (mode.rfind("log", 0) != 0 && mode.rfind("lin", 0) != 0))
            throw ConfigError(flag + ": expected logN or linN, got '" + mode + "'");
        const double nd = number(mode.substr(3));
        const int n = int(nd);
        if (n != nd || n < 1) throw ConfigError(flag + ": point count must be a positive integer");
        const bool log = mode[1] == 'o';
        if (log && !(a > 0 && b > 0)) throw ConfigError(flag + ": log grids need positive end points");
        for (int i = 0; i < n; ++i) {
            const double t = n == 1 ? 0.0 : double(i) / (n - 1);
            g.push_back(log ? std::exp(std::log(a) + t * (std::log(b) - std::log(a))) : a + t * (b - a));
        }
        g.front() = a;
        g.back() = n == 1 ? a : b;
    }
    if (g.empty()) throw ConfigError(flag + ": empty grid");
    for (std::size_t i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1])) throw ConfigError(flag + ": grid must be strictly increasing");
    return g;
}

struct LambdaPolicy {
    enum Kind { Fixed, Optimal, Grid } kind = Optimal;
    double value = 0.0;
    std::vector<double> grid;

    std::string describe() const {
        if (kind == Optimal) return "optimal";
        if (kind == Fixed) return format_number(value);
        return "grid(" + std::to_string(grid.size()) + ")";
    }
};

LambdaPolicy parse_policy(const std::string& text) {
    LambdaPolicy p;
    if (text == "optimal") return p;
    if (text.find(':') != std::string::npos || text.find(',') != std::string::npos) {
        p.kind = LambdaPolicy::Grid;
        p.grid = parse_grid(text, "--lambda");
        return p;
    }
    p.kind = LambdaPolicy::Fixed;
    p.value = parse_grid(text, "--lambda").front();
    return p;
}

struct MethodSpec {
    std::string name;
    LambdaPolicy policy;
};

std::vector<MethodSpec> parse_methods(const std::string& text, const LambdaPolicy& fallback,
                                      const std::vector<std::string>& allowed) {
    std::vector<MethodSpec> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        MethodSpec m;
        const auto c = item.find(':');
        m.name = item.substr(0, c);
        m.policy = c == std::string::npos ? fallback : parse_policy(item.substr(c + 1));
        if (std::find(allowed.begin(), allowed.end(), m.name) == allowed.end())
            throw ConfigError("--methods: unknown method '" + m.name + "'");
        out.push_back(m);
    }
    if (out.empty()) throw ConfigError("--methods: no methods given");
    return out;
}

// ---------------------------------------------------------------- run context

struct Run {
    fs::path out;
    Json config;
    std::vector<std::string> files;
    std::uint64_t seed = 0;

    void write(const std::string& name, const std::string& content) {
        write_text((out / name).string(), content);
        files.push_back(name);
    }
};

std::uint64_t config_hash(const Json& config) { return hash_tag(config.dump()); }

void write_manifest(const Run& run, const std::string& status, const std::string& message, double seconds) {
    Json m;
    m["tool"] = "dtl";
    m["version"] = kVersion;
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(run.config)));
    m["config_hash"] = hash;
    m["seed"] = run.seed;
    m["config"] = run.config;
    m["status"] = status;
    if (!message.empty()) m["message"] = message;
    m["files"] = run.files;
    m["wallclock"] = seconds;
    m["versions"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) +
                                   "." + std::to_string(BOOST_VERSION % 100)},
                     {"compiler", __VERSION__},
                     {"cxx", long(__cplusplus)}};
    write_text((run.out / "manifest.json").string(), m.dump(2) + "\n");
}

// ---------------------------------------------------------------- theory

struct FeatureOptions {
    std::string activation = "tanh:2";
    double delta_f = 1.0;
    double gamma = 3.0;
};

struct TheoryContext {
    GepProfile profile;
    SpectralMeasure mu;
    FeatureOptions feat;
    Activation feature;
    SolverConfig cfg;
};

CurveKind kind_of(const std::string& m) {
    if (m == "bayes") return CurveKind::BayesRegression;
    if (m == "bayes_classification") return CurveKind::BayesClassification;
    if (m == "ridge") return CurveKind::Ridge;
    if (m == "kernel") return CurveKind::Kernel;
    if (m == "rf") return CurveKind::RandomFeatures;
    if (m == "logistic") return CurveKind::Logistic;
    return CurveKind::RidgeClassification;
}

CurvePoint theory_point(const TheoryContext& t, const std::string& method, double alpha, double lambda) {
    const GepProfile& p = t.profile;
    switch (kind_of(method)) {
        case CurveKind::BayesRegression: return bayes_regression(p, t.mu, alpha, t.cfg);
        case CurveKind::BayesClassification: return bayes_classification(p, t.mu, alpha, t.cfg);
        case CurveKind::Ridge: return ridge_regression(p, t.mu, alpha, lambda, t.cfg);
        case CurveKind::Kernel: return kernel_regression(p, alpha, t.feat.delta_f, t.feature, lambda, t.cfg);
        case CurveKind::RandomFeatures:
            return random_features(p, alpha, t.feat.gamma, t.feat.delta_f, t.feature, lambda, t.cfg);
        case CurveKind::Logistic: return logistic_regression(p, t.mu, alpha, lambda, t.cfg);
        case CurveKind::RidgeClassification: return ridge_classification(p, t.mu, alpha, lambda, t.cfg);
    }
    throw ConfigError("unknown method " + method);
}

bool uses_lambda(const std::string& method) { return method != "bayes" && method != "bayes_classification"; }

// Theory lambda selected by the policy at one alpha.
double resolve_lambda(const TheoryContext& t, const MethodSpec& m, double alpha) {
    if (!uses_lambda(m.name)) return 0.0;
    const auto err = [&](double l) { return theory_point(t, m.name, alpha, l).error; };
    switch (m.policy.kind) {
        case LambdaPolicy::Fixed: return m.policy.value;
        case LambdaPolicy::Grid: {
            double best = INFINITY, arg = m.policy.grid.front();
            for (double l : m.policy.grid) {
                const double e = err(l);
                if (e < best) best = e, arg = l;
            }
            return arg;
        }
        case LambdaPolicy::Optimal: break;
    }
    if (m.name == "ridge") return optimal_lambda_ridge(t.profile);
    if (m.name == "kernel") return optimal_lambda_kernel(t.profile, t.feat.delta_f, t.feature);
    return minimize_lambda(err, 1e-4, 10.0);
}

TheoryContext make_theory_context(const NetworkSpec& spec, const FeatureOptions& feat, bool eq9_main_text) {
    TheoryContext t;
    t.profile = propagate(spec);
    t.mu = spec.input_spectrum;
    t.feat = feat;
    t.feature = parse_activation(feat.activation);
    t.cfg.eq9_main_text = eq9_main_text;
    return t;
}

// Writes one CSV per method; a failing point flushes the rows already computed before rethrowing.
void run_theory(Run& run, const TheoryContext& t, const std::vector<MethodSpec>& methods, const std::vector<double>& alphas,
                const std::string& prefix = "") {
    Json meta = Json::array();
    for (const MethodSpec& m : methods) {
        std::vector<CurvePoint> pts;
        const std::string file = prefix + "theory_" + to_string(kind_of(m.name)) + ".csv";
        try {
            for (double a : alphas) {
                CurvePoint cp = theory_point(t, m.name, a, resolve_lambda(t, m, a));
                pts.push_back(cp);
            }
        } catch (...) {
            run.write(file, curve_csv(pts));
            throw;
        }
        run.write(file, curve_csv(pts));
        meta.push_back({{"method", m.name}, {"file", file}, {"lambda_policy", m.policy.describe()}});
    }
    Json side;
    side["profile"] = to_json(t.profile);
    side["curves"] = meta;
    run.write(prefix + "theory.json", side.dump(2) + "\n");
}

// ---------------------------------------------------------------- simulation

struct SimOptions {
    int d = 200;
    int trials = 10;
    long n_test = 10000;
    std::uint64_t seed = 0;
};

Task task_of(const std::string& method) {
    return method == "logistic" || method == "ridge_classification" ? Task::Classification : Task::Regression;
}

// Theory lambda to the simulator's risk lambda.
double simulator_lambda(const std::string& method, double lambda) {
    return method == "logistic" || method == "ridge_classification" ? lambda : 2.0 * lambda;
}

KernelSpec kernel_for(const TheoryContext& t) { return nngp_kernel(t.feature, t.feat.delta_f); }

ErmResult fit_one(const TheoryContext& t, const std::string& method, const Dataset& train, const Dataset& test,
                  double sim_lambda, std::uint64_t seed) {
    if (method == "ridge") return fit_ridge(train, sim_lambda, test);
    if (method == "kernel") return fit_kernel(train, kernel_for(t), sim_lambda, test);
    if (method == "rf")
        return fit_random_features(train, std::max(1, int(std::lround(t.feat.gamma * train.d))), t.feature,
                                   t.feat.delta_f, sim_lambda, seed, test);
    if (method == "logistic") return fit_logistic(train, sim_lambda, test);
    return fit_ridge_classification(train, sim_lambda, test);
}

std::optional<double> theory_error(const TheoryContext& t, const std::string& method, double alpha, double lambda) {
    try {
        return theory_point(t, method, alpha, lambda).error;
    } catch (const DomainError&) {
        return std::nullopt;
    }
}

void run_simulation(Run& run, const NetworkSpec& spec, const TheoryContext& t, const std::vector<MethodSpec>& methods,
                    const std::vector<long>& ns, const SimOptions& opt, const std::string& prefix = "") {
    for (const MethodSpec& m : methods) {
        const Task task = task_of(m.name);
        std::vector<ErmResult> rows;
        std::vector<double> alphas;
        Json summary = Json::array();
        const auto t0 = std::chrono::steady_clock::now();
        const std::string file = prefix + "sim_" + m.name + ".csv";
        auto flush = [&] {
            run.write(file, erm_csv(rows, alphas));
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            Json side{{"method", m.name}, {"d", opt.d}, {"trials", opt.trials}, {"n_test", opt.n_test},
                      {"lambda_policy", m.policy.describe()}, {"wallclock", wall}, {"points", summary}};
            Json per_fit = Json::array();
            for (const auto& r : rows) per_fit.push_back(to_json(r));
            side["fits"] = per_fit;
            run.write(prefix + "sim_" + m.name + ".json", side.dump(2) + "\n");
        };
        try {
            for (long n : ns) {
                const double alpha = double(n) / opt.d;
                auto trial_errors = [&](double sim_lambda, std::vector<ErmResult>* keep) {
                    std::vector<ErmResult> fits(opt.trials);
                    run_trials(opt.trials, [&](int i) {
                        const std::uint64_t s = opt.seed + std::uint64_t(i);
                        const WeightSet w = sample_target(spec, opt.d, s);
                        const Dataset train = generate(spec, w, n, task, s);
                        const Dataset test = generate(spec, w, opt.n_test, task, s, 1ull << 40);
                        fits[i] = fit_one(t, m.name, train, test, sim_lambda, s);
                        return fits[i].test_error;
                    });
                    std::vector<double> errs;
                    for (const auto& f : fits) errs.push_back(f.test_error);
                    if (keep) *keep = fits;
                    return summarize(errs);
                };
                double lambda = 0.0;
                std::vector<ErmResult> fits;
                MeanStd ms;
                Json grid = Json::array();
                if (m.policy.kind == LambdaPolicy::Grid) {
                    double best = INFINITY;
                    for (double l : m.policy.grid) {
                        std::vector<ErmResult> f;
                        const MeanStd cur = trial_errors(simulator_lambda(m.name, l), &f);
                        grid.push_back({{"lambda", l}, {"mean", cur.mean}, {"std_error", cur.std_error}});
                        if (cur.mean < best) best = cur.mean, lambda = l, fits = f, ms = cur;
                    }
                } else {
                    lambda = resolve_lambda(t, m, alpha);
                    ms = trial_errors(simulator_lambda(m.name, lambda), &fits);
                }
                for (auto& f : fits) {
                    rows.push_back(f);
                    alphas.push_back(alpha);
                }
                Json point{{"alpha", alpha}, {"n", n},
                           {"lambda", lambda},
                           {"mean", ms.mean},
                           {"std", ms.std_error * std::sqrt(double(ms.count))},
                           {"std_error", ms.std_error}};
                if (const auto th = theory_error(t, m.name, alpha, lambda)) point["theory"] = *th;
                if (!grid.empty()) point["grid"] = grid;
                summary.push_back(point);
            }
        } catch (...) {
            flush();
            throw;
        }
        flush();
    }
}

std::vector<long> sample_counts(const std::vector<double>& alphas, const std::optional<std::vector<double>>& n_grid, int d) {
    std::vector<long> ns;
    if (n_grid) {
        for (double n : *n_grid) {
            if (n < 1 || n != std::floor(n)) throw ConfigError("--n: sample counts must be positive integers");
            ns.push_back(long(n));
        }
    } else {
        for (double a : alphas) ns.push_back(std::max(1L, std::lround(a * d)));
    }
    for (std::size_t i = 1; i < ns.size(); ++i)
        if (ns[i] <= ns[i - 1]) throw ConfigError("--alpha: grid collapses to repeated sample counts at this d");
    return ns;
}

// ---------------------------------------------------------------- covariance and Gaussianity

void run_covcheck(Run& run, const NetworkSpec& spec, int d, long samples, const std::vector<int>& layers, bool dump) {
    const WeightSet w = sample_target(spec, d, run.seed);
    const auto reps = covariance_check(spec, w, layers, samples, run.seed + 1);
    Json j;
    j["d"] = d;
    j["samples"] = samples;
    j["weight_seed"] = run.seed;
    j["layers"] = Json::array();
    for (const auto& r : reps) {
        Json e = to_json(r);
        e["theory_trace_per_unit"] = r.theory.trace() / double(r.theory.rows());
        e["empirical_trace_per_unit"] = r.empirical.trace() / double(r.empirical.rows());
        if (dump) {
            const std::string a = "omega_theory_l" + std::to_string(r.layer) + ".bin";
            const std::string b = "omega_empirical_l" + std::to_string(r.layer) + ".bin";
            write_matrix_binary((run.out / a).string(), r.theory);
            write_matrix_binary((run.out / b).string(), r.empirical);
            run.files.push_back(a);
            run.files.push_back(b);
            e["theory_file"] = a;
            e["empirical_file"] = b;
        }
        j["layers"].push_back(e);
    }
    run.write("covcheck.json", j.dump(2) + "\n");
}

void run_gaussianity(Run& run, const NetworkSpec& spec, const std::vector<int>& dims, long samples, int draws) {
    Json j;
    j["samples"] = samples;
    j["draws"] = draws;
    j["dimensions"] = Json::array();
    for (int d : dims) {
        Json dim{{"d", d}, {"reports", Json::array()}};
        std::vector<double> k4;
        for (int i = 0; i < draws; ++i) {
            const std::uint64_t s = run.seed + std::uint64_t(i);
            const GaussianityReport r = gaussianity_diagnostics(spec, sample_target(spec, d, s), samples, s + 7919);
            k4.push_back(std::abs(r.cumulants.at(4)));
            Json e = to_json(r);
            e["weight_seed"] = s;
            dim["reports"].push_back(e);
        }
        std::sort(k4.begin(), k4.end());
        dim["median_abs_k4"] = k4.size() % 2 ? k4[k4.size() / 2] : 0.5 * (k4[k4.size() / 2 - 1] + k4[k4.size() / 2]);
        j["dimensions"].push_back(dim);
    }
    run.write("gaussianity.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------- figure recipes

NetworkSpec tanh_target(int depth) { return NetworkSpec::uniform(depth, Activation::tanh_scale(2), 1.4); }

void reproduce(Run& run, int figure, bool fast, int trials_override) {
    const int d = fast ? 200 : 500;
    const int trials = trials_override > 0 ? trials_override : (fast ? 5 : 30);
    SimOptions sim;
    sim.d = d;
    sim.trials = trials;
    sim.seed = run.seed;
    const std::vector<double> theory_alphas = parse_grid("0.1:8:log30", "alpha");
    const std::vector<double> sim_alphas = {0.5, 1.0, 2.0, 4.0};
    LambdaPolicy optimal;
    auto emit_spec = [&](const std::string& name, const NetworkSpec& s) { run.write(name, to_json(s).dump(2) + "\n"); };
    switch (figure) {
        case 2:
            for (int depth : {1, 2}) {
                const std::string tag = depth == 1 ? "top_" : "bottom_";
                const NetworkSpec s = tanh_target(depth);
                emit_spec(tag + "spec.json", s);
                FeatureOptions feat;
                const TheoryContext t = make_theory_context(s, feat, false);
                run_theory(run, t, {{"bayes", optimal}, {"ridge", optimal}, {"kernel", optimal}, {"rf", optimal}},
                           theory_alphas, tag);
                run_simulation(run, s, t, {{"ridge", optimal}, {"kernel", optimal}, {"rf", optimal}},
                               sample_counts(sim_alphas, std::nullopt, d), sim, tag);
            }
            break;
        case 3: {
            const NetworkSpec s = tanh_target(1);
            emit_spec("spec.json", s);
            FeatureOptions feat;
            feat.activation = "sign";
            const TheoryContext t = make_theory_context(s, feat, false);
            LambdaPolicy fixed05{LambdaPolicy::Fixed, 0.5, {}}, fixed01{LambdaPolicy::Fixed, 0.1, {}};
            run_theory(run, t, {{"bayes", optimal}}, theory_alphas);
            for (auto [tag, pol] : {std::pair{"lambda_0.5_", fixed05}, std::pair{"lambda_0.1_", fixed01},
                                    std::pair{"lambda_opt_", optimal}}) {
                run_theory(run, t, {{"kernel", pol}}, theory_alphas, tag);
                run_simulation(run, s, t, {{"kernel", pol}}, sample_counts(sim_alphas, std::nullopt, d), sim, tag);
            }
            break;
        }
        case 4: {
            const NetworkSpec s = tanh_target(2);
            emit_spec("spec.json", s);
            const TheoryContext t = make_theory_context(s, FeatureOptions{}, false);
            const std::vector<double> alphas = parse_grid("0.25:8:log20", "alpha");
            run_theory(run, t, {{"bayes_classification", optimal}, {"logistic", optimal}, {"ridge_classification", optimal}},
                       alphas);
            run_simulation(run, s, t, {{"logistic", optimal}, {"ridge_classification", optimal}},
                           sample_counts({0.5, 1.0, 2.0, 3.0, 4.0}, std::nullopt, d), sim);
            break;
        }
        case 5: {
            const int dq = 30;
            std::vector<std::uint64_t> seeds;
            for (int i = 0; i < (trials_override > 0 ? trials_override : (fast ? 3 : 10)); ++i)
                seeds.push_back(run.seed + std::uint64_t(i));
            const std::vector<double> grid = fast ? std::vector<double>{0.5, 1.0, 2.0} : std::vector<double>{0.25, 0.5, 1.0, 2.0, 3.0};
            struct Panel {
                const char* tag;
                Activation target;
                KernelKind kernel;
            };
            for (const Panel& p : {Panel{"top_", Activation::shifted_relu(), KernelKind::ArcCosine1},
                                   Panel{"bottom_", Activation::erf_scale(2), KernelKind::ArcSine}}) {
                const NetworkSpec s = NetworkSpec::uniform(1, p.target, 20.0 / dq);
                emit_spec(std::string(p.tag) + "spec.json", s);
                SweepOptions opt;
                opt.kernel.kind = p.kernel;
                const auto res =
                    quadratic_regime_sweep(s, dq, grid, {SweepMethod::Ridge, SweepMethod::Kernel}, seeds, opt);
                std::vector<ErmResult> ridge, kernel;
                std::vector<double> ra, ka;
                for (const auto& r : res) {
                    const double c = double(r.n_train) / (dq * dq);
                    (r.method == "ridge" ? ridge : kernel).push_back(r);
                    (r.method == "ridge" ? ra : ka).push_back(c);
                }
                run.write(std::string(p.tag) + "sim_ridge.csv", erm_csv(ridge, ra));
                run.write(std::string(p.tag) + "sim_kernel.csv", erm_csv(kernel, ka));
                Json side = Json::array();
                for (const auto& r : res) side.push_back(to_json(r));
                run.write(std::string(p.tag) + "sim.json", Json{{"d", dq}, {"grid_axis", "n/d^2"}, {"fits", side}}.dump(2) + "\n");
            }
            break;
        }
        default: throw ConfigError("reproduce: figure must be one of 2, 3, 4, 5");
    }
}

// Fills options absent from the command line with values from a JSON object keyed by long flag name.
void apply_config(CLI::App* sub, const std::string& path) {
    const Json j = parse_json_text(read_text(path), path);
    if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
    auto scalar = [&](const std::string& key, const Json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        if (v.is_number()) return format_number(v.get<double>());
        throw ConfigError(path + ": value of '" + key + "' must be a string, number, boolean or list");
    };
    for (const auto& [key, value] : j.items()) {
        if (key == "config") throw ConfigError(path + ": config files cannot nest");
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (!opt) opt = sub->get_option_no_throw(key);
        if (!opt) throw ConfigError(path + ": unknown key '" + key + "' for " + sub->get_name());
        if (opt->count() > 0) continue;
        std::string text;
        if (value.is_array()) {
            for (const auto& v : value) text += (text.empty() ? "" : ",") + scalar(key, v);
        } else {
            text = scalar(key, value);
        }
        opt->add_result(text);
        opt->run_callback();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep random target learning curves: theory, simulation and diagnostics"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string spec_path, alpha_text = "0.25:8:log20", n_text, methods_text, lambda_text = "optimal", out_dir = ".",
                layers_text = "1", profile = "full", dims_text;
    int d = 200, trials = 0, draws = 1, figure = 0;
    double samples = 1e5, n_test = 1e4;
    std::uint64_t seed = 0;
    bool eq9 = false, dump = false;
    FeatureOptions feat;

    std::string config_path;
    auto common = [&](CLI::App* c, bool needs_spec) {
        c->add_option("--config", config_path, "JSON file of flag values; command-line flags take precedence");
        if (needs_spec) c->add_option("--spec", spec_path, "Network spec JSON (required)");
        c->add_option("--seed", seed, "Base seed");
        c->add_option("--out", out_dir, "Output directory");
    };
    auto features = [&](CLI::App* c) {
        c->add_option("--feature", feat.activation, "Kernel / random-feature activation, e.g. tanh:2, sign, erf:1");
        c->add_option("--delta-f", feat.delta_f, "Feature weight variance");
        c->add_option("--gamma", feat.gamma, "Random features per input dimension");
    };

    CLI::App* theory = app.add_subcommand("theory", "Asymptotic learning curves");
    common(theory, true);
    features(theory);
    theory->add_option("--alpha", alpha_text, "Sample ratio grid: start:stop:logN, start:stop:linN or a,b,c");
    theory->add_option("--methods", methods_text, "bayes,bayes_classification,ridge,kernel,rf,logistic,ridge_classification; optional :POLICY (default bayes)");
    theory->add_option("--lambda", lambda_text, "Default lambda policy: optimal, a value, or a grid");
    theory->add_flag("--eq9-main-text", eq9, "Use the halved Bayes self-overlap update");

    CLI::App* simulate = app.add_subcommand("simulate", "Finite-size Monte Carlo");
    common(simulate, true);
    features(simulate);
    simulate->add_option("--alpha", alpha_text, "Sample ratio grid");
    simulate->add_option("--n", n_text, "Sample count grid (overrides --alpha)");
    simulate->add_option("--d", d, "Input dimension")->check(CLI::Range(2, 1 << 20));
    simulate->add_option("--methods", methods_text, "ridge,kernel,rf,logistic,ridge_classification; optional :POLICY (default ridge)");
    simulate->add_option("--lambda", lambda_text, "Default lambda policy (theory units)");
    simulate->add_option("--trials", trials, "Independent targets per point (default 10)")->check(CLI::Range(1, 100000));
    simulate->add_option("--n-test", n_test, "Test samples per trial");
    simulate->add_option("--profile", profile, "full or fast (fast caps d at 200)")->check(CLI::IsMember({"full", "fast"}));

    CLI::App* cov = app.add_subcommand("covcheck", "Population covariance recursion check");
    common(cov, true);
    cov->add_option("--d", d, "Input dimension")->check(CLI::Range(2, 1 << 20));
    cov->add_option("--samples", samples, "Input samples");
    cov->add_option("--layers", layers_text, "Comma-separated layers");
    cov->add_flag("--dump-matrices", dump, "Write float64 matrix dumps");

    CLI::App* gauss = app.add_subcommand("gaussianity", "Output cumulants, KS distance and QQ points");
    common(gauss, true);
    gauss->add_option("--d", dims_text, "Input dimension or comma-separated list (default 200)");
    gauss->add_option("--samples", samples, "Input samples per draw");
    gauss->add_option("--draws", draws, "Weight draws per dimension")->check(CLI::Range(1, 100000));

    CLI::App* repro = app.add_subcommand("reproduce", "Emit theory and simulation CSVs for a figure setup");
    repro->add_option("figure", figure, "Figure number (2, 3, 4 or 5)");
    common(repro, false);
    repro->add_option("--profile", profile, "full or fast")->check(CLI::IsMember({"full", "fast"}));
    repro->add_option("--trials", trials, "Override the trial count")->check(CLI::Range(1, 100000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : int(Exit::Config);
    }

    const auto t0 = std::chrono::steady_clock::now();
    Run run;
    run.out = out_dir;
    run.seed = seed;
    bool validated = false;
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    auto fail = [&](Exit code, const std::string& what) {
        std::fprintf(stderr, "error: %s\n", what.c_str());
        if (validated) {
            try {
                write_manifest(run, "error", what, elapsed());
            } catch (const std::exception&) {
            }
        }
        return int(code);
    };

    try {
        // validation: nothing is written until every input parses
        CLI::App* sub = app.get_subcommands().front();
        if (!config_path.empty()) apply_config(sub, config_path);
        if (sub != repro && spec_path.empty()) throw ConfigError("--spec is required");
        if (methods_text.empty()) methods_text = sub == theory ? "bayes" : "ridge";
        if (dims_text.empty()) dims_text = "200";
        if (trials == 0 && sub != repro) trials = 10;
        std::optional<NetworkSpec> spec;
        if (!spec_path.empty()) spec = load_spec(spec_path);
        run.config = {{"command", sub->get_name()}, {"seed", seed}};
        if (spec) run.config["spec"] = to_json(*spec), run.config["spec_path"] = spec_path;

        std::function<void()> body;
        if (theory->parsed()) {
            const auto alphas = parse_grid(alpha_text, "--alpha");
            const auto methods = parse_methods(methods_text, parse_policy(lambda_text),
                                               {"bayes", "bayes_classification", "ridge", "kernel", "rf", "logistic",
                                                "ridge_classification"});
            const TheoryContext t = make_theory_context(*spec, feat, eq9);
            run.config.update({{"alpha", alphas}, {"methods", methods_text}, {"lambda", lambda_text},
                               {"feature", feat.activation}, {"delta_f", feat.delta_f}, {"gamma", feat.gamma},
                               {"eq9_main_text", eq9}});
            body = [&, alphas, methods, t] { run_theory(run, t, methods, alphas); };
        } else if (simulate->parsed()) {
            if (profile == "fast") d = std::min(d, 200);
            const auto alphas = parse_grid(alpha_text, "--alpha");
            std::optional<std::vector<double>> n_grid;
            if (!n_text.empty()) n_grid = parse_grid(n_text, "--n");
            const auto ns = sample_counts(alphas, n_grid, d);
            const auto methods = parse_methods(methods_text, parse_policy(lambda_text),
                                               {"ridge", "kernel", "rf", "logistic", "ridge_classification"});
            if (n_test < 1 || n_test != std::floor(n_test)) throw ConfigError("--n-test must be a positive integer");
            const TheoryContext t = make_theory_context(*spec, feat, false);
            SimOptions opt;
            opt.d = d;
            opt.trials = trials;
            opt.n_test = long(n_test);
            opt.seed = seed;
            run.config.update({{"n", ns}, {"d", d}, {"methods", methods_text}, {"lambda", lambda_text},
                               {"trials", trials}, {"n_test", opt.n_test}, {"feature", feat.activation},
                               {"delta_f", feat.delta_f}, {"gamma", feat.gamma}, {"profile", profile}});
            body = [&, ns, methods, t, opt] { run_simulation(run, *spec, t, methods, ns, opt); };
        } else if (cov->parsed()) {
            std::vector<int> layers;
            for (double l : parse_grid(layers_text, "--layers")) {
                if (l != std::floor(l) || l < 0 || l > spec->depth()) throw ConfigError("--layers: layer out of range");
                layers.push_back(int(l));
            }
            if (samples < 2 || samples != std::floor(samples)) throw ConfigError("--samples must be an integer >= 2");
            run.config.update({{"d", d}, {"samples", long(samples)}, {"layers", layers}, {"dump_matrices", dump}});
            body = [&, layers] { run_covcheck(run, *spec, d, long(samples), layers, dump); };
        } else if (gauss->parsed()) {
            std::vector<int> dims;
            for (double v : parse_grid(dims_text, "--d")) {
                if (v != std::floor(v) || v < 2) throw ConfigError("--d: dimensions must be integers >= 2");
                dims.push_back(int(v));
            }
            if (samples != std::floor(samples)) throw ConfigError("--samples must be an integer");
            run.config.update({{"d", dims}, {"samples", long(samples)}, {"draws", draws}});
            body = [&, dims] { run_gaussianity(run, *spec, dims, long(samples), draws); };
        } else {
            if (figure < 2 || figure > 5) throw ConfigError("reproduce: figure must be one of 2, 3, 4, 5");
            run.config.update({{"figure", figure}, {"profile", profile}, {"trials", trials}});
            body = [&] { reproduce(run, figure, profile == "fast", trials); };
        }

        std::error_code ec;
        fs::create_directories(run.out, ec);
        if (ec || !fs::is_directory(run.out)) throw ResourceError("cannot create output directory " + out_dir);
        validated = true;
        body();
        write_manifest(run, "ok", "", elapsed());
        return int(Exit::Ok);
    } catch (const CLI::Error& e) {
        return fail(Exit::Config, e.what());
    } catch (const ConfigError& e) {
        return fail(Exit::Config, e.what());
    } catch (const ModelError& e) {
        return fail(Exit::Config, e.what());
    } catch (const ResourceError& e) {
        return fail(Exit::Resource, e.what());
    } catch (const ConvergenceError& e) {
        return fail(Exit::Solver, std::string(e.what()) + " (residual " + format_number(e.residual()) + ")");
    } catch (const Error& e) {
        return fail(Exit::Solver, e.what());
    }
}
