#include <optional>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dtl/covariance.hpp"
#include "dtl/error.hpp"
#include "dtl/gep.hpp"
#include "dtl/io.hpp"
#include "dtl/network.hpp"
#include "dtl/simulator.hpp"
#include "dtl/theory.hpp"

namespace py = pybind11;
using namespace dtl;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Task task) {
    if (X.rows() != y.size()) throw ConfigError("dataset: X and y have different numbers of rows");
    Dataset ds;
    ds.X = X;
    ds.y = y;
    ds.d = int(X.cols());
    ds.n = long(X.rows());
    ds.task = task;
    return ds;
}

}  // namespace

PYBIND11_MODULE(_dtl, m) {
    m.doc() = "Learning curves of random deep targets: theory, simulation and diagnostics.";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<ModelError>(m, "ModelError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ResourceError>(m, "ResourceError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());

    py::class_<Activation>(m, "Activation")
        .def_static("tanh", &Activation::tanh_scale, py::arg("a") = 1.0)
        .def_static("erf", &Activation::erf_scale, py::arg("a") = 1.0)
        .def_static("sign", &Activation::sign)
        .def_static("shifted_relu", &Activation::shifted_relu)
        .def_static("identity", &Activation::identity)
        .def_static("tabulated", &Activation::tabulated, py::arg("nodes"))
        .def_static("parse", &parse_activation, py::arg("text"))
        .def_property_readonly("name", &Activation::name)
        .def_property_readonly("is_odd", &Activation::is_odd)
        .def("__call__", [](const Activation& a, double x) { return eval(a, x); })
        .def("__call__", [](const Activation& a, Eigen::MatrixXd x) {
            apply(a, x);
            return x;
        })
        .def("__repr__", [](const Activation& a) { return "Activation(" + a.name() + ")"; });

    py::class_<SpectralMeasure>(m, "SpectralMeasure")
        .def(py::init<>())
        .def(py::init([](std::vector<std::pair<double, double>> atoms) { return SpectralMeasure(std::move(atoms)); }),
             py::arg("atoms"))
        .def_static("delta", &SpectralMeasure::delta, py::arg("location") = 1.0)
        .def("moment", &SpectralMeasure::moment)
        .def_property_readonly("atoms", &SpectralMeasure::atoms);

    py::class_<NetworkSpec>(m, "NetworkSpec")
        .def(py::init<>())
        .def_static("uniform", &NetworkSpec::uniform, py::arg("depth"), py::arg("activation"), py::arg("width") = 1.0)
        .def_static("from_json", [](const std::string& text) { return spec_from_json(parse_json_text(text, "<string>")); })
        .def_static("load", &load_spec, py::arg("path"))
        .def("to_json", [](const NetworkSpec& s) { return to_json(s).dump(); })
        .def_readwrite("widths", &NetworkSpec::widths)
        .def_readwrite("weight_vars", &NetworkSpec::weight_vars)
        .def_readwrite("readout_var", &NetworkSpec::readout_var)
        .def_readwrite("noise_var", &NetworkSpec::noise_var)
        .def_readwrite("activations", &NetworkSpec::activations)
        .def_readwrite("input_spectrum", &NetworkSpec::input_spectrum)
        .def_property_readonly("depth", &NetworkSpec::depth)
        .def("validate", &NetworkSpec::validate);

    py::class_<GepProfile>(m, "GepProfile")
        .def_readonly("r", &GepProfile::r)
        .def_readonly("kappa1", &GepProfile::kappa1)
        .def_readonly("kappa_star", &GepProfile::kappa_star)
        .def_readonly("rho", &GepProfile::rho)
        .def_readonly("eps_r", &GepProfile::eps_r)
        .def_readonly("check_q", &GepProfile::check_q)
        .def_readonly("warnings", &GepProfile::warnings)
        .def_property_readonly("total_variance", &GepProfile::total_variance);

    m.def("propagate", &propagate, py::arg("spec"));
    m.def("equivalent_shallow", &equivalent_shallow, py::arg("profile"));
    m.def("collapsed_spec", &collapsed_spec, py::arg("profile"), py::arg("spectrum") = SpectralMeasure{});

    py::class_<SolverConfig>(m, "SolverConfig")
        .def(py::init<>())
        .def_readwrite("damping", &SolverConfig::damping)
        .def_readwrite("tol", &SolverConfig::tol)
        .def_readwrite("max_iter", &SolverConfig::max_iter)
        .def_readwrite("eq9_main_text", &SolverConfig::eq9_main_text);

    py::enum_<CurveKind>(m, "CurveKind")
        .value("BayesRegression", CurveKind::BayesRegression)
        .value("BayesClassification", CurveKind::BayesClassification)
        .value("Ridge", CurveKind::Ridge)
        .value("RandomFeatures", CurveKind::RandomFeatures)
        .value("Kernel", CurveKind::Kernel)
        .value("Logistic", CurveKind::Logistic)
        .value("RidgeClassification", CurveKind::RidgeClassification);

    py::class_<CurvePoint>(m, "CurvePoint")
        .def_readonly("alpha", &CurvePoint::alpha)
        .def_readonly("error", &CurvePoint::error)
        .def_readonly("kind", &CurvePoint::kind)
        .def_readonly("lambda_", &CurvePoint::lambda)
        .def_property_readonly("q", [](const CurvePoint& c) { return c.overlaps.q; })
        .def_property_readonly("m", [](const CurvePoint& c) { return c.overlaps.m; })
        .def_property_readonly("V", [](const CurvePoint& c) { return c.overlaps.V; })
        .def_property_readonly("iterations", [](const CurvePoint& c) { return c.overlaps.iterations; })
        .def("__repr__", [](const CurvePoint& c) {
            return "CurvePoint(" + to_string(c.kind) + ", alpha=" + format_number(c.alpha) +
                   ", error=" + format_number(c.error) + ")";
        });

    const SpectralMeasure unit;
    const SolverConfig defaults;
    m.def(
        "bayes_regression",
        [](const GepProfile& p, double a, const SpectralMeasure& mu, const SolverConfig& c) {
            return bayes_regression(p, mu, a, c);
        },
        py::arg("profile"), py::arg("alpha"), py::arg("spectrum") = unit, py::arg("config") = defaults);
    m.def(
        "bayes_classification",
        [](const GepProfile& p, double a, const SpectralMeasure& mu, const SolverConfig& c) {
            return bayes_classification(p, mu, a, c);
        },
        py::arg("profile"), py::arg("alpha"), py::arg("spectrum") = unit, py::arg("config") = defaults);
    m.def(
        "ridge_regression",
        [](const GepProfile& p, double a, double l, const SpectralMeasure& mu, const SolverConfig& c) {
            return ridge_regression(p, mu, a, l, c);
        },
        py::arg("profile"), py::arg("alpha"), py::arg("lambda_"), py::arg("spectrum") = unit,
        py::arg("config") = defaults);
    m.def("optimal_lambda_ridge", &optimal_lambda_ridge, py::arg("profile"));
    m.def("random_features", &random_features, py::arg("profile"), py::arg("alpha"), py::arg("gamma"),
          py::arg("delta_f"), py::arg("activation"), py::arg("lambda_"), py::arg("config") = defaults);
    m.def("kernel_regression", &kernel_regression, py::arg("profile"), py::arg("alpha"), py::arg("delta_f"),
          py::arg("activation"), py::arg("lambda_"), py::arg("config") = defaults);
    m.def("optimal_lambda_kernel", &optimal_lambda_kernel, py::arg("profile"), py::arg("delta_f"),
          py::arg("activation"));
    m.def(
        "logistic_regression",
        [](const GepProfile& p, double a, double l, const SpectralMeasure& mu, const SolverConfig& c) {
            return logistic_regression(p, mu, a, l, c);
        },
        py::arg("profile"), py::arg("alpha"), py::arg("lambda_"), py::arg("spectrum") = unit,
        py::arg("config") = defaults);
    m.def(
        "ridge_classification",
        [](const GepProfile& p, double a, double l, const SpectralMeasure& mu, const SolverConfig& c) {
            return ridge_classification(p, mu, a, l, c);
        },
        py::arg("profile"), py::arg("alpha"), py::arg("lambda_"), py::arg("spectrum") = unit,
        py::arg("config") = defaults);
    m.def("minimize_lambda", &minimize_lambda, py::arg("error"), py::arg("lo"), py::arg("hi"),
          py::arg("rel_tol") = 1e-6);

    py::class_<WeightSet>(m, "WeightSet")
        .def_readonly("layers", &WeightSet::layers)
        .def_readonly("readout", &WeightSet::readout)
        .def_property_readonly("input_dim", &WeightSet::input_dim);
    m.def("sample_target", &sample_target, py::arg("spec"), py::arg("d"), py::arg("seed"));
    m.def("network_output", &network_output, py::arg("spec"), py::arg("weights"), py::arg("X"));

    py::enum_<Task>(m, "Task").value("Regression", Task::Regression).value("Classification", Task::Classification);
    m.def(
        "generate",
        [](const NetworkSpec& s, const WeightSet& w, long n, Task task, std::uint64_t seed, std::uint64_t first_row) {
            Dataset ds = generate(s, w, n, task, seed, first_row);
            return py::make_tuple(ds.X, ds.y);
        },
        py::arg("spec"), py::arg("weights"), py::arg("n"), py::arg("task") = Task::Regression, py::arg("seed") = 0,
        py::arg("first_row") = 0, "Returns (X, y) with X of shape (n, d).");

    py::class_<ErmResult>(m, "ErmResult")
        .def_readonly("method", &ErmResult::method)
        .def_readonly("lambda_", &ErmResult::lambda)
        .def_readonly("train_loss", &ErmResult::train_loss)
        .def_readonly("test_error", &ErmResult::test_error)
        .def_readonly("test_std_error", &ErmResult::test_std_error)
        .def_readonly("n_train", &ErmResult::n_train)
        .def_readonly("n_test", &ErmResult::n_test)
        .def("__repr__", [](const ErmResult& r) {
            return "ErmResult(" + r.method + ", test_error=" + format_number(r.test_error) + ")";
        });

    py::enum_<KernelKind>(m, "KernelKind")
        .value("ArcCosine0", KernelKind::ArcCosine0)
        .value("ArcCosine1", KernelKind::ArcCosine1)
        .value("ArcSine", KernelKind::ArcSine)
        .value("Nngp", KernelKind::Nngp);
    py::class_<KernelSpec>(m, "KernelSpec")
        .def(py::init([](KernelKind kind) {
                 KernelSpec k;
                 k.kind = kind;
                 return k;
             }),
             py::arg("kind"))
        .def_static("nngp", &nngp_kernel, py::arg("activation"), py::arg("delta_f") = 1.0)
        .def_property_readonly("name", &KernelSpec::name)
        .def("__call__", &KernelSpec::operator(), py::arg("n1"), py::arg("n2"), py::arg("c"));
    m.def("gram", &gram, py::arg("kernel"), py::arg("A"), py::arg("B"));

    const auto regression = [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
        return make_dataset(X, y, Task::Regression);
    };
    const auto classification = [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
        return make_dataset(X, y, Task::Classification);
    };
    m.def(
        "fit_ridge",
        [=](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, const Eigen::MatrixXd& Xt,
            const Eigen::VectorXd& yt) { return fit_ridge(regression(X, y), lambda, regression(Xt, yt)); },
        py::arg("X"), py::arg("y"), py::arg("lambda_"), py::arg("X_test"), py::arg("y_test"),
        "Minimizes sum (y - w.x/sqrt(d))^2 + (lambda/2)|w|^2.");
    m.def(
        "ridge_weights",
        [=](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
            return ridge_weights(regression(X, y), lambda);
        },
        py::arg("X"), py::arg("y"), py::arg("lambda_"));
    m.def(
        "fit_kernel",
        [=](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelSpec& k, double lambda,
            const Eigen::MatrixXd& Xt, const Eigen::VectorXd& yt) {
            return fit_kernel(regression(X, y), k, lambda, regression(Xt, yt));
        },
        py::arg("X"), py::arg("y"), py::arg("kernel"), py::arg("lambda_"), py::arg("X_test"), py::arg("y_test"));
    m.def(
        "fit_random_features",
        [=](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int k, const Activation& act, double delta_f,
            double lambda, std::uint64_t seed, const Eigen::MatrixXd& Xt, const Eigen::VectorXd& yt) {
            return fit_random_features(regression(X, y), k, act, delta_f, lambda, seed, regression(Xt, yt));
        },
        py::arg("X"), py::arg("y"), py::arg("k_features"), py::arg("activation"), py::arg("delta_f"),
        py::arg("lambda_"), py::arg("seed"), py::arg("X_test"), py::arg("y_test"));
    m.def(
        "fit_logistic",
        [=](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, const Eigen::MatrixXd& Xt,
            const Eigen::VectorXd& yt) {
            Eigen::VectorXd w;
            ErmResult r = fit_logistic(classification(X, y), lambda, classification(Xt, yt), &w);
            return py::make_tuple(r, w);
        },
        py::arg("X"), py::arg("y"), py::arg("lambda_"), py::arg("X_test"), py::arg("y_test"),
        "Returns (result, weights).");
    m.def(
        "fit_ridge_classification",
        [=](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, const Eigen::MatrixXd& Xt,
            const Eigen::VectorXd& yt) {
            return fit_ridge_classification(classification(X, y), lambda, classification(Xt, yt));
        },
        py::arg("X"), py::arg("y"), py::arg("lambda_"), py::arg("X_test"), py::arg("y_test"));

    py::class_<CovarianceReport>(m, "CovarianceReport")
        .def_readonly("layer", &CovarianceReport::layer)
        .def_readonly("theory", &CovarianceReport::theory)
        .def_readonly("empirical", &CovarianceReport::empirical)
        .def_readonly("rel_frobenius", &CovarianceReport::rel_frobenius)
        .def_readonly("n_samples", &CovarianceReport::n_samples);
    m.def(
        "theory_covariance",
        [](const NetworkSpec& s, const WeightSet& w, int layer, std::optional<Eigen::MatrixXd> sigma) {
            const int d = w.input_dim();
            return theory_covariance(s, w, layer, sigma ? *sigma : Eigen::MatrixXd(Eigen::MatrixXd::Identity(d, d)));
        },
        py::arg("spec"), py::arg("weights"), py::arg("layer"), py::arg("sigma") = py::none(),
        "Population covariance of layer activations; sigma defaults to the identity input covariance.");
    m.def("covariance_check", &covariance_check, py::arg("spec"), py::arg("weights"), py::arg("layers"),
          py::arg("n_samples"), py::arg("seed"));
    m.def("rel_frobenius", &rel_frobenius, py::arg("empirical"), py::arg("theory"));
    m.def("k_statistic", &k_statistic, py::arg("x"), py::arg("order"));

    py::class_<GaussianityReport>(m, "GaussianityReport")
        .def_readonly("cumulants", &GaussianityReport::cumulants)
        .def_readonly("ks_statistic", &GaussianityReport::ks_statistic)
        .def_readonly("qq_points", &GaussianityReport::qq_points)
        .def_readonly("scaled_variance", &GaussianityReport::scaled_variance)
        .def_readonly("n_samples", &GaussianityReport::n_samples);
    m.def("gaussianity_diagnostics", &gaussianity_diagnostics, py::arg("spec"), py::arg("weights"),
          py::arg("n_samples"), py::arg("seed"));
}
