#include "dtl/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dtl/error.hpp"

namespace dtl {

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

Json to_json(const Activation& act) {
    Json j;
    switch (act.tag) {
        case ActivationTag::TanhScale: j = {{"kind", "tanh_scale"}, {"a", act.scale}}; break;
        case ActivationTag::ErfScale: j = {{"kind", "erf_scale"}, {"a", act.scale}}; break;
        case ActivationTag::Sign: j = {{"kind", "sign"}}; break;
        case ActivationTag::ShiftedRelu: j = {{"kind", "shifted_relu"}}; break;
        case ActivationTag::Identity: j = {{"kind", "identity"}}; break;
        case ActivationTag::Tabulated: {
            j = {{"kind", "tabulated"}, {"nodes", Json::array()}};
            for (auto [x, y] : act.nodes()) j["nodes"].push_back({x, y});
            break;
        }
    }
    return j;
}

Activation activation_from_json(const Json& j) {
    if (j.is_string()) return parse_activation(j.get<std::string>());
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("activation: expected a string or an object with 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "tanh_scale") return Activation::tanh_scale(j.value("a", 1.0));
    if (kind == "erf_scale") return Activation::erf_scale(j.value("a", 1.0));
    if (kind == "sign") return Activation::sign();
    if (kind == "shifted_relu") return Activation::shifted_relu();
    if (kind == "identity") return Activation::identity();
    if (kind == "tabulated") {
        std::vector<std::pair<double, double>> nodes;
        for (const auto& n : j.at("nodes")) nodes.emplace_back(n.at(0).get<double>(), n.at(1).get<double>());
        return Activation::tabulated(std::move(nodes));
    }
    throw ConfigError("activation: unknown kind '" + kind + "'");
}

Json to_json(const SpectralMeasure& mu) {
    Json j;
    j["atoms"] = Json::array();
    for (auto [loc, m] : mu.atoms()) j["atoms"].push_back({loc, m});
    if (mu.density()) j["density"] = {{"grid", mu.density()->grid}, {"values", mu.density()->values}};
    return j;
}

SpectralMeasure spectrum_from_json(const Json& j) {
    std::vector<std::pair<double, double>> atoms;
    if (j.contains("atoms"))
        for (const auto& a : j.at("atoms")) atoms.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
    std::optional<Density> density;
    if (j.contains("density")) {
        Density d;
        d.grid = j.at("density").at("grid").get<std::vector<double>>();
        d.values = j.at("density").at("values").get<std::vector<double>>();
        density = std::move(d);
    }
    try {
        return SpectralMeasure(std::move(atoms), std::move(density));
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

Json to_json(const NetworkSpec& spec) {
    Json j;
    j["depth"] = spec.depth();
    j["widths"] = spec.widths;
    j["weight_vars"] = spec.weight_vars;
    j["readout_var"] = spec.readout_var;
    j["noise_var"] = spec.noise_var;
    j["activations"] = Json::array();
    for (const auto& a : spec.activations) j["activations"].push_back(to_json(a));
    j["input_spectrum"] = to_json(spec.input_spectrum);
    return j;
}

NetworkSpec spec_from_json(const Json& j) {
    try {
        NetworkSpec s;
        const auto& acts = j.at("activations");
        for (const auto& a : acts) s.activations.push_back(activation_from_json(a));
        const std::size_t L = s.activations.size();
        if (j.contains("depth") && j.at("depth").get<std::size_t>() != L)
            throw ConfigError("spec: depth does not match the number of activations");
        s.widths = j.contains("widths") ? j.at("widths").get<std::vector<double>>() : std::vector<double>(L, 1.0);
        s.weight_vars =
            j.contains("weight_vars") ? j.at("weight_vars").get<std::vector<double>>() : std::vector<double>(L, 1.0);
        s.readout_var = j.value("readout_var", 1.0);
        s.noise_var = j.value("noise_var", 0.0);
        if (j.contains("input_spectrum")) s.input_spectrum = spectrum_from_json(j.at("input_spectrum"));
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("spec: ") + e.what());
    } catch (const ModelError& e) {
        throw ConfigError(e.what());
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << origin << ":" << line << ":" << col << ": JSON parse error";
        throw ConfigError(os.str());
    }
}

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw ResourceError("cannot write " + path);
    f << content;
    if (!f) throw ResourceError("write failed for " + path);
}

NetworkSpec load_spec(const std::string& path) { return spec_from_json(parse_json_text(read_text(path), path)); }

Json to_json(const GepProfile& p) {
    Json j;
    j["r"] = p.r;
    j["kappa1"] = p.kappa1;
    j["kappa_star"] = p.kappa_star;
    j["rho"] = p.rho;
    j["eps_r"] = p.eps_r;
    j["check_q"] = p.check_q;
    j["warnings"] = p.warnings;
    return j;
}

Json to_json(const CurvePoint& cp) {
    const Overlaps& o = cp.overlaps;
    Json j;
    j["kind"] = to_string(cp.kind);
    j["alpha"] = cp.alpha;
    j["lambda"] = cp.lambda;
    j["error"] = cp.error;
    j["overlaps"] = {{"V", o.V},         {"q", o.q},         {"m", o.m},
                     {"V_hat", o.V_hat}, {"q_hat", o.q_hat}, {"m_hat", o.m_hat},
                     {"iterations", o.iterations}, {"residual", o.residual}, {"floored", o.floored}};
    if (cp.kind == CurveKind::RandomFeatures) j["gamma"] = cp.gamma;
    if (cp.feature_activation) {
        j["delta_f"] = cp.delta_f;
        j["feature_activation"] = to_json(*cp.feature_activation);
    }
    return j;
}

Json to_json(const ErmResult& r) {
    return {{"method", r.method},         {"lambda", r.lambda},       {"n_train", r.n_train},
            {"train_loss", r.train_loss}, {"test_error", r.test_error}, {"test_std_error", r.test_std_error},
            {"n_test", r.n_test},         {"seed", r.seed},           {"wallclock", r.wallclock}};
}

Json to_json(const CovarianceReport& r, bool include_matrices) {
    Json j{{"layer", r.layer}, {"rel_frobenius", r.rel_frobenius}, {"n_samples", r.n_samples},
           {"dim", r.theory.rows()}};
    if (include_matrices) {
        auto mat = [](const Eigen::MatrixXd& m) {
            Json rows = Json::array();
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                std::vector<double> row(m.cols());
                for (Eigen::Index k = 0; k < m.cols(); ++k) row[k] = m(i, k);
                rows.push_back(row);
            }
            return rows;
        };
        j["theory"] = mat(r.theory);
        j["empirical"] = mat(r.empirical);
    }
    return j;
}

Json to_json(const GaussianityReport& r) {
    Json j;
    Json cum;
    for (auto [order, v] : r.cumulants) cum[std::to_string(order)] = v;
    j["cumulants"] = cum;
    j["ks_statistic"] = r.ks_statistic;
    j["scaled_variance"] = r.scaled_variance;
    j["n_samples"] = r.n_samples;
    j["qq_points"] = Json::array();
    for (auto [t, e] : r.qq_points) j["qq_points"].push_back({t, e});
    return j;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
    std::ostringstream os;
    os << "kind,alpha,lambda,error,q,m,V,iterations,residual\n";
    for (const auto& p : points) {
        os << to_string(p.kind) << ',' << format_number(p.alpha) << ',' << format_number(p.lambda) << ','
           << format_number(p.error) << ',' << format_number(p.overlaps.q) << ',' << format_number(p.overlaps.m) << ','
           << format_number(p.overlaps.V) << ',' << p.overlaps.iterations << ','
           << format_number(p.overlaps.residual) << '\n';
    }
    return os.str();
}

std::string erm_csv(const std::vector<ErmResult>& results, const std::vector<double>& alphas) {
    std::ostringstream os;
    os << "method,alpha,n,lambda,error,stderr,seed\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        os << r.method << ',' << (i < alphas.size() ? format_number(alphas[i]) : std::string("nan")) << ','
           << r.n_train << ',' << format_number(r.lambda) << ',' << format_number(r.test_error) << ','
           << format_number(r.test_std_error) << ',' << r.seed << '\n';
    }
    return os.str();
}

}  // namespace dtl
