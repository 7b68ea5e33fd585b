#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dtl/covariance.hpp"
#include "dtl/gep.hpp"
#include "dtl/simulator.hpp"
#include "dtl/spectrum.hpp"
#include "dtl/theory.hpp"

namespace dtl {

using Json = nlohmann::ordered_json;

Json to_json(const Activation& act);
Activation activation_from_json(const Json& j);

Json to_json(const SpectralMeasure& mu);
SpectralMeasure spectrum_from_json(const Json& j);

Json to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const Json& j);

// Parse failures raise ConfigError with line and column.
Json parse_json_text(const std::string& text, const std::string& origin);
NetworkSpec load_spec(const std::string& path);

Json to_json(const GepProfile& p);
Json to_json(const CurvePoint& cp);
Json to_json(const ErmResult& r);
Json to_json(const CovarianceReport& r, bool include_matrices = false);
Json to_json(const GaussianityReport& r);

// 17 significant digits.
std::string format_number(double x);

std::string curve_csv(const std::vector<CurvePoint>& points);
std::string erm_csv(const std::vector<ErmResult>& results, const std::vector<double>& alphas = {});

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace dtl
