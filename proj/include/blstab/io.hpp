#pragma once

#include <string>

#include <json.hpp>

#include "blstab/datum.hpp"
#include "blstab/fourier.hpp"
#include "blstab/gaussian_bl.hpp"
#include "blstab/integrator.hpp"
#include "blstab/optimizer.hpp"
#include "blstab/stability.hpp"

namespace blstab {

using Json = nlohmann::json;

// Matrices serialize as row-major nested arrays.
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

// Datum file schema: {"d": int, "factors": [{"matrix": [[...]], "p": number|"inf"}]}.
Json datum_to_json(const Datum& datum);
Datum datum_from_json(const Json& j);

Json verdict_to_json(const FeasibilityVerdict& v);
Json verdict_to_json(const SimplicityVerdict& v);
Json geometric_to_json(const GeometricCheck& c);

// Gaussian specs: {c_re, c_im, S_re, S_im, w_re, w_im}.
Json gaussian_spec_to_json(const ComplexGaussianSpec& g);
ComplexGaussianSpec gaussian_spec_from_json(const Json& j);

// FunctionSpec carries a "variant" discriminator.
Json function_spec_to_json(const FunctionSpec& f);
FunctionSpec function_spec_from_json(const Json& j);
std::vector<FunctionSpec> function_tuple_from_json(const Json& j);

Json tuple_to_json(const GaussianTuple& t);
GaussianTuple tuple_from_json(const Json& j);

Json value_report_to_json(const CenteredValueReport& r);
Json optimizer_result_to_json(const OptimizerResult& r);
Json deficit_report_to_json(const DeficitReport& r);
Json hy_report_to_json(const HYReport& r);
Json exponent_fit_to_json(const ExponentFit& f);

// Fixed-format float for CSV cells (round-trip exact).
std::string csv_double(double x);

// FNV-1a hash of the canonical (sorted-key) dump.
std::string config_hash(const Json& config);

Json load_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace blstab
