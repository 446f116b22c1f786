#include "blstab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace blstab {

namespace {

void require_keys(const Json& j, const std::vector<std::string>& required,
                  const std::vector<std::string>& optional, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& key : required)
    if (!j.contains(key))
      throw std::invalid_argument(where + ": missing required field '" + key + "'");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    const bool known =
        std::find(required.begin(), required.end(), key) != required.end() ||
        std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) throw std::invalid_argument(where + ": unknown field '" + key + "'");
  }
}

}  // namespace

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw std::invalid_argument("matrix: expected a nested array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols)
      throw std::invalid_argument("matrix: ragged rows");
    for (int k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw std::invalid_argument("matrix: non-numeric entry");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("vector: expected an array");
  Vector v(static_cast<int>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument("vector: non-numeric entry");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

Json datum_to_json(const Datum& datum) {
  Json factors = Json::array();
  for (const auto& f : datum.factors) {
    Json jf;
    jf["matrix"] = matrix_to_json(f.map);
    if (std::isinf(f.p))
      jf["p"] = "inf";
    else
      jf["p"] = f.p;
    factors.push_back(jf);
  }
  return Json{{"d", datum.dim}, {"factors", factors}};
}

Datum datum_from_json(const Json& j) {
  require_keys(j, {"d", "factors"}, {}, "datum");
  if (!j["d"].is_number_integer()) throw std::invalid_argument("datum: 'd' must be an integer");
  const int d = j["d"].get<int>();
  if (!j["factors"].is_array() || j["factors"].empty())
    throw std::invalid_argument("datum: 'factors' must be a nonempty array");
  std::vector<Factor> factors;
  for (const auto& jf : j["factors"]) {
    require_keys(jf, {"matrix", "p"}, {}, "datum factor");
    Factor f;
    f.map = matrix_from_json(jf["matrix"]);
    if (jf["p"].is_string()) {
      if (jf["p"].get<std::string>() != "inf")
        throw std::invalid_argument("datum factor: 'p' string form must be \"inf\"");
      f.p = std::numeric_limits<double>::infinity();
    } else if (jf["p"].is_number()) {
      f.p = jf["p"].get<double>();
      if (f.p < 1.0)
        throw std::invalid_argument("datum factor: exponent must lie in [1, inf]");
    } else {
      throw std::invalid_argument("datum factor: 'p' must be a number or \"inf\"");
    }
    factors.push_back(std::move(f));
  }
  return make_datum(d, std::move(factors));
}

namespace {

Json subspace_to_json(const SubspaceBasis& v) { return matrix_to_json(v.rows); }

}  // namespace

Json verdict_to_json(const FeasibilityVerdict& v) {
  Json j;
  switch (v.tag) {
    case FeasibilityTag::InfiniteWithWitness: j["tag"] = "infinite_with_witness"; break;
    case FeasibilityTag::FeasibleOnCandidates: j["tag"] = "feasible_on_candidates"; break;
    case FeasibilityTag::CertifiedFinite: j["tag"] = "certified_finite"; break;
  }
  j["scaling_defect"] = v.scaling_defect;
  j["worst_defect"] = v.worst_defect;
  if (v.witness) j["witness"] = subspace_to_json(*v.witness);
  return j;
}

Json verdict_to_json(const SimplicityVerdict& v) {
  Json j;
  switch (v.tag) {
    case SimplicityTag::Simple: j["tag"] = "simple"; break;
    case SimplicityTag::NotSimpleWithWitness: j["tag"] = "not_simple_with_witness"; break;
    case SimplicityTag::SimpleOnCandidates: j["tag"] = "simple_on_candidates"; break;
  }
  j["worst_proper_defect"] = v.worst_proper_defect;
  if (v.witness) j["witness"] = subspace_to_json(*v.witness);
  return j;
}

Json geometric_to_json(const GeometricCheck& c) {
  return Json{{"geometric", c.geometric},
              {"projection_residual", c.projection_residual},
              {"frame_residual", c.frame_residual}};
}

Json gaussian_spec_to_json(const ComplexGaussianSpec& g) {
  Json j;
  j["c_re"] = g.amplitude.real();
  j["c_im"] = g.amplitude.imag();
  j["S_re"] = matrix_to_json(g.exponent.real());
  j["S_im"] = matrix_to_json(g.exponent.imag());
  j["w_re"] = vector_to_json(g.linear.real());
  j["w_im"] = vector_to_json(g.linear.imag());
  return j;
}

ComplexGaussianSpec gaussian_spec_from_json(const Json& j) {
  require_keys(j, {"c_re", "c_im", "S_re", "S_im", "w_re", "w_im"}, {}, "gaussian spec");
  const Matrix s_re = matrix_from_json(j["S_re"]);
  const Matrix s_im = matrix_from_json(j["S_im"]);
  const Vector w_re = vector_from_json(j["w_re"]);
  const Vector w_im = vector_from_json(j["w_im"]);
  return make_complex_gaussian(
      Complex(j["c_re"].get<double>(), j["c_im"].get<double>()),
      s_re.cast<Complex>() + Complex(0, 1) * s_im.cast<Complex>(),
      w_re.cast<Complex>() + Complex(0, 1) * w_im.cast<Complex>());
}

Json function_spec_to_json(const FunctionSpec& f) {
  Json j;
  if (const auto* g = std::get_if<ComplexGaussianSpec>(&f)) {
    j = gaussian_spec_to_json(*g);
    j["variant"] = "closed_gaussian";
  } else if (const auto* sum = std::get_if<SumOfGaussians>(&f)) {
    j["variant"] = "sum_of_gaussians";
    Json terms = Json::array();
    for (const auto& t : sum->terms) terms.push_back(gaussian_spec_to_json(t));
    j["terms"] = terms;
  } else if (const auto* gb = std::get_if<GaussianPlusBump>(&f)) {
    j["variant"] = "gaussian_plus_bump";
    j["gaussian"] = gaussian_spec_to_json(gb->gaussian);
    j["amplitude"] = gb->amplitude;
    j["center"] = vector_to_json(gb->center);
    j["radius"] = gb->radius;
  } else if (const auto* grid = std::get_if<GridFunction>(&f)) {
    j["variant"] = "grid_function";
    j["lo"] = vector_to_json(grid->lo);
    j["spacing"] = grid->spacing;
    j["shape"] = grid->shape;
    Json re = Json::array(), im = Json::array();
    for (const auto& s : grid->samples) {
      re.push_back(s.real());
      im.push_back(s.imag());
    }
    j["samples_re"] = re;
    j["samples_im"] = im;
  } else if (const auto* mg = std::get_if<ModulatedGaussian>(&f)) {
    j["variant"] = "modulated_gaussian";
    j["base"] = gaussian_spec_to_json(mg->base);
    j["phase"] = matrix_to_json(mg->phase);
  }
  return j;
}

FunctionSpec function_spec_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("variant"))
    throw std::invalid_argument("function spec: missing 'variant' discriminator");
  const std::string variant = j["variant"].get<std::string>();
  if (variant == "closed_gaussian") {
    Json body = j;
    body.erase("variant");
    return gaussian_spec_from_json(body);
  }
  if (variant == "sum_of_gaussians") {
    require_keys(j, {"variant", "terms"}, {}, "sum_of_gaussians");
    SumOfGaussians sum;
    for (const auto& t : j["terms"]) sum.terms.push_back(gaussian_spec_from_json(t));
    return sum;
  }
  if (variant == "gaussian_plus_bump") {
    require_keys(j, {"variant", "gaussian", "amplitude", "center", "radius"}, {},
                 "gaussian_plus_bump");
    GaussianPlusBump gb;
    gb.gaussian = gaussian_spec_from_json(j["gaussian"]);
    gb.amplitude = j["amplitude"].get<double>();
    gb.center = vector_from_json(j["center"]);
    gb.radius = j["radius"].get<double>();
    if (gb.radius <= 0.0)
      throw std::invalid_argument("gaussian_plus_bump: radius must be positive");
    if (gb.center.size() != gb.gaussian.dim())
      throw std::invalid_argument("gaussian_plus_bump: center dimension mismatch");
    return gb;
  }
  if (variant == "grid_function") {
    require_keys(j, {"variant", "lo", "spacing", "shape", "samples_re", "samples_im"}, {},
                 "grid_function");
    GridFunction grid;
    grid.lo = vector_from_json(j["lo"]);
    grid.spacing = j["spacing"].get<double>();
    grid.shape = j["shape"].get<std::vector<int>>();
    const auto& re = j["samples_re"];
    const auto& im = j["samples_im"];
    long expected = 1;
    for (int s : grid.shape) expected *= s;
    if (static_cast<long>(re.size()) != expected || re.size() != im.size())
      throw std::invalid_argument("grid_function: sample count does not match shape");
    for (size_t i = 0; i < re.size(); ++i)
      grid.samples.push_back(Complex(re[i].get<double>(), im[i].get<double>()));
    return grid;
  }
  if (variant == "modulated_gaussian") {
    require_keys(j, {"variant", "base", "phase"}, {}, "modulated_gaussian");
    ModulatedGaussian mg;
    mg.base = gaussian_spec_from_json(j["base"]);
    mg.phase = matrix_from_json(j["phase"]);
    if (mg.phase.rows() != mg.base.dim() || !is_symmetric(mg.phase))
      throw std::invalid_argument("modulated_gaussian: phase must be symmetric d x d");
    return mg;
  }
  throw std::invalid_argument("function spec: unknown variant '" + variant + "'");
}

std::vector<FunctionSpec> function_tuple_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("function tuple: expected an array");
  std::vector<FunctionSpec> tuple;
  for (const auto& f : j) tuple.push_back(function_spec_from_json(f));
  return tuple;
}

Json tuple_to_json(const GaussianTuple& t) {
  Json j;
  Json exps = Json::array();
  for (const auto& a : t.exponents) exps.push_back(matrix_to_json(a));
  j["exponents"] = exps;
  if (!t.offsets.empty()) {
    Json offs = Json::array();
    for (const auto& v : t.offsets) offs.push_back(vector_to_json(v));
    j["offsets"] = offs;
  }
  if (!t.amplitudes.empty()) j["amplitudes"] = t.amplitudes;
  return j;
}

GaussianTuple tuple_from_json(const Json& j) {
  require_keys(j, {"exponents"}, {"offsets", "amplitudes"}, "gaussian tuple");
  GaussianTuple t;
  for (const auto& a : j["exponents"]) t.exponents.push_back(matrix_from_json(a));
  if (j.contains("offsets"))
    for (const auto& v : j["offsets"]) t.offsets.push_back(vector_from_json(v));
  if (j.contains("amplitudes")) t.amplitudes = j["amplitudes"].get<std::vector<double>>();
  return t;
}

Json value_report_to_json(const CenteredValueReport& r) {
  return Json{{"value", r.value},
              {"det_m", std::exp(log_det_spd(r.m))},
              {"min_eigenvalue", r.min_eigenvalue},
              {"normalized", r.normalized},
              {"scaling_defect", r.scaling_defect},
              {"pi_corrected", r.pi_corrected}};
}

Json optimizer_result_to_json(const OptimizerResult& r) {
  Json j;
  j["value"] = r.value;
  j["maximizer"] = tuple_to_json(r.maximizer);
  j["el_residual"] = r.el_residual;
  j["restarts_agree"] = r.restarts_agree;
  j["divergence_flag"] = r.divergence_flag;
  j["value_monotone"] = r.value_monotone;
  j["iterations"] = r.iterations;
  return j;
}

Json deficit_report_to_json(const DeficitReport& r) {
  Json j;
  j["blbp"] = r.blbp;
  j["bl_const"] = r.bl_const;
  j["deficit"] = r.deficit;
  j["dist_ratios"] = r.dist_ratios;
  j["implied_c"] = r.implied_c;
  j["holds_sharpened"] = r.holds_sharpened;
  j["quad_error"] = r.quad_error;
  if (r.class_agreement_gap >= 0.0) j["class_agreement_gap"] = r.class_agreement_gap;
  return j;
}

Json hy_report_to_json(const HYReport& r) {
  return Json{{"ratio", r.ratio},         {"dist_ratio", r.dist_ratio},
              {"implied_c", r.implied_c}, {"norm", r.norm},
              {"fourier_norm", r.fourier_norm}, {"quad_error", r.quad_error}};
}

Json exponent_fit_to_json(const ExponentFit& f) {
  return Json{{"grid", f.grid},
              {"values", f.values},
              {"slope", f.slope},
              {"intercept", f.intercept},
              {"half_width", f.half_width}};
}

std::string csv_double(double x) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", x);
  return buffer;
}

std::string config_hash(const Json& config) {
  const std::string canonical = config.dump();
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buffer[24];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

}  // namespace blstab
