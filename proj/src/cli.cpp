#include "blstab/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

namespace blstab {

namespace fs = std::filesystem;

namespace {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void check_known_fields(const Json& j, const std::vector<std::string>& known,
                        const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

double get_number(const Json& j, const std::string& key, double fallback,
                  const std::string& where, double lo = -1e300, double hi = 1e300) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
  const double v = j[key].get<double>();
  if (v < lo || v > hi)
    throw ConfigError(where + ": '" + key + "' is out of range");
  return v;
}

int get_int(const Json& j, const std::string& key, int fallback, const std::string& where,
            int lo = std::numeric_limits<int>::min()) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer())
    throw ConfigError(where + ": '" + key + "' must be an integer");
  const int v = j[key].get<int>();
  if (v < lo) throw ConfigError(where + ": '" + key + "' is out of range");
  return v;
}

QuadratureOpts parse_quadrature(const Json& j, uint64_t seed) {
  QuadratureOpts opts;
  opts.seed = seed;
  if (j.is_null()) return opts;
  check_known_fields(j, {"points_per_axis", "box_widen", "method", "mc_samples",
                         "target_rel_error"},
                     "quadrature");
  opts.points_per_axis = get_int(j, "points_per_axis", 0, "quadrature", 0);
  if (opts.points_per_axis != 0 && opts.points_per_axis < 16)
    throw ConfigError("quadrature: 'points_per_axis' must be 0 (auto) or at least 16");
  opts.box_widen = get_number(j, "box_widen", 1.0, "quadrature", 1.0, 1e3);
  if (j.contains("method")) {
    const std::string method = j["method"].get<std::string>();
    if (method == "tensor-grid") opts.method = QuadMethod::TensorGrid;
    else if (method == "monte-carlo") opts.method = QuadMethod::MonteCarlo;
    else throw ConfigError("quadrature: 'method' must be tensor-grid or monte-carlo");
  }
  opts.mc_samples = static_cast<long>(get_number(j, "mc_samples", 200000, "quadrature", 100));
  opts.target_rel_error =
      get_number(j, "target_rel_error", 1e-6, "quadrature", 1e-15, 1.0);
  return opts;
}

OptimizerOpts parse_optimizer(const Json& j, uint64_t seed) {
  OptimizerOpts opts;
  opts.seed = seed;
  if (j.is_null()) return opts;
  check_known_fields(j, {"restarts", "max_iters", "fixed_point_iters", "value_tol",
                         "grad_tol", "divergence_value_factor", "divergence_eig_ratio",
                         "divergence_window"},
                     "optimizer");
  opts.restarts = get_int(j, "restarts", 8, "optimizer", 1);
  opts.max_iters = get_int(j, "max_iters", 2000, "optimizer", 1);
  opts.fixed_point_iters = get_int(j, "fixed_point_iters", 500, "optimizer", 1);
  opts.value_tol = get_number(j, "value_tol", 1e-13, "optimizer", 0.0, 1.0);
  opts.grad_tol = get_number(j, "grad_tol", 1e-11, "optimizer", 0.0, 1.0);
  if (opts.value_tol <= 0.0 || opts.grad_tol <= 0.0)
    throw ConfigError("optimizer: tolerances must be positive");
  opts.divergence_value_factor =
      get_number(j, "divergence_value_factor", 1e6, "optimizer", 10.0);
  opts.divergence_eig_ratio =
      get_number(j, "divergence_eig_ratio", 1e-8, "optimizer", 0.0, 1.0);
  opts.divergence_window = get_int(j, "divergence_window", 50, "optimizer", 1);
  return opts;
}

DistanceOpts parse_distance(const Json& j, uint64_t seed) {
  DistanceOpts opts;
  opts.seed = seed;
  if (j.is_null()) return opts;
  check_known_fields(j, {"starts", "max_iters", "tol", "points_per_axis"}, "distance");
  opts.starts = get_int(j, "starts", 16, "distance", 1);
  opts.max_iters = get_int(j, "max_iters", 800, "distance", 10);
  opts.tol = get_number(j, "tol", 1e-11, "distance", 0.0, 1.0);
  if (opts.tol <= 0.0) throw ConfigError("distance: 'tol' must be positive");
  opts.quad.points_per_axis = get_int(j, "points_per_axis", 0, "distance", 0);
  return opts;
}

std::vector<double> parse_grid(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() < 6)
    throw ConfigError(where + ": expected an array of at least 6 numbers");
  std::vector<double> grid;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(where + ": non-numeric grid entry");
    grid.push_back(v.get<double>());
  }
  return grid;
}

}  // namespace

RunConfig validate_config(const std::string& path, const std::string& subcommand) {
  return validate_config_json(load_json_file(path), subcommand);
}

RunConfig validate_config_json(const Json& raw, const std::string& subcommand) {
  check_known_fields(raw, {"seed", "datum", "tuple", "output_dir", "quadrature",
                           "optimizer", "distance", "fourier", "deficit",
                           "distance_query", "experiment"},
                     "config");
  RunConfig config;
  config.subcommand = subcommand;

  if (!raw.contains("seed") || !raw["seed"].is_number_integer())
    throw ConfigError("config: required integer field 'seed' is missing");
  config.seed = raw["seed"].get<uint64_t>();

  if (raw.contains("datum")) {
    config.datum_path = raw["datum"].get<std::string>();
    if (!fs::exists(config.datum_path))
      throw ConfigError("config: 'datum' file does not exist: " + config.datum_path);
  }
  if (raw.contains("tuple")) {
    config.tuple_path = raw["tuple"].get<std::string>();
    if (!fs::exists(config.tuple_path))
      throw ConfigError("config: 'tuple' file does not exist: " + config.tuple_path);
  }
  if (raw.contains("output_dir")) config.output_dir = raw["output_dir"].get<std::string>();

  config.quad = parse_quadrature(raw.value("quadrature", Json()), config.seed);
  config.optimizer = parse_optimizer(raw.value("optimizer", Json()), config.seed);
  config.distance = parse_distance(raw.value("distance", Json()), config.seed);

  const bool needs_datum = subcommand == "check" || subcommand == "constant" ||
                           subcommand == "reduce" || subcommand == "deficit";
  if (needs_datum && config.datum_path.empty())
    throw ConfigError("config: subcommand '" + subcommand + "' requires 'datum'");
  if ((subcommand == "deficit" || subcommand == "distance") && config.tuple_path.empty())
    throw ConfigError("config: subcommand '" + subcommand + "' requires 'tuple'");

  if (raw.contains("fourier")) {
    const Json& jf = raw["fourier"];
    check_known_fields(jf, {"p", "force_numeric", "with_distance"}, "fourier");
    config.fourier_p = get_number(jf, "p", 1.5, "fourier", 1.0, 2.0);
    config.fourier_force_numeric = jf.value("force_numeric", false);
    config.fourier_with_distance = jf.value("with_distance", false);
  }
  if (raw.contains("deficit")) {
    const Json& jd = raw["deficit"];
    check_known_fields(jd, {"bl_const"}, "deficit");
    if (jd.contains("bl_const")) {
      const double bl = jd["bl_const"].get<double>();
      if (bl <= 0.0) throw ConfigError("deficit: 'bl_const' must be positive");
      config.bl_const = bl;
    }
  }
  if (raw.contains("distance_query")) {
    const Json& jd = raw["distance_query"];
    check_known_fields(jd, {"p", "class"}, "distance_query");
    config.distance_p = get_number(jd, "p", 2.0, "distance_query", 1.0, 100.0);
    const std::string cls = jd.value("class", std::string("complex"));
    if (cls == "complex") config.distance_class = GaussianClass::Complex;
    else if (cls == "real-positive") config.distance_class = GaussianClass::RealPositive;
    else throw ConfigError("distance_query: 'class' must be complex or real-positive");
  }
  if (subcommand == "experiment") {
    if (!raw.contains("experiment"))
      throw ConfigError("config: subcommand 'experiment' requires an 'experiment' section");
    const Json& je = raw["experiment"];
    if (!je.contains("name"))
      throw ConfigError("experiment: required field 'name' is missing");
    config.experiment_name = je["name"].get<std::string>();
    const std::vector<std::string> names = {"sweep", "opt1", "opt2",
                                            "tuple", "holder", "complex"};
    if (std::find(names.begin(), names.end(), config.experiment_name) == names.end())
      throw ConfigError("experiment: unknown name '" + config.experiment_name + "'");
    config.experiment_params = je;
  }

  // Canonical echo of the effective configuration (sorted keys by default).
  Json canonical = raw;
  canonical["subcommand"] = subcommand;
  canonical.erase("output_dir");  // placement does not change the run identity
  config.canonical = canonical;
  return config;
}

namespace {

struct LockFile {
  std::string path;
  bool held = false;
  explicit LockFile(const std::string& dir) : path(dir + "/.lock") {
    std::FILE* f = std::fopen(path.c_str(), "wx");
    if (!f)
      throw ConfigError("run directory is locked by another process: " + path);
    std::fclose(f);
    held = true;
  }
  ~LockFile() {
    if (held) std::remove(path.c_str());
  }
};

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buffer;
}

struct RunContext {
  RunConfig config;
  std::string dir;
  Json summary;
  std::vector<std::string> outputs;
  bool numerical_flag = false;

  void write_csv(const std::string& name, const std::string& header,
                 const std::vector<std::vector<double>>& rows) {
    std::ostringstream out;
    out << header << "\n";
    for (const auto& row : rows) {
      for (size_t i = 0; i < row.size(); ++i)
        out << (i ? "," : "") << csv_double(row[i]);
      out << "\n";
    }
    write_text_file(dir + "/" + name, out.str());
    outputs.push_back(name);
  }
};

StabilityOpts stability_opts_from(const RunConfig& config) {
  StabilityOpts opts;
  opts.quad = config.quad;
  opts.distance = config.distance;
  opts.seed = config.seed;
  return opts;
}

double resolve_bl_const(const RunConfig& config, const Datum& datum) {
  if (config.bl_const) return *config.bl_const;
  const OptimizerResult opt = bl_constant(datum, config.optimizer);
  if (opt.divergence_flag)
    throw std::runtime_error("BL constant computation diverged (likely infinite)");
  return opt.value;
}

void run_check(RunContext& ctx) {
  const Datum datum = datum_from_json(load_json_file(ctx.config.datum_path));
  CandidateOpts copts;
  copts.seed = ctx.config.seed;
  const auto feasibility = classify_finiteness(datum, copts);
  ctx.summary["scaling_defect"] = scaling_defect(datum);
  ctx.summary["feasibility"] = verdict_to_json(feasibility);
  if (feasibility.tag != FeasibilityTag::InfiniteWithWitness)
    ctx.summary["simplicity"] = verdict_to_json(classify_simplicity(datum, copts));
  ctx.summary["geometric"] = geometric_to_json(is_geometric(datum));
}

void run_constant(RunContext& ctx) {
  const Datum datum = datum_from_json(load_json_file(ctx.config.datum_path));
  const OptimizerResult result = bl_constant(datum, ctx.config.optimizer);
  ctx.summary["result"] = optimizer_result_to_json(result);
  std::vector<std::vector<double>> rows;
  for (const auto& t : result.trace)
    rows.push_back({static_cast<double>(t.iteration), t.value, t.eig_ratio});
  ctx.write_csv("trace.csv", "iteration,value,eig_ratio", rows);
  ctx.numerical_flag = result.divergence_flag;
}

void run_reduce(RunContext& ctx) {
  const Datum datum = datum_from_json(load_json_file(ctx.config.datum_path));
  const OptimizerResult opt = bl_constant(datum, ctx.config.optimizer);
  if (opt.divergence_flag) {
    ctx.summary["result"] = optimizer_result_to_json(opt);
    ctx.numerical_flag = true;
    return;
  }
  const GeometricReduction reduction = geometric_reduce(datum, opt.maximizer);
  ctx.summary["bl_constant"] = opt.value;
  ctx.summary["reduced_datum"] = datum_to_json(reduction.reduced);
  Json transforms = Json::array();
  for (const auto& e : reduction.factor_transforms) transforms.push_back(matrix_to_json(e));
  ctx.summary["factor_transforms"] = transforms;
  ctx.summary["base_transform"] = matrix_to_json(reduction.base_transform);
  ctx.summary["frame_residual"] = reduction.frame_residual;
  ctx.summary["projection_residual"] = reduction.projection_residual;
  ctx.summary["value_at_identity"] = reduction.value_at_identity;
  ctx.summary["el_residual_identity"] = reduction.el_residual_identity;
  write_text_file(ctx.dir + "/reduced_datum.json",
                  datum_to_json(reduction.reduced).dump(2) + "\n");
  ctx.outputs.push_back("reduced_datum.json");
}

void run_fourier(RunContext& ctx) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i <= 50; ++i) {
    const double p = 1.0 + i / 50.0;
    rows.push_back({p, sharp_hy_constant(p)});
  }
  ctx.write_csv("ap_table.csv", "p,a_p", rows);

  if (!ctx.config.datum_path.empty()) {
    const Datum datum = datum_from_json(load_json_file(ctx.config.datum_path));
    const double bl = resolve_bl_const(ctx.config, datum);
    ctx.summary["bl_constant"] = bl;
    ctx.summary["fbl_constant"] = fbl_constant(datum, bl);
  }
  if (!ctx.config.tuple_path.empty()) {
    const auto tuple = function_tuple_from_json(load_json_file(ctx.config.tuple_path));
    HYOpts opts;
    opts.quad = ctx.config.quad;
    opts.distance = ctx.config.distance;
    opts.force_numeric = ctx.config.fourier_force_numeric;
    opts.with_distance = ctx.config.fourier_with_distance;
    Json reports = Json::array();
    for (const auto& f : tuple)
      reports.push_back(hy_report_to_json(hy_ratio(f, ctx.config.fourier_p, opts)));
    ctx.summary["hy_reports"] = reports;
  }
}

void run_deficit(RunContext& ctx) {
  const Datum datum = datum_from_json(load_json_file(ctx.config.datum_path));
  const auto tuple = function_tuple_from_json(load_json_file(ctx.config.tuple_path));
  const double bl = resolve_bl_const(ctx.config, datum);
  const auto report = deficit_report(datum, tuple, bl, stability_opts_from(ctx.config));
  ctx.summary["report"] = deficit_report_to_json(report);
  ctx.numerical_flag = !report.holds_sharpened;
}

void run_distance(RunContext& ctx) {
  const auto tuple = function_tuple_from_json(load_json_file(ctx.config.tuple_path));
  Json results = Json::array();
  for (size_t i = 0; i < tuple.size(); ++i) {
    DistanceOpts opts = ctx.config.distance;
    opts.seed = ctx.config.seed + 7919 * (i + 1);
    const auto dist =
        dist_to_gaussians(tuple[i], ctx.config.distance_p, ctx.config.distance_class, opts);
    Json entry;
    entry["dist_upper_bound"] = dist.upper_bound;
    entry["argmin"] = gaussian_spec_to_json(dist.argmin);
    entry["converged"] = dist.converged;
    results.push_back(entry);
    ctx.numerical_flag = ctx.numerical_flag || !dist.converged;
  }
  ctx.summary["distances"] = results;
}

void run_experiment(RunContext& ctx) {
  const Json& params = ctx.config.experiment_params;
  const std::string& name = ctx.config.experiment_name;
  const StabilityOpts sopts = stability_opts_from(ctx.config);

  if (name == "sweep" || name == "opt1") {
    check_known_fields(params, {"name", "eps", "t_values"}, "experiment." + name);
    const Datum datum = datum_from_json(load_json_file(ctx.config.datum_path));
    const OptimizerResult opt = bl_constant(datum, ctx.config.optimizer);
    if (opt.divergence_flag) throw std::runtime_error("optimizer diverged");
    const PerturbationFamily family =
        default_family(datum, opt.maximizer, ctx.config.seed);
    if (name == "sweep") {
      const auto grid = parse_grid(params.value("eps", Json::array({3e-3, 6e-3, 1.2e-2, 2.4e-2, 4.8e-2, 6e-2})),
                                   "experiment.eps");
      const auto sweep = corollary_sweep(datum, family, grid, opt.value, sopts);
      ctx.summary["fit"] = exponent_fit_to_json(sweep.fit);
      ctx.summary["pass"] = std::abs(sweep.fit.slope - 2.0) <= 0.2;
      std::vector<std::vector<double>> rows;
      for (size_t i = 0; i < grid.size(); ++i)
        rows.push_back({grid[i], sweep.amplitudes[i], sweep.fit.values[i]});
      ctx.write_csv("experiment_sweep.csv", "eps,amplitude,deficit", rows);
      ctx.numerical_flag = !ctx.summary["pass"].get<bool>();
    } else {
      const auto grid = parse_grid(
          params.value("t_values", Json::array({1e-3, 2.5e-3, 6.3e-3, 1.6e-2, 4e-2, 1e-1})),
          "experiment.t_values");
      const auto result = opt1_experiment(datum, family, grid, sopts);
      ctx.summary["deficit_fit"] = exponent_fit_to_json(result.deficit_fit);
      ctx.summary["distance_fit"] = exponent_fit_to_json(result.distance_fit);
      ctx.summary["kappa"] = result.kappa;
      ctx.summary["u0"] = result.u0;
      ctx.summary["pass"] = std::abs(result.deficit_fit.slope - 2.0) <= 0.1;
      std::vector<std::vector<double>> rows;
      for (size_t i = 0; i < result.deficit_fit.grid.size(); ++i)
        rows.push_back({result.deficit_fit.grid[i], result.deficit_fit.values[i],
                        result.distance_fit.values[i]});
      ctx.write_csv("experiment_opt1.csv", "t,deficit,distance", rows);
      ctx.numerical_flag = !ctx.summary["pass"].get<bool>();
    }
    return;
  }

  if (name == "opt2") {
    check_known_fields(params, {"name", "deltas", "direction", "growth_k"},
                       "experiment.opt2");
    const Datum datum = datum_from_json(load_json_file(ctx.config.datum_path));
    const auto deltas = parse_grid(
        params.value("deltas", Json::array({1e-3, 2.5e-3, 6.3e-3, 1.6e-2, 4e-2, 1e-1})),
        "experiment.deltas");
    Vector direction = params.contains("direction")
                           ? vector_from_json(params["direction"])
                           : Vector::Constant(datum.codim(0), 1.0);
    const double growth_k = get_number(params, "growth_k", 1.0, "experiment.opt2", 1e-3);
    const auto result = opt2_experiment(datum, deltas, direction, growth_k, sopts);
    const double p1 = datum.factors[0].p;
    ctx.summary["deficit_fit"] = exponent_fit_to_json(result.deficit_fit);
    ctx.summary["distance_fit"] = exponent_fit_to_json(result.distance_fit);
    ctx.summary["pass"] = std::abs(result.deficit_fit.slope - p1) <= 0.15 &&
                          std::abs(result.distance_fit.slope - 1.0) <= 0.1;
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < result.deficit_fit.grid.size(); ++i)
      rows.push_back({result.deficit_fit.grid[i], result.translations[i],
                      result.deficit_fit.values[i], result.distance_fit.values[i],
                      result.norm_power_errors[i]});
    ctx.write_csv("experiment_opt2.csv",
                  "delta,translation,deficit,distance,norm_power_error", rows);
    ctx.numerical_flag = !ctx.summary["pass"].get<bool>();
    return;
  }

  if (name == "tuple") {
    check_known_fields(params, {"name", "samples", "spread", "offset_spread"},
                       "experiment.tuple");
    const Datum datum = datum_from_json(load_json_file(ctx.config.datum_path));
    TupleStabilitySpec spec;
    spec.samples = get_int(params, "samples", 200, "experiment.tuple", 10);
    spec.spread = get_number(params, "spread", 0.2, "experiment.tuple", 1e-6, 10.0);
    spec.offset_spread =
        get_number(params, "offset_spread", 0.5, "experiment.tuple", 0.0, 10.0);
    spec.seed = ctx.config.seed;
    const auto report = tuple_stability_experiment(datum, spec, ctx.config.optimizer, sopts);
    ctx.summary["bl_constant"] = report.bl_const;
    ctx.summary["restarts_agree"] = report.restarts_agree;
    ctx.summary["far_restarts_converge"] = report.far_restarts_converge;
    ctx.summary["max_value_drift_in_v"] = report.max_value_drift_in_v;
    ctx.summary["quadratic_coeff_lower"] = report.quadratic_coeff_lower;
    Json envelope = Json::array();
    for (const auto& [delta, eps] : report.modulus_envelope)
      envelope.push_back(Json{{"delta", delta}, {"eps", eps}});
    ctx.summary["modulus_envelope"] = envelope;
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < report.value_ratios.size(); ++i) {
      std::vector<double> row = {static_cast<double>(i), report.value_ratios[i],
                                 report.orbit_distances[i]};
      if (i < report.offset_distances.size()) {
        row.push_back(report.offset_distances[i]);
        row.push_back(report.offset_neglog_c[i]);
      }
      rows.push_back(row);
    }
    ctx.write_csv("experiment_tuple.csv",
                  "sample,value_ratio,orbit_distance,offset_distance,neglog_c", rows);
    ctx.numerical_flag = !report.restarts_agree || !report.far_restarts_converge;
    return;
  }

  if (name == "holder") {
    check_known_fields(params, {"name", "exponents", "profile", "power_r"},
                       "experiment.holder");
    std::vector<double> exponents = {2.0, 2.0};
    if (params.contains("exponents"))
      exponents = params["exponents"].get<std::vector<double>>();
    const std::string profile = params.value("profile", std::string("bump"));
    const double power_r = get_number(params, "power_r", 0.25, "experiment.holder", 1e-6);
    const auto report = holder_equality_family(
        exponents, profile == "gaussian" ? HolderProfile::Gaussian : HolderProfile::Bump,
        power_r, sopts);
    ctx.summary["blbp"] = report.blbp;
    ctx.summary["equality"] = report.equality;
    ctx.summary["proportionality_residual"] = report.proportionality_residual;
    ctx.summary["dist_ratios"] = report.dist_ratios;
    std::vector<std::vector<double>> rows;
    for (size_t j = 0; j < report.dist_ratios.size(); ++j)
      rows.push_back({static_cast<double>(j), exponents[j], report.dist_ratios[j]});
    ctx.write_csv("experiment_holder.csv", "factor,p,dist_ratio", rows);
    ctx.numerical_flag = !report.equality;
    return;
  }

  if (name == "complex") {
    check_known_fields(params, {"name", "dim", "directions"}, "experiment.complex");
    const int dim = get_int(params, "dim", 2, "experiment.complex", 1);
    std::vector<Vector> directions;
    if (params.contains("directions")) {
      for (const auto& v : params["directions"]) directions.push_back(vector_from_json(v));
    } else {
      directions.resize(4, Vector(2));
      directions[0] << 1.0, 0.0;
      directions[1] << 0.0, 1.0;
      directions[2] << 1.0, 1.0;
      directions[3] << 1.0, -1.0;
    }
    const auto result =
        complex_extremizer_build(dim, directions, ctx.config.optimizer, sopts);
    ctx.summary["coefficients"] = vector_to_json(result.coefficients);
    ctx.summary["phase_residual"] = result.phase_residual;
    ctx.summary["bl_constant"] = result.bl_const;
    ctx.summary["ratio_modulus"] = std::abs(result.ratio);
    ctx.summary["dist_upper"] = result.dist_upper;
    ctx.summary["dist_lower"] = result.dist_lower;
    const bool pass = result.phase_residual <= 1e-12 &&
                      std::abs(std::abs(result.ratio) - result.bl_const) <=
                          1e-6 * result.bl_const;
    ctx.summary["pass"] = pass;
    std::vector<std::vector<double>> rows;
    for (size_t j = 0; j < result.dist_upper.size(); ++j)
      rows.push_back({static_cast<double>(j), result.coefficients(static_cast<int>(j)),
                      result.dist_upper[j], result.dist_lower[j]});
    ctx.write_csv("experiment_complex.csv", "factor,coefficient,dist_upper,dist_lower",
                  rows);
    ctx.numerical_flag = !pass;
    return;
  }
  throw ConfigError("experiment: unknown name '" + name + "'");
}

int run_subcommand(const RunConfig& config) {
  RunContext ctx;
  ctx.config = config;
  const std::string hash = config_hash(config.canonical);
  ctx.dir = config.output_dir + "/" + hash;
  fs::create_directories(ctx.dir);
  LockFile lock(ctx.dir);

  const std::string started = timestamp_utc();
  write_text_file(ctx.dir + "/config.json", config.canonical.dump(2) + "\n");
  ctx.outputs.push_back("config.json");

  if (config.subcommand == "check") run_check(ctx);
  else if (config.subcommand == "constant") run_constant(ctx);
  else if (config.subcommand == "reduce") run_reduce(ctx);
  else if (config.subcommand == "fourier") run_fourier(ctx);
  else if (config.subcommand == "deficit") run_deficit(ctx);
  else if (config.subcommand == "distance") run_distance(ctx);
  else if (config.subcommand == "experiment") run_experiment(ctx);
  else throw ConfigError("unknown subcommand: " + config.subcommand);

  ctx.summary["subcommand"] = config.subcommand;
  ctx.summary["seed"] = config.seed;
  write_text_file(ctx.dir + "/summary.json", ctx.summary.dump(2) + "\n");
  ctx.outputs.push_back("summary.json");

  // Provenance record; timestamps live here and only here, so every other
  // emitted file is bitwise reproducible under the same config.
  Json record;
  record["config_hash"] = hash;
  record["tool_version"] = kToolVersion;
  record["started"] = started;
  record["finished"] = timestamp_utc();
  record["outputs"] = ctx.outputs;
  record["numerical_flag"] = ctx.numerical_flag;
  write_text_file(ctx.dir + "/run_record.json", record.dump(2) + "\n");

  std::cout << ctx.summary.dump(2) << "\n";
  std::cout << "run directory: " << ctx.dir << "\n";
  return ctx.numerical_flag ? 3 : 0;
}

std::vector<double> parse_delta_override(const std::string& text) {
  // "1e-1..1e-3" (8 log-spaced points) or a comma-separated list.
  std::vector<double> grid;
  const auto range_pos = text.find("..");
  if (range_pos != std::string::npos) {
    const double a = std::stod(text.substr(0, range_pos));
    const double b = std::stod(text.substr(range_pos + 2));
    const double lo = std::min(a, b), hi = std::max(a, b);
    for (int i = 0; i < 8; ++i)
      grid.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / 7));
    return grid;
  }
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) grid.push_back(std::stod(item));
  return grid;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Numerical laboratory for Euclidean Brascamp-Lieb inequalities"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::string config_path, output_dir, deltas, experiment_name;
  int64_t seed_override = -1;
  int restarts_override = 0;

  const std::vector<std::string> names = {"check",   "constant", "reduce",    "fourier",
                                          "deficit", "distance", "experiment"};
  std::vector<CLI::App*> subs;
  for (const auto& name : names) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration JSON")->required();
    sub->add_option("--seed", seed_override, "override the config seed");
    sub->add_option("--output-dir", output_dir, "override the output directory");
    if (name == "constant" || name == "reduce" || name == "experiment")
      sub->add_option("--restarts", restarts_override, "override optimizer restarts");
    if (name == "experiment") {
      sub->add_option("name", experiment_name, "experiment name override");
      sub->add_option("--deltas", deltas, "grid override, e.g. 1e-1..1e-3 or a,b,c");
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::string subcommand = app.get_subcommands().front()->get_name();

    // Overrides are applied to the raw JSON before hashing, so an overridden
    // run is addressed by its effective configuration.
    Json raw = load_json_file(config_path);
    if (seed_override >= 0) raw["seed"] = static_cast<uint64_t>(seed_override);
    if (restarts_override > 0) raw["optimizer"]["restarts"] = restarts_override;
    if (!experiment_name.empty()) raw["experiment"]["name"] = experiment_name;
    if (!deltas.empty()) {
      const auto grid = parse_delta_override(deltas);
      Json jgrid = Json::array();
      for (double d : grid) jgrid.push_back(d);
      const std::string name =
          raw.contains("experiment") && raw["experiment"].contains("name")
              ? raw["experiment"]["name"].get<std::string>()
              : experiment_name;
      raw["experiment"][name == "opt1" ? "t_values" : (name == "sweep" ? "eps" : "deltas")] =
          jgrid;
    }
    RunConfig config = validate_config_json(raw, subcommand);
    if (!output_dir.empty()) config.output_dir = output_dir;
    return run_subcommand(config);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace blstab
