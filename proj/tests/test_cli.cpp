#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "blstab/cli.hpp"
#include "schema_check.hpp"
#include "test_data.hpp"

using namespace blstab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("blstab_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"blstab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

fs::path write_frame120(const TempDir& dir) {
  const Json j = datum_to_json(testdata::frame120());
  const fs::path path = dir.path / "frame120.json";
  write_file(path, j.dump(2));
  return path;
}

}  // namespace

TEST_CASE("json round trips") {
  // Datum with an infinite exponent survives the round trip.
  const std::vector<Matrix> maps = {testdata::row({1.0, 0.0}), testdata::row({0.0, 1.0})};
  const Datum datum = from_q_convention(maps, {0.0, 1.0});
  const Datum back = datum_from_json(datum_to_json(datum));
  CHECK(std::isinf(back.factors[0].p));
  CHECK(back.factors[1].p == doctest::Approx(1.0));

  // Function specs of every variant.
  Rng rng(5);
  std::vector<FunctionSpec> specs;
  specs.push_back(centered_spec(testdata::random_spd(2, rng)));
  SumOfGaussians sum;
  sum.terms.push_back(centered_spec(Matrix::Identity(1, 1) * 2.0));
  specs.push_back(sum);
  GaussianPlusBump gb;
  gb.gaussian = centered_spec(Matrix::Identity(1, 1));
  gb.amplitude = 0.3;
  gb.center = Vector::Constant(1, 1.0);
  gb.radius = 0.8;
  specs.push_back(gb);
  ModulatedGaussian mg;
  mg.base = centered_spec(Matrix::Identity(1, 1));
  mg.phase = Matrix::Constant(1, 1, 0.7);
  specs.push_back(mg);
  GridFunction grid;
  grid.lo = Vector::Constant(1, -1.0);
  grid.spacing = 0.5;
  grid.shape = {5};
  for (int i = 0; i < 5; ++i) grid.samples.push_back(Complex(i, -i));
  specs.push_back(grid);

  Vector probe(2);
  probe << 0.3, -0.2;
  for (const auto& f : specs) {
    const FunctionSpec back_spec = function_spec_from_json(function_spec_to_json(f));
    Vector x = spec_dim(f) == 2 ? probe : Vector::Constant(1, 0.4);
    CHECK(std::abs(eval_spec(back_spec, x) - eval_spec(f, x)) < 1e-14);
  }
}

TEST_CASE("config validation rejects malformed inputs") {
  TempDir dir;
  const fs::path datum = write_frame120(dir);

  // Missing seed.
  const fs::path no_seed = dir.path / "no_seed.json";
  write_file(no_seed, Json{{"datum", datum.string()}}.dump());
  CHECK_THROWS_WITH_AS(validate_config(no_seed.string(), "check"),
                       doctest::Contains("seed"), std::invalid_argument);

  // Unknown top-level field.
  const fs::path unknown = dir.path / "unknown.json";
  write_file(unknown, Json{{"seed", 1}, {"datum", datum.string()}, {"frobnicate", 2}}.dump());
  CHECK_THROWS_WITH_AS(validate_config(unknown.string(), "check"),
                       doctest::Contains("frobnicate"), std::invalid_argument);

  // Missing referenced file.
  const fs::path missing = dir.path / "missing.json";
  write_file(missing, Json{{"seed", 1}, {"datum", "nope.json"}}.dump());
  CHECK_THROWS_AS(validate_config(missing.string(), "check"), std::invalid_argument);

  // Bad exponent in the datum itself surfaces with the field name.
  const fs::path bad_datum = dir.path / "bad_datum.json";
  write_file(bad_datum, R"({"d": 1, "factors": [{"matrix": [[1.0]], "p": 0.5}]})");
  const fs::path cfg = dir.path / "cfg.json";
  write_file(cfg, Json{{"seed", 1}, {"datum", bad_datum.string()}}.dump());
  const RunConfig config = validate_config(cfg.string(), "check");
  CHECK_THROWS_WITH_AS(datum_from_json(load_json_file(config.datum_path)),
                       doctest::Contains("exponent"), std::invalid_argument);

  // Matrix row count inconsistent with the declared shape.
  const fs::path ragged = dir.path / "ragged.json";
  write_file(ragged, R"({"d": 2, "factors": [{"matrix": [[1.0, 0.0], [0.0]], "p": 2}]})");
  CHECK_THROWS_AS(datum_from_json(load_json_file(ragged.string())), std::invalid_argument);

  // Defaults are filled for a minimal config.
  const fs::path minimal = dir.path / "minimal.json";
  write_file(minimal, Json{{"seed", 9}, {"datum", datum.string()}}.dump());
  const RunConfig mc = validate_config(minimal.string(), "constant");
  CHECK(mc.optimizer.restarts == 8);
  CHECK(mc.quad.points_per_axis == 0);
  CHECK(mc.seed == 9);
}

TEST_CASE("dispatch runs check and constant with persisted outputs") {
  TempDir dir;
  const fs::path datum = write_frame120(dir);
  const fs::path cfg = dir.path / "cfg.json";
  write_file(cfg, Json{{"seed", 7},
                       {"datum", datum.string()},
                       {"output_dir", (dir.path / "runs").string()}}
                      .dump());

  CHECK(run_cli({"check", "--config", cfg.string()}) == 0);
  CHECK(run_cli({"constant", "--config", cfg.string()}) == 0);

  // Two run directories, each with config, summary, record (+ trace).
  int dirs = 0;
  bool found_trace = false;
  for (const auto& entry : fs::directory_iterator(dir.path / "runs")) {
    ++dirs;
    CHECK(fs::exists(entry.path() / "summary.json"));
    CHECK(fs::exists(entry.path() / "config.json"));
    CHECK(fs::exists(entry.path() / "run_record.json"));
    if (fs::exists(entry.path() / "trace.csv")) {
      found_trace = true;
      std::ifstream in(entry.path() / "trace.csv");
      std::string header;
      std::getline(in, header);
      CHECK(header == "iteration,value,eig_ratio");
    }
  }
  CHECK(dirs == 2);
  CHECK(found_trace);
}

TEST_CASE("summaries validate against the published schema") {
  TempDir dir;
  const fs::path datum = write_frame120(dir);
  const fs::path cfg = dir.path / "cfg.json";
  write_file(cfg, Json{{"seed", 3},
                       {"datum", datum.string()},
                       {"output_dir", (dir.path / "runs").string()}}
                      .dump());
  REQUIRE(run_cli({"constant", "--config", cfg.string()}) == 0);
  REQUIRE(run_cli({"check", "--config", cfg.string()}) == 0);

  const Json schema =
      load_json_file(std::string(BLSTAB_SOURCE_DIR) + "/docs/schemas/summary.schema.json");
  for (const auto& entry : fs::directory_iterator(dir.path / "runs")) {
    const Json summary = load_json_file((entry.path() / "summary.json").string());
    std::string error;
    CHECK_MESSAGE(schema_check::validate(summary, schema, error), error);
  }

  // The datum schema accepts the shipped example and rejects junk.
  const Json datum_schema =
      load_json_file(std::string(BLSTAB_SOURCE_DIR) + "/docs/schemas/datum.schema.json");
  std::string error;
  CHECK(schema_check::validate(load_json_file(datum.string()), datum_schema, error));
  CHECK_FALSE(schema_check::validate(Json{{"d", 0}}, datum_schema, error));
}

TEST_CASE("reproducibility: identical configs give bitwise-identical outputs") {
  TempDir dir;
  const fs::path datum = write_frame120(dir);
  const fs::path cfg = dir.path / "cfg.json";
  write_file(cfg, Json{{"seed", 11},
                       {"datum", datum.string()},
                       {"output_dir", (dir.path / "runs").string()}}
                      .dump());

  REQUIRE(run_cli({"constant", "--config", cfg.string()}) == 0);
  fs::path run_dir;
  for (const auto& entry : fs::directory_iterator(dir.path / "runs")) run_dir = entry.path();
  const std::string summary1 = slurp(run_dir / "summary.json");
  const std::string trace1 = slurp(run_dir / "trace.csv");
  const std::string config1 = slurp(run_dir / "config.json");

  REQUIRE(run_cli({"constant", "--config", cfg.string()}) == 0);
  CHECK(slurp(run_dir / "summary.json") == summary1);
  CHECK(slurp(run_dir / "trace.csv") == trace1);
  CHECK(slurp(run_dir / "config.json") == config1);

  // A different seed lands in a different run directory.
  REQUIRE(run_cli({"constant", "--config", cfg.string(), "--seed", "12"}) == 0);
  int dirs = 0;
  for (const auto& entry : fs::directory_iterator(dir.path / "runs")) {
    (void)entry;
    ++dirs;
  }
  CHECK(dirs == 2);
}

TEST_CASE("config hash is stable under key reordering") {
  const Json a = Json::parse(R"({"seed": 1, "datum": "x.json"})");
  const Json b = Json::parse(R"({"datum": "x.json", "seed": 1})");
  CHECK(config_hash(a) == config_hash(b));
  const Json c = Json::parse(R"({"datum": "x.json", "seed": 2})");
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("exit codes: 2 for validation errors, 3 for numerical flags") {
  TempDir dir;
  // Nonexistent config file.
  CHECK(run_cli({"check", "--config", (dir.path / "nope.json").string()}) == 2);

  // p = 0.5 rejected with exit 2.
  const fs::path bad_datum = dir.path / "bad.json";
  write_file(bad_datum, R"({"d": 1, "factors": [{"matrix": [[1.0]], "p": 0.5}]})");
  const fs::path cfg = dir.path / "cfg.json";
  write_file(cfg, Json{{"seed", 1},
                       {"datum", bad_datum.string()},
                       {"output_dir", (dir.path / "runs").string()}}
                      .dump());
  CHECK(run_cli({"check", "--config", cfg.string()}) == 2);

  // Infinite datum: constant diverges with exit 3.
  const fs::path lw22 = dir.path / "lw22.json";
  write_file(lw22, datum_to_json(testdata::loomis_whitney(2.0, 2.0)).dump());
  const fs::path cfg2 = dir.path / "cfg2.json";
  write_file(cfg2, Json{{"seed", 1},
                        {"datum", lw22.string()},
                        {"output_dir", (dir.path / "runs").string()}}
                       .dump());
  CHECK(run_cli({"constant", "--config", cfg2.string()}) == 3);
}

TEST_CASE("experiment subcommand emits CSV with documented columns") {
  TempDir dir;
  const fs::path cfg = dir.path / "cfg.json";
  write_file(cfg, Json{{"seed", 5},
                       {"output_dir", (dir.path / "runs").string()},
                       {"experiment",
                        Json{{"name", "holder"},
                             {"exponents", Json::array({2.0, 2.0})},
                             {"profile", "bump"}}}}
                      .dump());
  CHECK(run_cli({"experiment", "--config", cfg.string()}) == 0);
  bool found = false;
  for (const auto& entry : fs::directory_iterator(dir.path / "runs")) {
    const fs::path csv = entry.path() / "experiment_holder.csv";
    if (fs::exists(csv)) {
      found = true;
      std::ifstream in(csv);
      std::string header;
      std::getline(in, header);
      CHECK(header == "factor,p,dist_ratio");
      const Json summary = load_json_file((entry.path() / "summary.json").string());
      CHECK(summary["equality"].get<bool>());
      for (const auto& d : summary["dist_ratios"]) CHECK(d.get<double>() >= 0.1);
    }
  }
  CHECK(found);
}
