#pragma once

#include <optional>
#include <string>

#include "blstab/io.hpp"

namespace blstab {

inline constexpr const char* kToolVersion = "blstab 0.1.0";

struct RunConfig {
  std::string subcommand;
  uint64_t seed = 0;
  std::string datum_path;
  std::string tuple_path;
  std::string output_dir = "runs";
  Json canonical;  // defaults applied, sorted keys; hashed for the run dir

  QuadratureOpts quad;
  OptimizerOpts optimizer;
  DistanceOpts distance;

  // fourier subcommand
  double fourier_p = 1.5;
  bool fourier_force_numeric = false;
  bool fourier_with_distance = false;

  // deficit subcommand
  std::optional<double> bl_const;

  // distance subcommand
  double distance_p = 2.0;
  GaussianClass distance_class = GaussianClass::Complex;

  // experiment subcommand
  std::string experiment_name;
  Json experiment_params;
};

// Parses, applies defaults, validates invariants (strict: unknown fields are
// errors). The subcommand decides which sections are required.
RunConfig validate_config(const std::string& path, const std::string& subcommand);
RunConfig validate_config_json(const Json& raw, const std::string& subcommand);

// Full command-line entry point. Exit codes: 0 success, 2 validation error,
// 3 numerical-failure flags.
int dispatch(int argc, const char* const* argv);

}  // namespace blstab
