#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace fol {

// Resolved run configuration. Every key has a default except mesh.nx,
// mesh.ny and physics.kind.

struct MeshSection {
  int nx = 0;
  int ny = 0;
  double lx = 1.0;
  double ly = 1.0;
  int quad_order = 2;
  bool operator==(const MeshSection&) const = default;
};

struct PhysicsSection {
  std::string kind;  // thermal | nonlinear | elastic
  double t_left = 1.0;
  double t_right = 0.1;
  double m1 = 2.0;   // nonlinear k(T) = m1 + beta * s * T^m2
  double m2 = 4.0;
  double beta = 1.0;
  double nu = 0.3;   // elastic
  double ux = 0.0;   // top-edge displacement
  double uy = 0.05;
  bool operator==(const PhysicsSection&) const = default;
};

struct ParameterizationSection {
  std::string kind = "fourier";  // uniform | fourier | ellipse | bc
  double value = 1.0;            // uniform k (or E)
  std::vector<double> fx{3.0, 5.0, 7.0};
  std::vector<double> fy{2.0, 4.0, 7.0};
  std::vector<double> coefficients;  // the single design of solve/sensitivity
  double beta = 5.0;
  double vmin = 0.01;
  double vmax = 1.0;
  int samples = 1000;
  int test_samples = 20;
  double sample_lo = -2.0;
  double sample_hi = 2.0;
  std::uint64_t seed = 1;
  bool operator==(const ParameterizationSection&) const = default;
};

struct NetworkSection {
  std::vector<int> hidden{300, 300};
  std::string activation = "swish";
  std::uint64_t seed = 1;
  bool normalize_inputs = false;
  bool operator==(const NetworkSection&) const = default;
};

struct LossSection {
  std::string physics = "energy";
  double w_ph = 1.0;
  double w_bc = 0.0;
  double w_se = 0.0;
  double w_db = 10.0;
  bool hard_bc = true;
  bool operator==(const LossSection&) const = default;
};

struct TrainingSection {
  int epochs = 1000;
  int batch_size = 50;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  int threads = 1;
  int log_every = 0;
  bool operator==(const TrainingSection&) const = default;
};

struct OptimizerSection {
  std::string mode = "fem";
  int iterations = 100;
  double alpha = 1e-2;
  double offset = 0.125;
  double c0 = 0.5;
  double active_tol = 1e-6;
  int fol_initial_epochs = 5000;
  int fol_epochs = 200;
  double w_se = 1.0;
  std::vector<int> hidden;  // empty: [N]
  bool operator==(const OptimizerSection&) const = default;
};

struct IoSection {
  std::string output_dir;  // empty: $FOL_OUTPUT_DIR, else "."
  std::string corpus;      // input corpus CSV for train/compare
  std::string test_corpus;
  int export_n = 165;
  bool vtk = true;
  int snapshot_every = 1;
  bool operator==(const IoSection&) const = default;
};

struct RunConfig {
  MeshSection mesh;
  PhysicsSection physics;
  ParameterizationSection parameterization;
  NetworkSection network;
  LossSection loss;
  TrainingSection training;
  OptimizerSection optimizer;
  IoSection io;
  bool operator==(const RunConfig&) const = default;

  /// Range and enum checks; throws ConfigError.
  void validate() const;
};

/// INI text: [section] headers, key = value, '#' or ';' comments, lists as
/// comma-separated values. Throws ConfigError on unknown sections or keys,
/// malformed values, and (in one message) all missing required keys.
RunConfig parse_config_string(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

/// Sets one "section.key" from text as the parser would; validates after.
void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

/// Every key, defaults included, in the format parse_config reads.
std::string to_ini(const RunConfig& cfg);

/// The output directory after the environment fallback.
std::filesystem::path resolve_output_dir(const RunConfig& cfg);

/// Environment variable consulted when io.output_dir is empty.
inline constexpr const char* kOutputDirEnv = "FOL_OUTPUT_DIR";

}  // namespace fol
