#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "levolve/geometry.hpp"
#include "levolve/monitors.hpp"
#include "levolve/transport.hpp"

namespace levolve {

std::string_view tool_version();

struct GeometryConfig {
  FlowModel model;
  std::size_t nodes = 64;
  TimeInterval domain{0.5, 5.0};
  std::size_t curve_samples = 64;
  std::string table_path;  // custom_tabulated, resolved against the config's directory
};

enum class ProfileKind { uniform, bump, two_point };

struct MeasureConfig {
  std::string name;
  ProfileKind profile = ProfileKind::uniform;
  double center = 0.0;
  double width = 0.3;
  double a = 0.0;
  double b = 0.0;
  std::optional<double> tau;  // start time for diffusions; geometry tau_min by default
};

enum class MonitorKind {
  theta,
  w_entropy,
  min_lbar_gap,
  reduced_volume,
  convexity,
  prekopa_leindler,
  scaling_identity,
  transport_bound,
  d_nonneg,
};

std::string_view to_string(MonitorKind kind);
MonitorKind monitor_kind_from_string(std::string_view name);
std::vector<std::string_view> monitor_kinds();

struct MonitorConfig {
  std::string name;
  MonitorKind kind = MonitorKind::theta;
  double slack = 1e-3;
  std::vector<std::string> measures;
  std::vector<double> taus;
  std::vector<double> s_grid;
  double tau_bar1 = 1.0;
  double tau_bar2 = 4.0;
  double tau1 = 1.0;
  double tau2 = 4.0;
  double lambda = 0.5;
  std::size_t points = 9;
  std::size_t longitudes = 16;
  std::size_t pairs = 20;
  std::vector<PotentialField::CosineTerm> potential;
  SolverMode solver = SolverMode::exact();
  double base_point = 0.0;
  std::optional<double> base_offset;  // 1e-3 times the smallest grid time by default
};

struct OutputConfig {
  std::string directory = "levolve_out";
  bool plots = true;
};

struct ExperimentConfig {
  std::string source;  // path or label used in error messages
  std::string text;    // verbatim config, echoed into the report
  std::uint64_t seed = 0;
  GeometryConfig geometry;
  std::vector<MeasureConfig> measures;
  std::vector<MonitorConfig> monitors;
  OutputConfig output;

  const MeasureConfig& measure(const std::string& name) const;
};

// Parses and checks a config. Syntax problems raise ParseError, meaningless
// values raise SemanticError; both name the line and field.
ExperimentConfig parse_config(std::string_view text, std::string source = "<config>",
                              std::string base_dir = ".");
ExperimentConfig validate_config(const std::string& path);

// Scalar expressions in config values: numbers, pi, + - * / ^, parentheses,
// and the functions ln, exp, sqrt, cos, sin. Malformed text raises ParseError.
double evaluate_expression(std::string_view text);

// "0.1*cos(theta) + 0.05*cos(2*theta)"; "0" is the zero potential.
std::vector<PotentialField::CosineTerm> parse_potential(std::string_view text);

struct Artifact {
  std::string filename;
  std::string contents;
};

struct MonitorOutcome {
  std::string name;
  MonitorKind kind = MonitorKind::theta;
  MonitorSeries series;
  std::vector<Artifact> artifacts;
  double seconds = 0.0;
  bool completed = false;
  std::string error;
};

struct RunReport {
  std::string version;
  std::string source;
  std::string config_echo;
  std::uint64_t seed = 0;
  std::size_t nodes = 0;
  std::vector<MonitorOutcome> monitors;
  bool complete = false;
  std::string error;

  bool all_pass() const;
};

struct RunOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> resolution;
  bool write_files = true;
};

// Applies seed and resolution overrides, then checks the result.
ExperimentConfig apply_overrides(ExperimentConfig config, const RunOptions& options);

Geometry make_geometry(const GeometryConfig& config);

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

std::string format_report(const RunReport& report);
nlohmann::json report_json(const RunReport& report);

// Writes every artifact in config order into `directory`.
void write_outputs(const RunReport& report, const std::string& directory, bool plots);

// 0 when every verdict passes, 1 on a failed verdict, 3 when the run aborted.
int exit_code(const RunReport& report);

}  // namespace levolve
