#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// Experiment runner: JSON configs, stage dispatch, run directories and reports.
namespace manelab::cli {

inline constexpr int kSchemaVersion = 1;

// Schema violation; what() starts with the offending field path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& problem)
      : std::invalid_argument(field + ": " + problem), field(field) {}
  std::string field;
};

struct Stage {
  std::string module;  // sft, ergopt, shadowing, orbitlab, weakkam, lagrangian
  std::string op;
  nlohmann::json params = nlohmann::json::object();
};

struct ExperimentConfig {
  int schema = kSchemaVersion;
  std::uint64_t seed = 0;
  std::string output;  // default run directory
  std::vector<Stage> pipeline;

  // Validates every stage and its parameters up front.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

// Stage names and their parameters with defaults, for help output.
nlohmann::json stage_catalog();
// Validates and fills defaults; `path` prefixes field names in errors.
nlohmann::json validate_params(const Stage& stage, const std::string& path);

// All floats go out with 17 significant digits; nan and inf spelled out.
std::string format_double(double x);

// CSV table; the runner prepends module and op columns to every row.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows = {};

  void add(std::vector<nlohmann::json> row);
  std::string csv(const std::string& module, const std::string& op) const;
};

struct Check {
  std::string name;
  int criterion = 0;  // acceptance criterion number, 0 for plain invariants
  bool pass = false;
  std::string detail;
};

struct StageResult {
  int index = 0;
  Stage stage;
  bool ok = true;
  std::string error;
  std::vector<Table> tables;
  std::vector<Check> checks;
  nlohmann::json values = nlohmann::json::object();  // headline numbers

  bool passed() const;
};

// Per-stage generator: a fixed function of the run seed and the stage index.
std::mt19937_64 stage_rng(std::uint64_t seed, int index);

// Runs one stage with validated parameters. Op errors are captured in the result.
StageResult run_stage(const Stage& stage, std::uint64_t seed, int index = 0);

struct RunSummary {
  std::vector<StageResult> stages;
  std::vector<std::string> files;  // written artifacts, relative to the run directory
  // 0 when every stage ran and every check passed, 3 otherwise.
  int exit_code() const;
};

// Runs the pipeline with up to `workers` stages at a time and writes one CSV
// per table plus summary.json. An empty pipeline leaves an empty directory.
RunSummary run(const ExperimentConfig& config, const std::filesystem::path& dir, int workers);
nlohmann::json summary_json(const ExperimentConfig& config, const RunSummary& summary);

// MANELAB_WORKERS, else the hardware concurrency.
int workers_from_env();

struct Report {
  bool empty = false;
  std::string table;                   // markdown summary
  std::vector<std::string> missing;    // artifacts named by summary.json but absent
  std::vector<std::string> plots;      // SVG files written
  std::vector<std::string> criteria;   // "criterion N: PASS|FAIL" lines
  int exit_code() const { return missing.empty() ? 0 : 3; }
};

// Reads a run directory and writes report.md and SVG plots into it.
Report report(const std::filesystem::path& dir);

// Line plot with optional logarithmic axes.
struct Series {
  std::string label;
  std::vector<double> x, y;
};
std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                     const std::vector<Series>& series, bool logx, bool logy);

}  // namespace manelab::cli
