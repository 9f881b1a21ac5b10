// mane-lab: experiment runner and per-module entry points.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 failed check or
// missing artifact.

#include "manelab/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using manelab::cli::ConfigError;
using manelab::cli::ExperimentConfig;
using nlohmann::json;

constexpr int kConfigExit = 2;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
}

// key=value with value parsed as JSON, or taken as a string when it is not JSON.
json parse_settings(const std::vector<std::string>& settings) {
  json params = json::object();
  for (const auto& s : settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + s, "expected key=value");
    const std::string value = s.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    params[s.substr(0, eq)] = v.is_discarded() ? json(value) : v;
  }
  return params;
}

void print_result(const manelab::cli::StageResult& r) {
  if (!r.ok) std::cerr << "error: " << r.error << "\n";
  for (const auto& c : r.checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
  if (!r.values.empty()) std::cout << r.values.dump(2) << "\n";
}

int run_config(const std::string& path, std::string out, int workers) {
  const ExperimentConfig config = ExperimentConfig::from_json(load_json(path));
  if (out.empty()) out = config.output.empty() ? "runs/latest" : config.output;
  const auto summary = manelab::cli::run(config, out, workers > 0 ? workers : manelab::cli::workers_from_env());
  for (const auto& r : summary.stages)
    std::cout << "[" << r.index << "] " << r.stage.module << " " << r.stage.op << ": "
              << (!r.ok ? "error: " + r.error : r.passed() ? "pass" : "FAIL") << "\n";
  std::cout << summary.files.size() << " files in " << out << "\n";
  return summary.exit_code();
}

int run_single(const std::string& module, const std::string& op, const std::vector<std::string>& settings,
               std::uint64_t seed, const std::string& out) {
  ExperimentConfig config;
  config.seed = seed;
  config.pipeline.push_back({module, op, parse_settings(settings)});
  manelab::cli::validate_params(config.pipeline[0], "--set");
  if (!out.empty()) {
    const auto summary = manelab::cli::run(config, out, 1);
    print_result(summary.stages[0]);
    for (const auto& f : summary.files) std::cout << "wrote " << out << "/" << f << "\n";
    return summary.exit_code();
  }
  const auto r = manelab::cli::run_stage(config.pipeline[0], seed, 0);
  print_result(r);
  return r.passed() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mane lab: ergodic optimization and weak KAM experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, report_dir;
  int workers = 0;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "JSON config")->required();
  run->add_option("-o,--out", out_dir, "run directory (default: config output, else runs/latest)");
  run->add_option("-j,--workers", workers, "parallel stages (default: MANELAB_WORKERS or all cores)");

  auto* rep = app.add_subcommand("report", "summarize a run directory into report.md and plots");
  rep->add_option("dir", report_dir, "run directory")->required();

  auto* stages = app.add_subcommand("stages", "list modules, ops and parameters");

  // One subcommand per module; the op is positional and parameters come as --set key=value.
  struct ModuleCommand {
    std::string command, module;
    CLI::App* app = nullptr;
    std::string op = {};
    std::vector<std::string> settings = {};
    std::uint64_t seed = 0;
    std::string out = {};
  };
  std::vector<ModuleCommand> modules = {{"sft", "sft"},         {"ergopt", "ergopt"},   {"shadow", "shadowing"},
                                        {"palga", "orbitlab"},  {"weakkam", "weakkam"}, {"lagrangian", "lagrangian"}};
  const json catalog = manelab::cli::stage_catalog();
  for (auto& m : modules) {
    std::vector<std::string> ops;
    for (const auto& [op, v] : catalog.at(m.module).items()) ops.push_back(op);
    m.app = app.add_subcommand(m.command, "run one " + m.module + " op");
    m.app->add_option("op", m.op, "operation")->required()->check(CLI::IsMember(ops));
    m.app->add_option("-s,--set", m.settings, "parameter as key=value (value is JSON or a plain string)");
    m.app->add_option("--seed", m.seed, "run seed");
    m.app->add_option("-o,--out", m.out, "write tables and summary.json here");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*run) return run_config(config_path, out_dir, workers);
    if (*rep) {
      const auto r = manelab::cli::report(report_dir);
      if (r.empty) std::cerr << "warning: " << report_dir << " holds an empty run\n";
      for (const auto& line : r.criteria) std::cout << line << "\n";
      for (const auto& m : r.missing) std::cerr << "missing artifact: " << m << "\n";
      if (!r.empty) std::cout << "wrote " << report_dir << "/report.md and " << r.plots.size() << " plots\n";
      return r.exit_code();
    }
    if (*stages) {
      std::cout << catalog.dump(2) << "\n";
      return 0;
    }
    for (const auto& m : modules)
      if (*m.app) return run_single(m.module, m.op, m.settings, m.seed, m.out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
