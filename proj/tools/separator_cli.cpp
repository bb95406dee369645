// separator: run use-case scenarios, validate configurations, compare
// reports against reference tables and serve the operator workplace.
//
// Errors are reported on stderr as a single line:
//   separator: error[<category>]: <message>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "separator/hmi.hpp"
#include "separator/hmi_server.hpp"
#include "separator/scenarios.hpp"

namespace fs = std::filesystem;
using namespace separator;
using nlohmann::json;

namespace {

constexpr int kExitError = 2;
constexpr int kExitFailed = 1;

struct CliError {
  std::string category;
  std::string message;
};

int report_error(const CliError& e) {
  std::cerr << "separator: error[" << e.category << "]: " << e.message << '\n';
  return kExitError;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

ScenarioConfig resolve_config(const std::string& recipe, const std::string& config_path) {
  if (!config_path.empty()) {
    try {
      return load_scenario(config_path);
    } catch (const ConfigError& e) {
      throw CliError{"config", e.what()};
    }
  }
  auto r = find_recipe(recipe);
  if (!r) throw CliError{"usage", "unknown recipe '" + recipe + "' (try: separator recipes)"};
  return *r;
}

std::string resolve_reference(const std::string& name) {
  if (fs::exists(name)) return name;
  const fs::path base = env_or("SEPARATOR_DATA_DIR", SEPARATOR_DATA_DIR);
  const fs::path candidate = base / "references" / (name + ".json");
  if (fs::exists(candidate)) return candidate.string();
  throw CliError{"io", "reference table '" + name + "' not found (looked for " + candidate.string() + ")"};
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError{"io", "cannot write '" + path.string() + "'"};
  out << text;
  if (!out) throw CliError{"io", "failed writing '" + path.string() + "'"};
}

fs::path default_output(const std::string& file) {
  const std::string dir = env_or("SEPARATOR_OUT_DIR", "");
  return dir.empty() ? fs::path(file) : fs::path(dir) / file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Separator rig digital twin: scenarios, reports and the operator workplace service"};
  app.require_subcommand(1, 1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "More output (repeatable)");

  // run
  auto* run = app.add_subcommand("run", "Execute a scenario and write its report");
  std::string run_recipe, run_config, run_out, csv_dir, attempts_dir;
  std::optional<std::size_t> seeds_count;
  std::optional<std::uint64_t> seed_override;
  unsigned jobs = 0;
  bool no_series = false;
  auto* run_sources = run->add_option_group("source");
  run_sources->add_option("--recipe", run_recipe, "Built-in recipe name");
  run_sources->add_option("--config", run_config, "Scenario configuration file");
  run_sources->require_option(1);
  auto* seeds_opt = run->add_option("--seeds", seeds_count, "Run seeds 1..N")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed_override, "Run a single seed")->excludes(seeds_opt);
  run->add_option("--out", run_out, "Report path (default from config, under $SEPARATOR_OUT_DIR)");
  run->add_option("--csv-dir", csv_dir, "Write one time-series CSV per seed into this directory");
  run->add_option("--attempts-dir", attempts_dir, "Write one transmission-attempt CSV per seed");
  run->add_option("--jobs", jobs, "Parallel seed runs (0: one per hardware thread)");
  run->add_flag("--no-series", no_series, "Omit per-tick series from the JSON report");

  // validate
  auto* validate = app.add_subcommand("validate", "Check a scenario configuration without running it");
  std::string validate_path;
  validate->add_option("config", validate_path, "Scenario configuration file")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "Compare a report with a reference table");
  std::string compare_report, compare_reference;
  compare->add_option("report", compare_report, "Report JSON written by run")->required();
  compare->add_option("--reference", compare_reference, "Reference table name or path")->required();

  // recipes
  auto* recipes = app.add_subcommand("recipes", "Print the built-in use-case configurations");
  std::string recipe_name, recipes_dir;
  recipes->add_option("name", recipe_name, "Print only this recipe");
  recipes->add_option("--write", recipes_dir, "Write each recipe to <dir>/<name>.json instead");

  // serve
  auto* serve = app.add_subcommand("serve", "Start the live operator workplace service");
  std::string serve_recipe = "usecase1", serve_config, bind_address = "127.0.0.1", audit_path;
  std::string token = env_or("SEPARATOR_HMI_TOKEN", "");
  std::uint16_t port = 8080;
  double pace = 1.0, publish_ms = 200.0;
  std::uint64_t serve_seed = 1;
  auto* serve_sources = serve->add_option_group("source");
  serve_sources->add_option("--recipe", serve_recipe, "Built-in recipe for plant and controller");
  serve_sources->add_option("--config", serve_config, "Scenario configuration file");
  serve_sources->require_option(0, 1);
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--bind", bind_address, "Listen address");
  serve->add_option("--pace", pace, "Simulated seconds per wall-clock second")->check(CLI::PositiveNumber);
  serve->add_option("--publish-ms", publish_ms, "Snapshot publish interval")->check(CLI::PositiveNumber);
  serve->add_option("--token", token, "Bearer token for /ws (default $SEPARATOR_HMI_TOKEN)");
  serve->add_option("--seed", serve_seed, "Random seed");
  serve->add_option("--audit-log", audit_path, "Append commands and acks as JSON lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    return report_error({"usage", msg});
  }

  try {
    if (*run) {
      ScenarioConfig config = resolve_config(run_recipe, run_config);
      if (seeds_count) {
        config.seeds.clear();
        for (std::size_t i = 1; i <= *seeds_count; ++i) config.seeds.push_back(i);
      }
      if (seed_override) config.seeds = {*seed_override};
      try {
        config.validate();
      } catch (const ConfigError& e) {
        throw CliError{"config", e.what()};
      }
      const ScenarioReport report = run_scenario(config, jobs);
      const fs::path out = !run_out.empty() ? fs::path(run_out)
                           : default_output(config.output_path.empty() ? config.name + "_report.json"
                                                                       : config.output_path);
      write_file(out, report_to_json(report, !no_series).dump(1) + "\n");
      for (const auto& r : report.runs) {
        const std::string stem = config.name + "_seed" + std::to_string(r.seed);
        if (!csv_dir.empty()) write_file(fs::path(csv_dir) / (stem + ".csv"), series_csv(r));
        if (!attempts_dir.empty())
          write_file(fs::path(attempts_dir) / (stem + "_attempts.csv"), attempts_csv(r));
      }
      std::cout << "report: " << out.string() << " (" << report.runs.size() << " runs)\n";
      if (verbosity > 0)
        for (const auto& [k, v] : report.metrics()) std::cout << "  " << k << " = " << v << '\n';
      if (report.failed) {
        for (const auto& f : report.failures) std::cerr << "  " << f << '\n';
        return report_error({"scenario-failed", report.failures.front()});
      }
      return 0;
    }
    if (*validate) {
      ScenarioConfig config = resolve_config("", validate_path);
      try {
        config.validate();
      } catch (const ConfigError& e) {
        throw CliError{"config", e.what()};
      }
      std::cout << "ok: " << config.name << '\n';
      return 0;
    }
    if (*compare) {
      std::ifstream in(compare_report);
      if (!in) throw CliError{"io", "cannot read report '" + compare_report + "'"};
      json j;
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw CliError{"io", "report '" + compare_report + "' is not valid JSON"};
      }
      std::map<std::string, double> metrics;
      ReferenceTable table;
      try {
        metrics = metrics_from_report_json(j);
        table = load_reference(resolve_reference(compare_reference));
      } catch (const ConfigError& e) {
        throw CliError{"config", e.what()};
      }
      ComparisonVerdict verdict;
      try {
        verdict = compare_to_reference(metrics, table);
      } catch (const ComparisonError& e) {
        throw CliError{"comparison", e.what()};
      }
      std::cout << "reference: " << table.name << '\n' << verdict.diff;
      std::cout << "verdict: " << (verdict.pass ? "PASS" : "FAIL") << '\n';
      return verdict.pass ? 0 : kExitFailed;
    }
    if (*recipes) {
      std::vector<ScenarioConfig> list;
      if (!recipe_name.empty()) {
        auto r = find_recipe(recipe_name);
        if (!r) throw CliError{"usage", "unknown recipe '" + recipe_name + "'"};
        list.push_back(*r);
      } else {
        list = builtin_recipes();
      }
      if (!recipes_dir.empty()) {
        for (const auto& r : list) {
          const fs::path p = fs::path(recipes_dir) / (r.name + ".json");
          write_file(p, to_json(r).dump(2) + "\n");
          std::cout << "wrote " << p.string() << '\n';
        }
        return 0;
      }
      if (list.size() == 1) {
        std::cout << to_json(list.front()).dump(2) << '\n';
      } else {
        json all = json::array();
        for (const auto& r : list) all.push_back(to_json(r));
        std::cout << all.dump(2) << '\n';
      }
      return 0;
    }
    if (*serve) {
      ScenarioConfig config = resolve_config(serve_recipe, serve_config);
      try {
        config.validate();
      } catch (const ConfigError& e) {
        throw CliError{"config", e.what()};
      }
      WorldConfig world = config.world;
      world.seed = serve_seed;
      world.radio.jamming = config.jamming_schedule;
      LiveOptions live;
      live.pace = pace;
      live.publish_interval = publish_ms / 1000.0;
      live.audit_path = audit_path;
      LiveSimulation sim(world, live);
      HmiServer server(sim, {bind_address, port, token});
      const auto bound = server.start();
      sim.start();
      std::cout << "serving on http://" << bind_address << ':' << bound << " (/ws, /state, /health)"
                << (token.empty() ? ", no token" : ", bearer token required") << std::endl;
      server.wait();
      sim.stop();
      server.stop();
      return 0;
    }
  } catch (const CliError& e) {
    return report_error(e);
  } catch (const ConfigError& e) {
    return report_error({"config", e.what()});
  } catch (const RangeError& e) {
    return report_error({"range", e.what()});
  } catch (const SimulationError& e) {
    return report_error({"simulation", e.what()});
  } catch (const std::exception& e) {
    return report_error({"internal", e.what()});
  }
  return 0;
}
