#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <spdlog/sinks/stdout_color_sinks.h>

#include "fleetcast/commands.hpp"
#include "fleetcast/error.hpp"

namespace {

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

/// Remaining arguments as `--key value` or `--key=value` pairs.
void apply_overrides(const std::vector<std::string>& extras, fleetcast::RunConfig& config) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw fleetcast::ValidationError("unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      config.set(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw fleetcast::ValidationError("override " + a + " needs a value");
      config.set(a.substr(2), extras[++i]);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Demand forecasting and taxi route planning"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = ".";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"partition", "Partition the road network and build the region correlation graph"},
      {"train", "Train origin and destination forecasters"},
      {"eval-forecast", "Score forecasters against the historical average on test slots"},
      {"simulate", "Run one fleet simulation"},
      {"compare", "Run every planner over a list of seeds"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Settings file")->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->allow_extras();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    auto* sub = app.get_subcommands().front();
    spdlog::set_default_logger(spdlog::stderr_color_mt("fleetcast"));
    auto config = fleetcast::RunConfig::load(config_path);
    apply_overrides(sub->remaining(), config);
    spdlog::set_level(spdlog::level::from_str(config.text("log_level", "warn")));
    fleetcast::cli::run_command(sub->get_name(), config, out_dir, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
