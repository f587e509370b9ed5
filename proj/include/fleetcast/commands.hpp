#pragma once

#include <filesystem>
#include <ostream>
#include <set>
#include <string>

#include "fleetcast/config.hpp"

namespace fleetcast::cli {

/// Every key the commands understand.
const std::set<std::string>& known_keys();

/// Runs `partition`, `train`, `eval-forecast`, `simulate` or `compare`, writing
/// artifacts under `out` and a human-readable summary to `report`.
void run_command(const std::string& name, const RunConfig& config, const std::filesystem::path& out,
                 std::ostream& report);

void cmd_partition(const RunConfig& config, const std::filesystem::path& out, std::ostream& report);
void cmd_train(const RunConfig& config, const std::filesystem::path& out, std::ostream& report);
void cmd_eval_forecast(const RunConfig& config, const std::filesystem::path& out, std::ostream& report);
void cmd_simulate(const RunConfig& config, const std::filesystem::path& out, std::ostream& report);
void cmd_compare(const RunConfig& config, const std::filesystem::path& out, std::ostream& report);

}  // namespace fleetcast::cli
