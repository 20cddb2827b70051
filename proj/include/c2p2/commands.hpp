#pragma once

#include <filesystem>
#include <string>

#include "c2p2/config.hpp"

namespace c2p2 {

/// Loads the configured data source and applies the coin filter.
MarketData load_experiment_data(const ExperimentConfig& config);

struct RunOutcome {
    std::string run_id;
    std::filesystem::path dir;
};

/// Executes one command; artifacts land in <output>/<run-id>/ (generate may
/// write to its own directory instead).
RunOutcome run(Command command, const ExperimentConfig& config);

}  // namespace c2p2
