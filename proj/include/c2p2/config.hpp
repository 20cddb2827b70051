#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2p2/backtest.hpp"
#include "c2p2/synthetic.hpp"

namespace c2p2 {

enum class Command { Generate, Ingest, Backtest, Ablate, Report };

std::string_view to_string(Command c);
std::optional<Command> parse_command(std::string_view name);

struct ExperimentConfig {
    // Exactly one data source is used: a raw dataset manifest, an ingested
    // panel directory, or an in-memory synthetic market.
    std::optional<std::filesystem::path> dataset;
    std::optional<std::filesystem::path> panel;
    std::optional<SyntheticSpec> synthetic;

    std::vector<std::string> coins;  // empty = all
    BacktestConfig backtest;
    std::optional<std::filesystem::path> baseline;

    /// Parameters of the `generate` command.
    SyntheticSpec generate;
    std::optional<std::filesystem::path> generate_dir;

    std::filesystem::path output = "out";

    /// Normalized form with every default filled in; `hash` is taken over it
    /// minus output, jobs and the generate section.
    nlohmann::json to_json() const;
    std::string hash() const;
    std::string run_id(Command c) const;
};

/// Collects every problem before failing with one ValidationError. Relative
/// paths resolve against `base_dir`. File existence is checked only for the
/// inputs `command` reads.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                              std::optional<Command> command = std::nullopt);
ExperimentConfig parse_config_file(const std::filesystem::path& path, std::optional<Command> command = std::nullopt);

}  // namespace c2p2
