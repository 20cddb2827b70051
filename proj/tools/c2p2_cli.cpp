#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "c2p2/commands.hpp"
#include "c2p2/common.hpp"

namespace {

int fail(int status, std::string_view code, const std::string& message) {
    std::cerr << nlohmann::json{{"status", status}, {"error", std::string(code)}, {"message", message}}.dump() << "\n";
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Collective up/down prediction engine"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> jobs;

    const std::pair<c2p2::Command, const char*> commands[] = {
        {c2p2::Command::Generate, "Write a synthetic dataset directory"},
        {c2p2::Command::Ingest, "Build a panel directory from raw CSVs"},
        {c2p2::Command::Backtest, "Rolling-window backtest"},
        {c2p2::Command::Ablate, "Backtest with similarity features removed"},
        {c2p2::Command::Report, "Compare backtest and ablation results"},
    };
    for (const auto& [cmd, help] : commands) {
        auto* sub = app.add_subcommand(std::string(c2p2::to_string(cmd)), help);
        sub->add_option("-c,--config", config_path, "Experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "Root seed override");
        sub->add_option("--out", out, "Output directory override");
        sub->add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail(1, "UsageError", e.what());
    }

    const auto* sub = app.get_subcommands().front();
    const auto command = *c2p2::parse_command(sub->get_name());
    try {
        auto config = c2p2::parse_config_file(config_path, command);
        if (seed) config.backtest.engine.seed = *seed;
        if (out) config.output = *out;
        if (jobs) config.backtest.jobs = *jobs;
        const auto outcome = c2p2::run(command, config);
        std::cout << nlohmann::json{{"status", 0}, {"run_id", outcome.run_id}, {"dir", outcome.dir.generic_string()}}.dump()
                  << "\n";
        return 0;
    } catch (const c2p2::Error& e) {
        const bool validation =
            e.code() == c2p2::ErrorCode::ValidationError || e.code() == c2p2::ErrorCode::ParseError;
        return fail(validation ? 1 : 2, c2p2::to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        return fail(2, "RuntimeError", e.what());
    }
}
