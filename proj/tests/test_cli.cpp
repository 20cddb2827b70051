#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "c2p2/common.hpp"
#include "c2p2/csv.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out;
};

Result run_cli(const std::string& args) {
    const std::string cmd = std::string(C2P2_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

nlohmann::json last_json_line(const std::string& out) {
    const auto start = out.rfind('{');
    return nlohmann::json::parse(out.substr(start));
}

const char* kFastModel = R"("models": [{"kind": "LR"}], "selectors": [{"method": "PCA", "k": 20}])";

}  // namespace

TEST_CASE("generate then backtest writes one row per coin") {
    const auto dir = fresh_dir("c2p2_cli_pipeline");
    c2p2::csv::write_file(dir / "gen.json", R"({"generate": {"coins": 5, "days": 300, "seed": 7, "dir": "data"}})");
    const auto g = run_cli("generate -c " + (dir / "gen.json").string());
    REQUIRE_MESSAGE(g.status == 0, g.out);
    CHECK(fs::exists(dir / "data" / "dataset.json"));

    c2p2::csv::write_file(dir / "bt.json", std::string(R"({"data": {"dataset": "data/dataset.json"},
        "backtest": {"train_window": 60, "test_days": 20}, )") + kFastModel + "}");
    const auto b = run_cli("backtest -c " + (dir / "bt.json").string());
    REQUIRE_MESSAGE(b.status == 0, b.out);
    const fs::path run = last_json_line(b.out).at("dir").get<std::string>();
    const auto table = c2p2::csv::read_file(run / "report.csv");
    CHECK(table.rows.size() == 5);
    CHECK(fs::exists(run / "report.md"));
    CHECK(fs::exists(run / "manifest.json"));
}

TEST_CASE("backtest, ablate and report give per-coin lifts") {
    const auto dir = fresh_dir("c2p2_cli_report");
    c2p2::csv::write_file(dir / "cfg.json", std::string(R"({"data": {"synthetic": {"coins": 3, "days": 100, "seed": 2}},
        "backtest": {"train_window": 40, "test_days": 20}, )") + kFastModel + "}");
    const auto cfg = (dir / "cfg.json").string();
    REQUIRE(run_cli("backtest -c " + cfg).status == 0);
    REQUIRE(run_cli("ablate -c " + cfg).status == 0);
    const auto r = run_cli("report -c " + cfg);
    REQUIRE_MESSAGE(r.status == 0, r.out);
    const fs::path run = last_json_line(r.out).at("dir").get<std::string>();
    const auto table = c2p2::csv::read_file(run / "report.csv");
    REQUIRE(table.rows.size() == 3);
    const auto full = table.column("auc"), ablated = table.column("ablated_auc"), lift = table.column("lift");
    REQUIRE(full);
    REQUIRE(ablated);
    REQUIRE(lift);
    for (const auto& row : table.rows) {
        const double expect = c2p2::parse_double(row[*full]) / c2p2::parse_double(row[*ablated]);
        CHECK(c2p2::parse_double(row[*lift]) == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("report without artifacts fails with MissingArtifact") {
    const auto dir = fresh_dir("c2p2_cli_missing");
    c2p2::csv::write_file(dir / "cfg.json", R"({"data": {"synthetic": {}}})");
    const auto r = run_cli("report -c " + (dir / "cfg.json").string());
    CHECK(r.status == 2);
    CHECK(last_json_line(r.out).at("error") == "MissingArtifact");
}

TEST_CASE("invalid configs exit with status 1") {
    const auto dir = fresh_dir("c2p2_cli_invalid");
    c2p2::csv::write_file(dir / "cfg.json", R"({"data": {"synthetic": {}}, "lags": [0]})");
    const auto r = run_cli("backtest -c " + (dir / "cfg.json").string());
    CHECK(r.status == 1);
    CHECK(last_json_line(r.out).at("error") == "ValidationError");

    CHECK(run_cli("backtest").status == 1);
    CHECK(run_cli("backtest -c " + (dir / "absent.json").string()).status == 1);
}
