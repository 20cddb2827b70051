#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2p2/engine.hpp"
#include "c2p2/metrics.hpp"
#include "c2p2/panel.hpp"

namespace c2p2 {

/// One point of the experiment grid.
struct CellSpec {
    std::size_t lag = 1;
    ModelSpec model;
    SelectorSpec selector;
    std::vector<std::string> groups;  // empty = every panel group

    std::string features_label(const FeaturePanel& panel) const;
    std::string key() const;
    nlohmann::json to_json() const;
};

struct BacktestConfig {
    std::size_t train_window = 123;
    std::size_t test_days = 61;
    std::size_t refit_stride = 1;
    /// Days before the test period scored with the same protocol and used to
    /// pick each coin's cell; 0 picks on test AUC.
    std::size_t validation_days = 0;
    std::vector<Task> tasks{Task::CloseClose};
    bool ablate_similarity = false;
    std::vector<std::size_t> lags{1};
    std::vector<ModelSpec> models{ModelSpec{}};
    std::vector<SelectorSpec> selectors{SelectorSpec{}};
    std::vector<std::vector<std::string>> feature_groups{{}};
    /// Source of epsilon, max_iter, kinds, init mode, selector refit flag and root seed.
    EngineConfig engine;
    std::size_t jobs = 1;

    void validate() const;
    std::vector<CellSpec> cells() const;
    EngineConfig engine_for(const CellSpec& cell) const;
    nlohmann::json to_json() const;
};

/// (coin, task) -> external baseline AUC, read from `coin,task,auc`.
using BaselineAucTable = std::map<std::pair<std::string, Task>, double>;
BaselineAucTable read_baseline_table(const std::filesystem::path& path);

struct CellResult {
    Task task = Task::CloseClose;
    std::size_t cell = 0;
    std::vector<Day> days;                        // validation days then test days
    std::size_t validation_count = 0;
    std::vector<std::vector<double>> predictions;  // [day][coin]
    std::vector<double> test_auc;                  // per coin; NaN when undefined
    std::vector<double> validation_auc;
    std::size_t fits = 0;
    double mean_train_iterations = 0.0;
    int max_train_iterations = 0;
    double mean_predict_iterations = 0.0;
    int max_predict_iterations = 0;
    std::size_t predictions_at_cap = 0;
};

struct BestEntry {
    Task task = Task::CloseClose;
    std::size_t coin = 0;
    std::size_t cell = 0;
    double auc = 0.0;
    std::optional<double> baseline;
    std::optional<double> lift;
};

struct PairedComparison {
    Task task = Task::CloseClose;
    std::string a, b;
    std::size_t n = 0;
    std::optional<TTestResult> result;
    std::string note;
};

struct BacktestReport {
    std::vector<std::string> coins;
    std::vector<CellSpec> cells;
    std::vector<std::string> features_labels;
    std::vector<CellResult> results;  // ordered by (task, cell)
    std::vector<BestEntry> best;      // ordered by (task, coin)
    std::vector<PairedComparison> comparisons;
    std::string selection;
    bool ablate_similarity = false;

    const CellResult& result(Task task, std::size_t cell) const;
};

/// Replaces the engine for harness checks: returns p for every coin on `day`.
using PredictFn = std::function<std::vector<double>(Task task, std::size_t cell, std::size_t day)>;

/// Rolling-window evaluation over the last `test_days` panel days.
BacktestReport rolling_backtest(const MarketData& data, const BacktestConfig& config,
                                const BaselineAucTable* baseline = nullptr, const PredictFn& predictor = {});

/// Writes report.csv, cells.csv and report.md into `dir`.
void write_backtest_report(const std::filesystem::path& dir, const BacktestReport& report);

/// Runs fn(i) for i in [0, n) on `jobs` workers; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace c2p2
