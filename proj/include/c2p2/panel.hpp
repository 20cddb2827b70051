#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "c2p2/common.hpp"

namespace c2p2 {

/// The four up/down prediction targets, one per OHLC column.
enum class Task { OpenOpen, HighHigh, LowLow, CloseClose };

inline constexpr std::array<Task, 4> kAllTasks{Task::OpenOpen, Task::HighHigh, Task::LowLow, Task::CloseClose};

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view name);

struct OhlcSeries {
    std::string coin;
    std::vector<Day> days;
    std::vector<double> open, high, low, close;

    std::size_t size() const { return days.size(); }
    std::span<const double> column(Task task) const;
};

/// Column names used to locate the OHLC fields in a delimited file.
struct OhlcSchema {
    std::string date = "date";
    std::string open = "open";
    std::string high = "high";
    std::string low = "low";
    std::string close = "close";
};

/// Reads a validated series, sorted by day. Malformed rows are collected and
/// reported together in a single MalformedRow error.
OhlcSeries ingest_ohlc(std::istream& source, std::string coin, const OhlcSchema& schema = {});
OhlcSeries ingest_ohlc_file(const std::filesystem::path& path, std::string coin, const OhlcSchema& schema = {});

/// Labels for one coin and task: entry i is for series day i+1, and is 1 iff the
/// task column strictly increased from day i to day i+1.
struct CoinLabels {
    std::string coin;
    Task task = Task::CloseClose;
    std::vector<Day> days;
    std::vector<std::uint8_t> labels;
};

CoinLabels derive_labels(const OhlcSeries& series, Task task);

/// Bin counts over half-open bins [e_i, e_{i+1}); the last bin is closed and
/// values outside the edges are clamped into the end bins.
std::vector<double> histogram_features(std::span<const double> values, std::span<const double> edges, bool normalize);
std::vector<double> equal_width_edges(double lo, double hi, std::size_t bins);

// ---------------------------------------------------------------------------
// Panel assembly

/// Coin "*" broadcasts a row to every coin (global indicators such as stock indices).
inline constexpr std::string_view kAllCoins = "*";

struct GroupRow {
    std::string coin;
    Day day;
    std::vector<double> values;
};

struct GroupFrame {
    std::string name;
    std::size_t width = 0;
    std::vector<GroupRow> rows;
};

enum class FillPolicy { ForwardFillThenZero, Zero };

std::string_view to_string(FillPolicy policy);
std::optional<FillPolicy> parse_fill_policy(std::string_view name);

struct FeatureGroup {
    std::string name;
    std::size_t offset = 0;
    std::size_t width = 0;
};

/// Dense (coin, day) -> per-day feature vector store. Immutable once built.
class FeaturePanel {
public:
    FeaturePanel() = default;
    FeaturePanel(std::vector<std::string> coins, std::vector<Day> days, std::vector<FeatureGroup> groups,
                 std::vector<double> values, FillPolicy fill_policy = FillPolicy::ForwardFillThenZero);

    std::size_t num_coins() const { return coins_.size(); }
    std::size_t num_days() const { return days_.size(); }
    std::size_t width() const { return width_; }

    const std::vector<std::string>& coins() const { return coins_; }
    const std::vector<Day>& days() const { return days_; }
    const std::vector<FeatureGroup>& groups() const { return groups_; }
    const std::vector<double>& values() const { return values_; }
    FillPolicy fill_policy() const { return fill_policy_; }

    std::span<const double> row(std::size_t coin, std::size_t day) const {
        return {values_.data() + (coin * days_.size() + day) * width_, width_};
    }
    double at(std::size_t coin, std::size_t day, std::size_t feature) const {
        return values_[(coin * days_.size() + day) * width_ + feature];
    }

    std::optional<std::size_t> coin_index(std::string_view coin) const;
    std::optional<std::size_t> day_index(Day day) const;
    const FeatureGroup* group(std::string_view name) const;

    /// Same shape, different values (used by normalization and perturbation tests).
    FeaturePanel with_values(std::vector<double> values) const;
    /// Keeps panel days [first, last] inclusive.
    FeaturePanel slice_days(std::size_t first, std::size_t last) const;
    /// Keeps and reorders coins.
    FeaturePanel select_coins(std::span<const std::string> coins) const;

private:
    std::vector<std::string> coins_;
    std::vector<Day> days_;
    std::vector<FeatureGroup> groups_;
    std::vector<double> values_;
    std::size_t width_ = 0;
    FillPolicy fill_policy_ = FillPolicy::ForwardFillThenZero;
};

/// Coins: intersection over groups (broadcast-only groups do not restrict).
/// Days: union over groups. Missing cells are filled per policy.
FeaturePanel assemble_panel(std::span<const GroupFrame> groups, FillPolicy policy = FillPolicy::ForwardFillThenZero);

// ---------------------------------------------------------------------------
// Normalization

/// Per-feature z-score, fitted on a range of panel days across all coins.
class Normalizer {
public:
    static constexpr double kStdevFloor = 1e-12;

    Normalizer() = default;
    Normalizer(std::vector<double> mean, std::vector<double> stdev);

    /// Fits on panel days [first_day, last_day] inclusive.
    static Normalizer fit(const FeaturePanel& panel, std::size_t first_day, std::size_t last_day);

    FeaturePanel apply(const FeaturePanel& panel) const;
    void apply_in_place(std::span<double> row) const;

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stdev() const { return stdev_; }

    nlohmann::json to_json() const;
    static Normalizer from_json(const nlohmann::json& j);

private:
    std::vector<double> mean_;
    std::vector<double> stdev_;
};

// ---------------------------------------------------------------------------
// Labels aligned to a panel

/// Per (coin, panel day) label; -1 where undefined (no price on d or d-1).
class LabelPanel {
public:
    LabelPanel() = default;
    LabelPanel(Task task, std::vector<std::string> coins, std::vector<Day> days, std::vector<std::int8_t> values);

    Task task() const { return task_; }
    const std::vector<std::string>& coins() const { return coins_; }
    const std::vector<Day>& days() const { return days_; }
    std::size_t num_coins() const { return coins_.size(); }
    std::size_t num_days() const { return days_.size(); }

    std::int8_t at(std::size_t coin, std::size_t day) const { return values_[coin * days_.size() + day]; }
    bool defined(std::size_t coin, std::size_t day) const { return at(coin, day) >= 0; }

    LabelPanel with_values(std::vector<std::int8_t> values) const;
    LabelPanel slice_days(std::size_t first, std::size_t last) const;
    LabelPanel select_coins(std::span<const std::string> coins) const;
    const std::vector<std::int8_t>& values() const { return values_; }

private:
    Task task_ = Task::CloseClose;
    std::vector<std::string> coins_;
    std::vector<Day> days_;
    std::vector<std::int8_t> values_;
};

/// Label for panel day d is defined iff the coin's series has both d and the
/// preceding calendar day.
LabelPanel build_label_panel(const FeaturePanel& panel, std::span<const OhlcSeries> series, Task task);

// ---------------------------------------------------------------------------
// On-disk formats

/// Where the price block comes from when it is derived from OHLC files.
enum class PriceFeature { None, Close, LogReturn, Ohlc };

std::string_view to_string(PriceFeature p);
std::optional<PriceFeature> parse_price_feature(std::string_view name);

/// Builds the price group frame from OHLC series.
GroupFrame price_group(std::span<const OhlcSeries> series, PriceFeature kind, std::string name = "P");

/// Structured-text description of a raw dataset: OHLC files per coin, feature
/// tables with column-range -> group mapping, and event tables to histogram.
struct DatasetManifest {
    struct OhlcFile {
        std::string coin;
        std::filesystem::path path;
    };
    struct GroupColumns {
        std::string group;
        std::size_t first = 0;  // feature-column index (0 = first column after date,coin)
        std::size_t last = 0;   // inclusive
    };
    struct FeatureFile {
        std::filesystem::path path;
        std::vector<GroupColumns> groups;
    };
    struct HistogramStat {
        std::string name;
        std::vector<double> edges;
    };
    struct EventFile {
        std::filesystem::path path;  // date,coin,stat,value
        std::string group;
        bool normalize = true;
        std::vector<HistogramStat> stats;
    };

    std::vector<OhlcFile> ohlc;
    std::vector<FeatureFile> features;
    std::vector<EventFile> events;
    PriceFeature price_feature = PriceFeature::Close;
    std::string price_group = "P";
    FillPolicy fill_policy = FillPolicy::ForwardFillThenZero;
    OhlcSchema schema;

    /// Relative paths are resolved against base_dir.
    static DatasetManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static DatasetManifest load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

/// A panel together with its source series and the labels for all four tasks.
struct MarketData {
    FeaturePanel panel;
    std::vector<OhlcSeries> series;
    std::array<LabelPanel, 4> labels;  // indexed by Task

    const LabelPanel& labels_for(Task t) const { return labels[static_cast<std::size_t>(t)]; }
};

MarketData load_market_data(const DatasetManifest& manifest);

/// Panel directory: manifest.json (groups, coins, days, fill policy),
/// features.csv (date,coin,<features>), labels.csv (date,coin,<task labels>).
void save_panel_dir(const std::filesystem::path& dir, const FeaturePanel& panel, std::span<const LabelPanel> labels);
MarketData load_panel_dir(const std::filesystem::path& dir);

}  // namespace c2p2
