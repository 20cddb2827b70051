#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2p2/classifiers.hpp"
#include "c2p2/panel.hpp"
#include "c2p2/similarity.hpp"

namespace c2p2 {

/// How the probability features are seeded before the first iteration.
enum class InitMode {
    Uniform,    // independent draw per (coin, day)
    Symmetric,  // one draw per day shared by all coins; per-coin model seeds do not depend on the coin
};

struct EngineConfig {
    std::size_t lag = 1;
    double epsilon = 1e-3;
    int max_iter = 10;
    std::vector<SimilarityKind> kinds{kAllSimilarityKinds.begin(), kAllSimilarityKinds.end()};
    bool use_similarity = true;
    /// Panel groups fed to the lagged vector; empty means all.
    std::vector<std::string> groups;
    SelectorSpec selector;
    ModelSpec model;
    std::uint64_t seed = 0;
    InitMode init = InitMode::Uniform;
    bool refit_selector_each_iteration = true;

    /// Throws ValidationError listing every problem.
    void validate() const;
    nlohmann::json to_json() const;
    static EngineConfig from_json(const nlohmann::json& j);
    std::string hash() const;
};

/// Columns of the panel used by the lagged vector under `groups` (all when empty).
std::vector<std::size_t> lagged_columns(const FeaturePanel& panel, std::span<const std::string> groups);

/// (f_{c,d-L}, ..., f_{c,d-1}) over the chosen columns, oldest first.
std::vector<double> build_lagged(const FeaturePanel& panel, std::size_t coin, std::size_t day, std::size_t lag,
                                 std::span<const std::size_t> columns = {});

struct DesignLayout {
    std::size_t lagged = 0;
    std::size_t similarity = 0;
    std::size_t probability = 0;

    std::size_t width() const { return lagged + similarity + probability; }
};

DesignLayout design_layout(std::size_t per_day_width, std::size_t lag, std::size_t coins, std::size_t kinds,
                           bool use_similarity);

/// One design row [lf_c, s_{-c}, p_{-c}]; `lagged` holds every coin's lagged vector.
std::vector<double> assemble_design_row(std::span<const std::vector<double>> lagged, std::size_t coin,
                                        std::span<const double> probabilities, std::span<const SimilarityKind> kinds,
                                        bool use_similarity);

struct TrainedEnsemble {
    static constexpr int kVersion = 1;

    EngineConfig config;
    std::string config_hash;
    std::uint64_t fit_seed = 0;
    std::vector<std::string> coins;
    std::size_t panel_width = 0;
    std::vector<std::size_t> columns;  // panel columns in the lagged vector
    Normalizer normalizer;
    std::vector<FeatureSelector> selectors;
    std::vector<TrainedModel> models;
    std::vector<Day> train_days;
    /// Converged training probabilities, [coin][train day].
    std::vector<std::vector<double>> train_probabilities;
    int iterations = 0;
    std::vector<double> deltas;  // per training iteration

    std::size_t design_width() const;

    nlohmann::json to_json() const;
    static TrainedEnsemble from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static TrainedEnsemble load(const std::filesystem::path& path);
};

/// Trains on labeled panel days [first_day, last_day]. The normalizer is fitted
/// on feature days [first_day - L, last_day - 1].
TrainedEnsemble c2p2_fit(const FeaturePanel& panel, const LabelPanel& labels, std::size_t first_day,
                         std::size_t last_day, const EngineConfig& config);

struct PredictOptions {
    /// Initial p instead of the seeded uniform draw (e.g. the previous day's output).
    std::optional<std::vector<double>> warm_start;
    /// Order in which coins are visited inside an iteration; identity when empty.
    std::vector<std::size_t> processing_order;
};

struct Prediction {
    std::vector<double> p;
    int iterations = 0;
    double delta = 0.0;
};

/// Predicts panel day `day` (may equal num_days) from days day-L .. day-1.
Prediction c2p2_predict(const TrainedEnsemble& ensemble, const FeaturePanel& panel, std::size_t day,
                        const PredictOptions& options = {});

}  // namespace c2p2
