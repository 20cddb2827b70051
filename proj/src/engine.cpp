#include "c2p2/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "c2p2/common.hpp"
#include "c2p2/csv.hpp"

namespace c2p2 {

namespace {

constexpr std::uint64_t kFitTag = 1;
constexpr std::uint64_t kPredictTag = 2;

std::string_view to_string(InitMode m) { return m == InitMode::Symmetric ? "symmetric" : "uniform"; }

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

Day target_day(const FeaturePanel& panel, std::size_t day) {
    return day < panel.num_days() ? panel.days()[day] : panel.days().back() + static_cast<std::int32_t>(day - panel.num_days() + 1);
}

/// Lagged vectors of every coin for one day, normalized with `norm`.
std::vector<std::vector<double>> normalized_lagged(const FeaturePanel& panel, std::size_t day, std::size_t lag,
                                                   const Normalizer& norm, std::span<const std::size_t> columns) {
    std::vector<std::vector<double>> out(panel.num_coins());
    const std::size_t w = columns.size();
    for (std::size_t c = 0; c < panel.num_coins(); ++c) {
        auto& lf = out[c];
        lf.resize(lag * w);
        for (std::size_t l = 0; l < lag; ++l) {
            const auto row = panel.row(c, day - lag + l);
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t f = columns[j];
                const double sd = norm.stdev()[f];
                lf[l * w + j] = sd < Normalizer::kStdevFloor ? 0.0 : (row[f] - norm.mean()[f]) / sd;
            }
        }
    }
    return out;
}

std::vector<double> without(std::span<const double> p, std::size_t coin) {
    std::vector<double> out;
    out.reserve(p.size() - 1);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i != coin) out.push_back(p[i]);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void EngineConfig::validate() const {
    std::vector<std::string> problems;
    if (lag < 1) problems.push_back("lag must be >= 1");
    if (!(epsilon > 0.0)) problems.push_back("epsilon must be > 0");
    if (max_iter < 1) problems.push_back("max_iter must be >= 1");
    if (use_similarity && kinds.empty()) problems.push_back("similarity kinds must be nonempty");
    if (selector.method != SelectorMethod::None && selector.k < 1) problems.push_back("selector k must be >= 1");
    try {
        model.validate();
    } catch (const Error& e) {
        problems.push_back(e.what());
    }
    if (problems.empty()) return;
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw Error(ErrorCode::ValidationError, msg);
}

nlohmann::json EngineConfig::to_json() const {
    nlohmann::json k = nlohmann::json::array();
    for (auto kind : kinds) k.push_back(std::string(c2p2::to_string(kind)));
    return {{"lag", lag},
            {"epsilon", epsilon},
            {"max_iter", max_iter},
            {"kinds", k},
            {"use_similarity", use_similarity},
            {"groups", groups},
            {"selector", selector.to_json()},
            {"model", model.to_json()},
            {"seed", seed},
            {"init", std::string(to_string(init))},
            {"refit_selector_each_iteration", refit_selector_each_iteration}};
}

EngineConfig EngineConfig::from_json(const nlohmann::json& j) {
    EngineConfig c;
    c.lag = j.value("lag", c.lag);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.max_iter = j.value("max_iter", c.max_iter);
    if (j.contains("kinds")) {
        c.kinds.clear();
        for (const auto& k : j.at("kinds")) {
            const auto kind = parse_similarity_kind(k.get<std::string>());
            if (!kind) throw Error(ErrorCode::ParseError, "unknown similarity kind " + k.dump());
            c.kinds.push_back(*kind);
        }
    }
    c.use_similarity = j.value("use_similarity", c.use_similarity);
    c.groups = j.value("groups", c.groups);
    if (j.contains("selector")) c.selector = SelectorSpec::from_json(j.at("selector"));
    if (j.contains("model")) c.model = ModelSpec::from_json(j.at("model"));
    c.seed = j.value("seed", c.seed);
    c.init = j.value("init", std::string("uniform")) == "symmetric" ? InitMode::Symmetric : InitMode::Uniform;
    c.refit_selector_each_iteration = j.value("refit_selector_each_iteration", c.refit_selector_each_iteration);
    return c;
}

std::string EngineConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

// ---------------------------------------------------------------------------

std::vector<std::size_t> lagged_columns(const FeaturePanel& panel, std::span<const std::string> groups) {
    std::vector<std::size_t> cols;
    if (groups.empty()) {
        cols.resize(panel.width());
        for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = i;
        return cols;
    }
    for (const auto& g : panel.groups()) {
        if (std::find(groups.begin(), groups.end(), g.name) == groups.end()) continue;
        for (std::size_t i = 0; i < g.width; ++i) cols.push_back(g.offset + i);
    }
    for (const auto& name : groups) {
        if (!panel.group(name)) throw Error(ErrorCode::WidthMismatch, "panel has no feature group '" + name + "'");
    }
    return cols;
}

std::vector<double> build_lagged(const FeaturePanel& panel, std::size_t coin, std::size_t day, std::size_t lag,
                                 std::span<const std::size_t> columns) {
    if (lag < 1 || day < lag) {
        throw Error(ErrorCode::InsufficientHistory,
                    "day index " + std::to_string(day) + " has fewer than " + std::to_string(lag) + " prior panel days");
    }
    if (coin >= panel.num_coins() || day > panel.num_days()) throw Error(ErrorCode::InsufficientHistory, "out of panel range");
    std::vector<double> out;
    const std::size_t w = columns.empty() ? panel.width() : columns.size();
    out.reserve(lag * w);
    for (std::size_t d = day - lag; d < day; ++d) {
        const auto row = panel.row(coin, d);
        if (columns.empty()) {
            out.insert(out.end(), row.begin(), row.end());
        } else {
            for (auto f : columns) out.push_back(row[f]);
        }
    }
    return out;
}

DesignLayout design_layout(std::size_t per_day_width, std::size_t lag, std::size_t coins, std::size_t kinds,
                           bool use_similarity) {
    const std::size_t others = coins > 0 ? coins - 1 : 0;
    return {per_day_width * lag, use_similarity ? kinds * others : 0, others};
}

std::vector<double> assemble_design_row(std::span<const std::vector<double>> lagged, std::size_t coin,
                                        std::span<const double> probabilities, std::span<const SimilarityKind> kinds,
                                        bool use_similarity) {
    if (probabilities.size() != lagged.size()) throw Error(ErrorCode::DimMismatch, "one probability per coin expected");
    std::vector<double> row(lagged[coin].begin(), lagged[coin].end());
    if (use_similarity && lagged.size() > 1) {
        std::vector<std::span<const double>> views(lagged.begin(), lagged.end());
        const auto s = similarity_block(views, coin, kinds);
        row.insert(row.end(), s.begin(), s.end());
    }
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (i != coin) row.push_back(probabilities[i]);
    }
    return row;
}

// ---------------------------------------------------------------------------

std::size_t TrainedEnsemble::design_width() const {
    return design_layout(columns.size(), config.lag, coins.size(), config.kinds.size(), config.use_similarity).width();
}

nlohmann::json TrainedEnsemble::to_json() const {
    nlohmann::json sel = nlohmann::json::array(), mod = nlohmann::json::array();
    for (const auto& s : selectors) sel.push_back(s.to_json());
    for (const auto& m : models) mod.push_back(m->to_json());
    std::vector<std::string> days;
    for (auto d : train_days) days.push_back(d.to_string());
    return {{"version", kVersion},
            {"config", config.to_json()},
            {"config_hash", config_hash},
            {"fit_seed", fit_seed},
            {"coins", coins},
            {"panel_width", panel_width},
            {"columns", columns},
            {"normalizer", normalizer.to_json()},
            {"selectors", sel},
            {"models", mod},
            {"train_days", days},
            {"train_probabilities", train_probabilities},
            {"iterations", iterations},
            {"deltas", deltas}};
}

TrainedEnsemble TrainedEnsemble::from_json(const nlohmann::json& j) {
    const int version = j.at("version").get<int>();
    if (version != kVersion) throw Error(ErrorCode::ParseError, "unsupported ensemble version " + std::to_string(version));
    TrainedEnsemble e;
    e.config = EngineConfig::from_json(j.at("config"));
    e.config_hash = j.at("config_hash").get<std::string>();
    if (e.config_hash != e.config.hash()) throw Error(ErrorCode::ParseError, "ensemble config hash mismatch");
    e.fit_seed = j.at("fit_seed").get<std::uint64_t>();
    e.coins = j.at("coins").get<std::vector<std::string>>();
    e.panel_width = j.at("panel_width").get<std::size_t>();
    e.columns = j.at("columns").get<std::vector<std::size_t>>();
    e.normalizer = Normalizer::from_json(j.at("normalizer"));
    for (const auto& s : j.at("selectors")) e.selectors.push_back(FeatureSelector::from_json(s));
    for (const auto& m : j.at("models")) e.models.push_back(model_from_json(m));
    for (const auto& d : j.at("train_days")) e.train_days.push_back(Day::parse(d.get<std::string>()));
    e.train_probabilities = j.at("train_probabilities").get<std::vector<std::vector<double>>>();
    e.iterations = j.at("iterations").get<int>();
    e.deltas = j.at("deltas").get<std::vector<double>>();
    if (e.selectors.size() != e.coins.size() || e.models.size() != e.coins.size()) {
        throw Error(ErrorCode::ParseError, "ensemble needs one selector and model per coin");
    }
    return e;
}

void TrainedEnsemble::save(const std::filesystem::path& path) const { csv::write_file(path, to_json().dump()); }

TrainedEnsemble TrainedEnsemble::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingArtifact, path.string() + " not found");
    try {
        return from_json(nlohmann::json::parse(csv::read_text(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

TrainedEnsemble c2p2_fit(const FeaturePanel& panel, const LabelPanel& labels, std::size_t first_day,
                         std::size_t last_day, const EngineConfig& config) {
    config.validate();
    if (first_day > last_day || last_day >= panel.num_days()) {
        throw Error(ErrorCode::EmptyTrainRange, "train range [" + std::to_string(first_day) + ", " +
                                                    std::to_string(last_day) + "] is empty or outside the panel");
    }
    const std::size_t L = config.lag;
    if (first_day < L) {
        throw Error(ErrorCode::InsufficientHistory,
                    "first train day needs " + std::to_string(L) + " prior panel days, has " + std::to_string(first_day));
    }
    if (labels.num_coins() != panel.num_coins() || labels.num_days() != panel.num_days()) {
        throw Error(ErrorCode::WidthMismatch, "labels are not aligned with the panel");
    }

    const std::size_t C = panel.num_coins();
    const std::size_t n = last_day - first_day + 1;

    TrainedEnsemble ens;
    ens.config = config;
    ens.config_hash = config.hash();
    ens.fit_seed = derive_seed(config.seed, kFitTag, panel.days()[last_day].value);
    ens.coins = panel.coins();
    ens.panel_width = panel.width();
    ens.columns = lagged_columns(panel, config.groups);
    ens.normalizer = Normalizer::fit(panel, first_day - L, last_day - 1);
    for (std::size_t t = first_day; t <= last_day; ++t) ens.train_days.push_back(panel.days()[t]);

    // Fixed part of every design row: lf and s.
    const DesignLayout layout = design_layout(ens.columns.size(), L, C, config.kinds.size(), config.use_similarity);
    const std::size_t fixed = layout.lagged + layout.similarity;
    std::vector<Matrix> base(C, Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layout.width())));
    const std::vector<double> zeros(C, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto lagged = normalized_lagged(panel, first_day + i, L, ens.normalizer, ens.columns);
        for (std::size_t c = 0; c < C; ++c) {
            const auto row = assemble_design_row(lagged, c, zeros, config.kinds, config.use_similarity);
            for (std::size_t j = 0; j < fixed; ++j) base[c](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
        }
    }

    std::vector<std::vector<Eigen::Index>> labeled(C);
    std::vector<Vector> targets(C);
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> y;
        for (std::size_t i = 0; i < n; ++i) {
            if (!labels.defined(c, first_day + i)) continue;
            labeled[c].push_back(static_cast<Eigen::Index>(i));
            y.push_back(labels.at(c, first_day + i));
        }
        if (labeled[c].empty()) throw Error(ErrorCode::EmptyTrainRange, "no labeled train days for " + panel.coins()[c]);
        targets[c] = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
    }

    // p[i][c]
    std::vector<std::vector<double>> p(n, std::vector<double>(C));
    {
        std::mt19937_64 rng(derive_seed(ens.fit_seed, kFitTag));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (auto& day : p) {
            if (config.init == InitMode::Symmetric) {
                std::fill(day.begin(), day.end(), u01(rng));
            } else {
                for (auto& v : day) v = u01(rng);
            }
        }
    }

    ens.selectors.resize(C);
    ens.models.resize(C);
    for (int iter = 1; iter <= config.max_iter; ++iter) {
        const auto snapshot = p;
        for (std::size_t c = 0; c < C; ++c) {
            Matrix& X = base[c];
            for (std::size_t i = 0; i < n; ++i) {
                const auto others = without(snapshot[i], c);
                for (std::size_t j = 0; j < others.size(); ++j) {
                    X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(fixed + j)) = others[j];
                }
            }
            Dataset data{X(labeled[c], Eigen::all), targets[c]};
            if (iter == 1 || config.refit_selector_each_iteration) {
                SelectorSpec spec = config.selector;
                const std::size_t pos = data.positives();
                if (spec.method == SelectorMethod::AnovaTopK && (pos == 0 || pos == data.rows())) {
                    spec.method = SelectorMethod::None;
                }
                ens.selectors[c] = fit_selector(spec, data);
            }
            ModelSpec mspec = config.model;
            mspec.seed = config.init == InitMode::Symmetric ? derive_seed(ens.fit_seed) : derive_seed(ens.fit_seed, c);
            ens.models[c] = fit(mspec, Dataset{ens.selectors[c].transform(data.X), data.y});
            const Vector out = predict_proba(*ens.models[c], ens.selectors[c].transform(X));
            for (std::size_t i = 0; i < n; ++i) p[i][c] = out[static_cast<Eigen::Index>(i)];
        }
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) delta = std::max(delta, l2_distance(p[i], snapshot[i]));
        ens.deltas.push_back(delta);
        ens.iterations = iter;
        if (delta <= config.epsilon) break;
    }

    ens.train_probabilities.assign(C, std::vector<double>(n));
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < n; ++i) ens.train_probabilities[c][i] = p[i][c];
    }
    return ens;
}

Prediction c2p2_predict(const TrainedEnsemble& ensemble, const FeaturePanel& panel, std::size_t day,
                        const PredictOptions& options) {
    const auto& config = ensemble.config;
    const std::size_t C = ensemble.coins.size();
    if (panel.coins() != ensemble.coins) throw Error(ErrorCode::WidthMismatch, "panel coins differ from the ensemble's");
    if (panel.width() != ensemble.panel_width) {
        throw Error(ErrorCode::WidthMismatch, "panel width " + std::to_string(panel.width()) + " differs from fitted " +
                                                  std::to_string(ensemble.panel_width));
    }
    if (day < config.lag || day > panel.num_days()) {
        throw Error(ErrorCode::InsufficientHistory, "day index " + std::to_string(day) + " lacks " +
                                                        std::to_string(config.lag) + " prior panel days");
    }

    std::vector<std::size_t> order = options.processing_order;
    if (order.empty()) {
        order.resize(C);
        for (std::size_t c = 0; c < C; ++c) order[c] = c;
    }
    {
        auto sorted = order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t c = 0; c < sorted.size(); ++c) {
            if (sorted[c] != c || sorted.size() != C) throw Error(ErrorCode::DimMismatch, "processing order must permute the coins");
        }
    }

    std::vector<double> p(C);
    if (options.warm_start) {
        if (options.warm_start->size() != C) throw Error(ErrorCode::DimMismatch, "warm start needs one value per coin");
        p = *options.warm_start;
    } else {
        std::mt19937_64 rng(derive_seed(config.seed, kPredictTag, target_day(panel, day).value));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        if (config.init == InitMode::Symmetric) {
            std::fill(p.begin(), p.end(), u01(rng));
        } else {
            for (auto& v : p) v = u01(rng);
        }
    }

    const auto lagged = normalized_lagged(panel, day, config.lag, ensemble.normalizer, ensemble.columns);
    const DesignLayout layout = design_layout(ensemble.columns.size(), config.lag, C, config.kinds.size(),
                                              config.use_similarity);
    const std::size_t fixed = layout.lagged + layout.similarity;
    std::vector<Matrix> rows(C);
    for (std::size_t c = 0; c < C; ++c) {
        const auto r = assemble_design_row(lagged, c, p, config.kinds, config.use_similarity);
        rows[c] = Eigen::Map<const Matrix>(r.data(), 1, static_cast<Eigen::Index>(r.size()));
    }

    Prediction out;
    do {
        const auto snapshot = p;
        for (auto c : order) {
            const auto others = without(snapshot, c);
            for (std::size_t j = 0; j < others.size(); ++j) rows[c](0, static_cast<Eigen::Index>(fixed + j)) = others[j];
            p[c] = predict_proba(*ensemble.models[c], ensemble.selectors[c].transform(rows[c]))[0];
        }
        out.delta = l2_distance(p, snapshot);
        ++out.iterations;
    } while (out.delta > config.epsilon && out.iterations < config.max_iter);
    out.p = std::move(p);
    return out;
}

}  // namespace c2p2
