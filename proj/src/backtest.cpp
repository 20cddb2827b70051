#include "c2p2/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "c2p2/common.hpp"
#include "c2p2/csv.hpp"

namespace c2p2 {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : std::string(sep)) + s;
    return out;
}

std::string fixed(double v, int digits = 4) {
    if (std::isnan(v)) return "n/a";
    return fmt::format("{:.{}f}", v, digits);
}

}  // namespace

std::string CellSpec::features_label(const FeaturePanel& panel) const {
    std::vector<std::string> names;
    for (const auto& g : panel.groups()) {
        if (groups.empty() || std::find(groups.begin(), groups.end(), g.name) != groups.end()) names.push_back(g.name);
    }
    return join(names, ", ");
}

std::string CellSpec::key() const {
    nlohmann::json j{{"lag", lag}, {"model", model.to_json()}, {"selector", selector.to_json()}, {"groups", groups}};
    return j.dump();
}

nlohmann::json CellSpec::to_json() const {
    return {{"lag", lag}, {"model", model.to_json()}, {"selector", selector.to_json()}, {"groups", groups}};
}

void BacktestConfig::validate() const {
    std::vector<std::string> problems;
    const std::size_t max_lag = lags.empty() ? 0 : *std::max_element(lags.begin(), lags.end());
    if (train_window < max_lag + 2) problems.push_back("train_window must be >= lag + 2");
    if (test_days < 1) problems.push_back("test_days must be >= 1");
    if (refit_stride < 1) problems.push_back("refit_stride must be >= 1");
    if (tasks.empty()) problems.push_back("tasks must be nonempty");
    if (lags.empty()) problems.push_back("lag grid must be nonempty");
    for (auto l : lags) {
        if (l < 1) problems.push_back("lag must be >= 1");
    }
    if (models.empty()) problems.push_back("model grid must be nonempty");
    for (const auto& m : models) {
        try {
            m.validate();
        } catch (const Error& e) {
            problems.push_back(e.what());
        }
    }
    if (selectors.empty()) problems.push_back("selector grid must be nonempty");
    if (feature_groups.empty()) problems.push_back("feature group grid must be nonempty");
    if (jobs < 1) problems.push_back("jobs must be >= 1");
    if (!problems.empty()) throw Error(ErrorCode::ValidationError, join(problems, "; "));
}

std::vector<CellSpec> BacktestConfig::cells() const {
    std::vector<CellSpec> out;
    for (auto lag : lags) {
        for (const auto& m : models) {
            for (const auto& s : selectors) {
                for (const auto& g : feature_groups) out.push_back({lag, m, s, g});
            }
        }
    }
    return out;
}

EngineConfig BacktestConfig::engine_for(const CellSpec& cell) const {
    EngineConfig e = engine;
    e.lag = cell.lag;
    e.model = cell.model;
    e.selector = cell.selector;
    e.groups = cell.groups;
    e.use_similarity = !ablate_similarity;
    // Shared by the full and ablated runs so their draws line up.
    e.seed = derive_seed(engine.seed, fnv1a(cell.key()));
    return e;
}

nlohmann::json BacktestConfig::to_json() const {
    nlohmann::json t = nlohmann::json::array(), m = nlohmann::json::array(), s = nlohmann::json::array();
    for (auto task : tasks) t.push_back(std::string(to_string(task)));
    for (const auto& spec : models) m.push_back(spec.to_json());
    for (const auto& spec : selectors) s.push_back(spec.to_json());
    return {{"train_window", train_window},
            {"test_days", test_days},
            {"refit_stride", refit_stride},
            {"validation_days", validation_days},
            {"tasks", t},
            {"ablate_similarity", ablate_similarity},
            {"lags", lags},
            {"models", m},
            {"selectors", s},
            {"feature_groups", feature_groups},
            {"engine", engine.to_json()}};
}

BaselineAucTable read_baseline_table(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingArtifact, "baseline table " + path.string() + " not found");
    const auto table = csv::read_file(path);
    const auto cc = table.column("coin"), tc = table.column("task"), ac = table.column("auc");
    if (!cc || !tc || !ac) throw Error(ErrorCode::MalformedRow, path.string() + ": expected header coin,task,auc");
    BaselineAucTable out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto where = path.string() + ": line " + std::to_string(table.line_numbers[r]);
        const auto task = parse_task(row[*tc]);
        if (!task) throw Error(ErrorCode::MalformedRow, where + ": unknown task '" + row[*tc] + "'");
        const double v = parse_double(row[*ac]);
        if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorCode::MalformedRow, where + ": baseline AUC must be in (0, 1]");
        out[{row[*cc], *task}] = v;
    }
    return out;
}

const CellResult& BacktestReport::result(Task task, std::size_t cell) const {
    for (const auto& r : results) {
        if (r.task == task && r.cell == cell) return r;
    }
    throw Error(ErrorCode::MissingArtifact, "no result for the requested cell");
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < std::min(jobs, n); ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next = n;
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------

namespace {

struct Block {
    std::size_t task_index = 0;
    std::size_t cell = 0;
    std::size_t first = 0;  // offset into the scored days
    std::size_t count = 0;
};

struct BlockOutput {
    std::vector<std::vector<double>> p;
    std::vector<int> predict_iterations;
    int train_iterations = 0;
    bool fitted = false;
};

double coin_auc(const LabelPanel& labels, std::size_t coin, std::size_t first_day,
                const std::vector<std::vector<double>>& p, std::size_t from, std::size_t to) {
    std::vector<double> scores;
    std::vector<std::uint8_t> y;
    for (std::size_t k = from; k < to; ++k) {
        if (!labels.defined(coin, first_day + k)) continue;
        scores.push_back(p[k][coin]);
        y.push_back(static_cast<std::uint8_t>(labels.at(coin, first_day + k)));
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(y.size())) return kNaN;
    return auc(scores, y);
}

/// Index of the highest-AUC result for `coin`; ties keep the earlier cell.
std::size_t best_cell(const std::vector<const CellResult*>& results, std::size_t coin, bool validation) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const double v = validation ? results[i]->validation_auc[coin] : results[i]->test_auc[coin];
        if (!std::isnan(v) && v > best) {
            best = v;
            arg = i;
        }
    }
    return arg;
}

}  // namespace

BacktestReport rolling_backtest(const MarketData& data, const BacktestConfig& config, const BaselineAucTable* baseline,
                                const PredictFn& predictor) {
    config.validate();
    const FeaturePanel& panel = data.panel;
    const std::size_t D = panel.num_days(), C = panel.num_coins();
    const std::size_t W = config.train_window, T = config.test_days, V = config.validation_days;
    const std::size_t max_lag = *std::max_element(config.lags.begin(), config.lags.end());
    if (D < W + T + V + max_lag) {
        throw Error(ErrorCode::InsufficientData, "panel has " + std::to_string(D) + " days; the protocol needs " +
                                                     std::to_string(W + T + V + max_lag));
    }
    const std::size_t first_scored = D - T - V;
    const std::size_t scored = T + V;

    BacktestReport report;
    report.coins = panel.coins();
    report.cells = config.cells();
    report.ablate_similarity = config.ablate_similarity;
    report.selection = V > 0 ? "validation-tail" : "best-on-test";
    for (const auto& cell : report.cells) report.features_labels.push_back(cell.features_label(panel));

    std::vector<Block> blocks;
    for (std::size_t t = 0; t < config.tasks.size(); ++t) {
        for (std::size_t cell = 0; cell < report.cells.size(); ++cell) {
            for (std::size_t k = 0; k < scored; k += config.refit_stride) {
                blocks.push_back({t, cell, k, std::min(config.refit_stride, scored - k)});
            }
        }
    }

    std::vector<BlockOutput> outputs(blocks.size());
    parallel_for(blocks.size(), config.jobs, [&](std::size_t b) {
        const Block& blk = blocks[b];
        const Task task = config.tasks[blk.task_index];
        BlockOutput& out = outputs[b];
        const std::size_t refit_day = first_scored + blk.first;
        if (predictor) {
            for (std::size_t k = 0; k < blk.count; ++k) {
                out.p.push_back(predictor(task, blk.cell, refit_day + k));
                out.predict_iterations.push_back(0);
            }
            return;
        }
        const EngineConfig engine = config.engine_for(report.cells[blk.cell]);
        const auto ensemble = c2p2_fit(panel, data.labels_for(task), refit_day - W, refit_day - 1, engine);
        out.fitted = true;
        out.train_iterations = ensemble.iterations;
        for (std::size_t k = 0; k < blk.count; ++k) {
            const auto pred = c2p2_predict(ensemble, panel, refit_day + k);
            out.p.push_back(pred.p);
            out.predict_iterations.push_back(pred.iterations);
        }
    });

    for (std::size_t t = 0; t < config.tasks.size(); ++t) {
        const Task task = config.tasks[t];
        const LabelPanel& labels = data.labels_for(task);
        for (std::size_t cell = 0; cell < report.cells.size(); ++cell) {
            CellResult r;
            r.task = task;
            r.cell = cell;
            r.validation_count = V;
            for (std::size_t k = 0; k < scored; ++k) r.days.push_back(panel.days()[first_scored + k]);
            long train_iter_sum = 0, predict_iter_sum = 0;
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                if (blocks[b].task_index != t || blocks[b].cell != cell) continue;
                const auto& out = outputs[b];
                for (std::size_t k = 0; k < out.p.size(); ++k) {
                    r.predictions.push_back(out.p[k]);
                    const int it = out.predict_iterations[k];
                    predict_iter_sum += it;
                    r.max_predict_iterations = std::max(r.max_predict_iterations, it);
                    if (out.fitted && it >= config.engine.max_iter) ++r.predictions_at_cap;
                }
                if (out.fitted) {
                    ++r.fits;
                    train_iter_sum += out.train_iterations;
                    r.max_train_iterations = std::max(r.max_train_iterations, out.train_iterations);
                }
            }
            r.mean_train_iterations = r.fits ? static_cast<double>(train_iter_sum) / static_cast<double>(r.fits) : 0.0;
            r.mean_predict_iterations = static_cast<double>(predict_iter_sum) / static_cast<double>(scored);
            for (std::size_t c = 0; c < C; ++c) {
                r.test_auc.push_back(coin_auc(labels, c, first_scored, r.predictions, V, scored));
                r.validation_auc.push_back(V > 0 ? coin_auc(labels, c, first_scored, r.predictions, 0, V) : kNaN);
            }
            report.results.push_back(std::move(r));
        }

        std::vector<const CellResult*> task_results;
        for (const auto& r : report.results) {
            if (r.task == task) task_results.push_back(&r);
        }
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t pick = best_cell(task_results, c, V > 0);
            BestEntry e;
            e.task = task;
            e.coin = c;
            e.cell = task_results[pick]->cell;
            e.auc = task_results[pick]->test_auc[c];
            if (baseline) {
                auto it = baseline->find({panel.coins()[c], task});
                if (it != baseline->end()) {
                    e.baseline = it->second;
                    if (!std::isnan(e.auc)) e.lift = lift(e.auc, it->second);
                }
            }
            report.best.push_back(e);
        }

        // Per model kind: each coin's best test AUC over the cells using that kind.
        std::vector<std::string> kinds;
        for (const auto& cell : report.cells) {
            const std::string k(to_string(cell.model.kind));
            if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
        }
        auto per_kind = [&](const std::string& kind) {
            std::vector<double> v(C, kNaN);
            for (const auto* r : task_results) {
                if (to_string(report.cells[r->cell].model.kind) != kind) continue;
                for (std::size_t c = 0; c < C; ++c) {
                    if (!std::isnan(r->test_auc[c]) && (std::isnan(v[c]) || r->test_auc[c] > v[c])) v[c] = r->test_auc[c];
                }
            }
            return v;
        };
        auto compare = [&](const std::string& a_name, const std::string& b_name, const std::vector<double>& a,
                           const std::vector<double>& b) {
            PairedComparison pc;
            pc.task = task;
            pc.a = a_name;
            pc.b = b_name;
            std::vector<double> xa, xb;
            for (std::size_t c = 0; c < a.size(); ++c) {
                if (std::isnan(a[c]) || std::isnan(b[c])) continue;
                xa.push_back(a[c]);
                xb.push_back(b[c]);
            }
            pc.n = xa.size();
            try {
                pc.result = paired_t_test(xa, xb);
            } catch (const Error& err) {
                pc.note = std::string(to_string(err.code()));
            }
            report.comparisons.push_back(std::move(pc));
        };
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            for (std::size_t j = i + 1; j < kinds.size(); ++j) compare(kinds[i], kinds[j], per_kind(kinds[i]), per_kind(kinds[j]));
        }
        if (baseline) {
            std::vector<double> a, b;
            for (const auto& e : report.best) {
                if (e.task != task) continue;
                a.push_back(e.auc);
                b.push_back(e.baseline ? *e.baseline : kNaN);
            }
            compare("best", "baseline", a, b);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

void write_backtest_report(const std::filesystem::path& dir, const BacktestReport& report) {
    const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };

    std::string csv_out = "task,coin,classifier,selector,features,lag,auc,baseline_auc,lift\n";
    for (const auto& e : report.best) {
        const auto& cell = report.cells[e.cell];
        csv_out += fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(e.task), csv::escape(report.coins[e.coin]),
                               to_string(cell.model.kind), csv::escape(cell.selector.label()),
                               csv::escape(report.features_labels[e.cell]), cell.lag, format_double(e.auc),
                               opt(e.baseline), opt(e.lift));
    }
    csv::write_file(dir / "report.csv", csv_out);

    std::string cells_out =
        "task,coin,classifier,selector,features,lag,similarity,test_auc,validation_auc,fits,mean_train_iterations,"
        "max_train_iterations,mean_predict_iterations,max_predict_iterations,predictions_at_cap\n";
    for (const auto& r : report.results) {
        const auto& cell = report.cells[r.cell];
        for (std::size_t c = 0; c < report.coins.size(); ++c) {
            cells_out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(r.task),
                                     csv::escape(report.coins[c]), to_string(cell.model.kind),
                                     csv::escape(cell.selector.label()), csv::escape(report.features_labels[r.cell]),
                                     cell.lag, report.ablate_similarity ? "off" : "on", format_double(r.test_auc[c]),
                                     format_double(r.validation_auc[c]), r.fits, format_double(r.mean_train_iterations),
                                     r.max_train_iterations, format_double(r.mean_predict_iterations),
                                     r.max_predict_iterations, r.predictions_at_cap);
        }
    }
    csv::write_file(dir / "cells.csv", cells_out);

    std::string md = "# Backtest report\n\n";
    md += fmt::format("Similarity features: {}. Cell selection: {}.\n", report.ablate_similarity ? "off" : "on",
                      report.selection == "best-on-test" ? "best-on-test" : "validation tail");
    for (Task task : kAllTasks) {
        bool any = false;
        for (const auto& e : report.best) any = any || e.task == task;
        if (!any) continue;
        md += fmt::format("\n## {}\n\n| Coin | Classifier | Selector | Features | Lag | AUC | Lift |\n"
                          "|---|---|---|---|---|---|---|\n",
                          to_string(task));
        for (const auto& e : report.best) {
            if (e.task != task) continue;
            const auto& cell = report.cells[e.cell];
            md += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", report.coins[e.coin], to_string(cell.model.kind),
                              cell.selector.label(), report.features_labels[e.cell], cell.lag, fixed(e.auc),
                              e.lift ? fixed(*e.lift, 3) : std::string("n/a"));
        }
        bool header = false;
        for (const auto& pc : report.comparisons) {
            if (pc.task != task) continue;
            if (!header) {
                md += "\n| Comparison | Coins | Mean diff | t | p |\n|---|---|---|---|---|\n";
                header = true;
            }
            if (pc.result) {
                md += fmt::format("| {} vs {} | {} | {} | {} | {:.3g} |\n", pc.a, pc.b, pc.n,
                                  fixed(pc.result->mean_difference), fixed(pc.result->t, 3), pc.result->p);
            } else {
                md += fmt::format("| {} vs {} | {} | n/a | n/a | {} |\n", pc.a, pc.b, pc.n, pc.note);
            }
        }
        md += "\n| Cell | Fits | Train iters (mean/max) | Predict iters (mean/max) | At cap |\n|---|---|---|---|---|\n";
        for (const auto& r : report.results) {
            if (r.task != task) continue;
            const auto& cell = report.cells[r.cell];
            md += fmt::format("| {} {} L={} [{}] | {} | {:.2f}/{} | {:.2f}/{} | {} |\n", to_string(cell.model.kind),
                              cell.selector.label(), cell.lag, report.features_labels[r.cell], r.fits,
                              r.mean_train_iterations, r.max_train_iterations, r.mean_predict_iterations,
                              r.max_predict_iterations, r.predictions_at_cap);
        }
    }
    csv::write_file(dir / "report.md", md);
}

}  // namespace c2p2
