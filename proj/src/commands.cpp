#include "c2p2/commands.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "c2p2/common.hpp"
#include "c2p2/csv.hpp"
#include "c2p2/metrics.hpp"

namespace c2p2 {

namespace {

constexpr int kManifestVersion = 1;

nlohmann::json digest(const std::filesystem::path& path) {
    return {{"path", path.generic_string()}, {"fnv1a", hex64(fnv1a(csv::read_text(path)))}};
}

nlohmann::json input_digests(const ExperimentConfig& config) {
    nlohmann::json out = nlohmann::json::array();
    if (config.dataset) {
        out.push_back(digest(*config.dataset));
        const auto m = DatasetManifest::load(*config.dataset);
        for (const auto& o : m.ohlc) out.push_back(digest(o.path));
        for (const auto& f : m.features) out.push_back(digest(f.path));
        for (const auto& e : m.events) out.push_back(digest(e.path));
    }
    if (config.panel) {
        for (const char* name : {"manifest.json", "features.csv", "labels.csv"}) out.push_back(digest(*config.panel / name));
    }
    if (config.baseline) out.push_back(digest(*config.baseline));
    return out;
}

void write_manifest(const std::filesystem::path& dir, Command command, const ExperimentConfig& config,
                    const nlohmann::json& inputs, const std::vector<std::string>& artifacts) {
    auto cfg = config.to_json();
    cfg.erase("output");
    cfg.erase("jobs");
    const nlohmann::json m{{"version", kManifestVersion},
                           {"command", std::string(to_string(command))},
                           {"run_id", config.run_id(command)},
                           {"config_hash", config.hash()},
                           {"seed", config.backtest.engine.seed},
                           {"config", cfg},
                           {"inputs", inputs},
                           {"artifacts", artifacts}};
    csv::write_file(dir / "manifest.json", m.dump(2) + "\n");
}

struct BestRow {
    std::string task, coin, classifier, features;
    std::size_t lag = 0;
    double auc = 0.0;
};

std::vector<BestRow> read_best_rows(const std::filesystem::path& dir) {
    const auto path = dir / "report.csv";
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingArtifact, path.string() + " not found");
    const auto t = csv::read_file(path);
    const auto task = t.column("task"), coin = t.column("coin"), cls = t.column("classifier"),
               feat = t.column("features"), lag = t.column("lag"), auc = t.column("auc");
    if (!task || !coin || !cls || !feat || !lag || !auc) throw Error(ErrorCode::MalformedRow, path.string() + ": unexpected header");
    std::vector<BestRow> rows;
    for (const auto& r : t.rows) {
        rows.push_back({r[*task], r[*coin], r[*cls], r[*feat], static_cast<std::size_t>(std::stoul(r[*lag])),
                        parse_double(r[*auc])});
    }
    return rows;
}

RunOutcome run_report(const ExperimentConfig& config) {
    const auto full_dir = config.output / config.run_id(Command::Backtest);
    const auto ablated_dir = config.output / config.run_id(Command::Ablate);
    const auto full = read_best_rows(full_dir);
    const auto ablated = read_best_rows(ablated_dir);

    RunOutcome out{config.run_id(Command::Report), config.output / config.run_id(Command::Report)};
    std::string csv_out = "task,coin,classifier,features,lag,auc,ablated_classifier,ablated_lag,ablated_auc,lift\n";
    std::string md = "# Similarity ablation\n\nLift = AUC with similarity features / AUC without them.\n";
    std::string current_task;
    std::vector<double> a, b;
    auto flush = [&] {
        if (current_task.empty()) return;
        if (a.size() >= 2) {
            try {
                const auto t = paired_t_test(a, b);
                md += fmt::format("\nPaired t-test over {} coins: mean diff {:.4f}, t = {:.3f}, p = {:.3g}\n", a.size(),
                                  t.mean_difference, t.t, t.p);
            } catch (const Error& e) {
                md += fmt::format("\nPaired t-test over {} coins: {}\n", a.size(), to_string(e.code()));
            }
        }
        a.clear();
        b.clear();
    };
    for (const auto& f : full) {
        const BestRow* match = nullptr;
        for (const auto& r : ablated) {
            if (r.task == f.task && r.coin == f.coin) match = &r;
        }
        if (!match) throw Error(ErrorCode::MissingArtifact, "ablation report has no row for " + f.coin + " " + f.task);
        if (f.task != current_task) {
            flush();
            current_task = f.task;
            md += fmt::format("\n## {}\n\n| Coin | Classifier | Lag | AUC | Ablated classifier | Ablated lag | Ablated AUC | Lift |\n"
                              "|---|---|---|---|---|---|---|---|\n",
                              f.task);
        }
        double l = std::numeric_limits<double>::quiet_NaN();
        if (!std::isnan(f.auc) && !std::isnan(match->auc)) {
            l = lift(f.auc, match->auc);
            a.push_back(f.auc);
            b.push_back(match->auc);
        }
        csv_out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", f.task, csv::escape(f.coin), f.classifier,
                               csv::escape(f.features), f.lag, format_double(f.auc), match->classifier, match->lag,
                               format_double(match->auc), format_double(l));
        md += fmt::format("| {} | {} | {} | {:.4f} | {} | {} | {:.4f} | {:.3f} |\n", f.coin, f.classifier, f.lag, f.auc,
                          match->classifier, match->lag, match->auc, l);
    }
    flush();
    csv::write_file(out.dir / "report.csv", csv_out);
    csv::write_file(out.dir / "report.md", md);
    write_manifest(out.dir, Command::Report, config,
                   nlohmann::json::array({digest(full_dir / "report.csv"), digest(ablated_dir / "report.csv")}),
                   {"report.csv", "report.md"});
    return out;
}

}  // namespace

MarketData load_experiment_data(const ExperimentConfig& config) {
    MarketData data;
    if (config.dataset) data = load_market_data(DatasetManifest::load(*config.dataset));
    else if (config.panel) data = load_panel_dir(*config.panel);
    else if (config.synthetic) data = generate_synthetic_market(*config.synthetic);
    else throw Error(ErrorCode::ValidationError, "data.dataset: missing");
    if (config.coins.empty()) return data;

    for (const auto& c : config.coins) {
        if (!data.panel.coin_index(c)) throw Error(ErrorCode::ValidationError, "coins: '" + c + "' not in the data");
    }
    MarketData out;
    out.panel = data.panel.select_coins(config.coins);
    for (std::size_t t = 0; t < data.labels.size(); ++t) {
        if (data.labels[t].num_coins() > 0) out.labels[t] = data.labels[t].select_coins(config.coins);
    }
    for (const auto& c : config.coins) {
        for (const auto& s : data.series) {
            if (s.coin == c) out.series.push_back(s);
        }
    }
    return out;
}

RunOutcome run(Command command, const ExperimentConfig& config) {
    switch (command) {
        case Command::Generate: {
            RunOutcome out{config.run_id(command), config.generate_dir.value_or(config.output / config.run_id(command))};
            const auto market = generate_synthetic_market(config.generate);
            write_synthetic_dataset(out.dir, market);
            write_manifest(out.dir, command, config, nlohmann::json::array(), {"dataset.json", "features.csv", "ohlc/"});
            return out;
        }
        case Command::Ingest: {
            RunOutcome out{config.run_id(command), config.output / config.run_id(command)};
            const auto data = load_experiment_data(config);
            save_panel_dir(out.dir / "panel", data.panel, data.labels);
            write_manifest(out.dir, command, config, input_digests(config), {"panel/manifest.json", "panel/features.csv", "panel/labels.csv"});
            return out;
        }
        case Command::Backtest:
        case Command::Ablate: {
            RunOutcome out{config.run_id(command), config.output / config.run_id(command)};
            const auto data = load_experiment_data(config);
            BacktestConfig bt = config.backtest;
            bt.ablate_similarity = command == Command::Ablate;
            std::optional<BaselineAucTable> baseline;
            if (config.baseline) baseline = read_baseline_table(*config.baseline);
            const auto report = rolling_backtest(data, bt, baseline ? &*baseline : nullptr);
            write_backtest_report(out.dir, report);
            write_manifest(out.dir, command, config, input_digests(config), {"report.csv", "cells.csv", "report.md"});
            return out;
        }
        case Command::Report: return run_report(config);
    }
    throw Error(ErrorCode::ValidationError, "unknown command");
}

}  // namespace c2p2
