#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>

#include "c2p2/backtest.hpp"
#include "c2p2/csv.hpp"
#include "c2p2/synthetic.hpp"

using namespace c2p2;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}

double label_correlation(const LabelPanel& l, std::size_t a, std::size_t b) {
    std::vector<double> x, y;
    for (std::size_t d = 0; d < l.num_days(); ++d) {
        if (!l.defined(a, d) || !l.defined(b, d)) continue;
        x.push_back(l.at(a, d));
        y.push_back(l.at(b, d));
    }
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

BacktestConfig quick_config() {
    BacktestConfig c;
    c.train_window = 30;
    c.test_days = 10;
    c.models = {ModelSpec{.kind = ModelKind::LR}};
    c.selectors = {SelectorSpec{SelectorMethod::PCA, 10}};
    c.engine.seed = 5;
    return c;
}

std::string slurp(const std::filesystem::path& p) { return csv::read_text(p); }

}  // namespace

TEST_CASE("synthetic coupling extremes") {
    const auto one = generate_synthetic_market({.coins = 4, .days = 200, .coupling = 1.0, .seed = 1});
    const auto& l = one.labels_for(Task::CloseClose);
    for (std::size_t d = 0; d < l.num_days(); ++d) {
        for (std::size_t c = 1; c < 4; ++c) CHECK(l.at(c, d) == l.at(0, d));
    }

    const auto zero = generate_synthetic_market({.coins = 3, .days = 1000, .coupling = 0.0, .seed = 2});
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) CHECK(std::abs(label_correlation(zero.labels_for(Task::CloseClose), a, b)) < 0.1);
    }
}

TEST_CASE("synthetic coupling 0.8 correlates labels across coins") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto m = generate_synthetic_market({.coins = 5, .days = 400, .coupling = 0.8, .seed = seed});
        std::vector<double> rho;
        for (std::size_t a = 0; a < 5; ++a) {
            for (std::size_t b = a + 1; b < 5; ++b) rho.push_back(label_correlation(m.labels_for(Task::CloseClose), a, b));
        }
        std::nth_element(rho.begin(), rho.begin() + 5, rho.end());
        CHECK(rho[5] > 0.4);
    }
}

TEST_CASE("synthetic markets are seeded and validated") {
    const SyntheticSpec s{.coins = 2, .days = 50, .coupling = 0.5, .seed = 3};
    CHECK(generate_synthetic_market(s).panel.values() == generate_synthetic_market(s).panel.values());
    auto other = s;
    other.seed = 4;
    CHECK(generate_synthetic_market(s).panel.values() != generate_synthetic_market(other).panel.values());
    auto bad = s;
    bad.coupling = 1.5;
    CHECK(code_of([&] { generate_synthetic_market(bad); }) == ErrorCode::ValidationError);
}

TEST_CASE("one fit and one prediction per test day") {
    const auto m = generate_synthetic_market({.coins = 2, .days = 190, .coupling = 0.8, .seed = 1});
    BacktestConfig c;
    c.models = {ModelSpec{.kind = ModelKind::GNB}};
    c.selectors = {SelectorSpec{SelectorMethod::None, 0}};
    const auto r = rolling_backtest(m, c);
    REQUIRE(r.results.size() == 1);
    CHECK(r.results[0].fits == 61);
    CHECK(r.results[0].predictions.size() == 61);
    CHECK(r.results[0].days.front() == m.panel.days()[190 - 61]);
    CHECK(r.selection == "best-on-test");

    c.refit_stride = 7;
    const auto strided = rolling_backtest(m, c);
    CHECK(strided.results[0].fits == 9);
    CHECK(strided.results[0].predictions.size() == 61);
}

TEST_CASE("an oracle predictor scores perfectly") {
    const auto m = generate_synthetic_market({.coins = 4, .days = 80, .coupling = 0.5, .seed = 2});
    const auto& labels = m.labels_for(Task::CloseClose);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> noise(0.0, 1e-3);
    std::vector<std::vector<double>> table(m.panel.num_days(), std::vector<double>(4));
    for (std::size_t d = 0; d < m.panel.num_days(); ++d) {
        for (std::size_t c = 0; c < 4; ++c) table[d][c] = std::max<int>(labels.at(c, d), 0) + noise(rng);
    }
    auto c = quick_config();
    c.test_days = 40;
    const auto r = rolling_backtest(m, c, nullptr, [&](Task, std::size_t, std::size_t day) { return table[day]; });
    for (std::size_t coin = 0; coin < 4; ++coin) CHECK(r.results[0].test_auc[coin] == 1.0);
    CHECK(r.results[0].fits == 0);
}

TEST_CASE("property: future features cannot change past predictions") {
    const auto m = generate_synthetic_market({.coins = 3, .days = 60, .coupling = 0.8, .seed = 3});
    const auto c = quick_config();
    const auto base = rolling_backtest(m, c);
    const std::size_t first_scored = 60 - c.test_days;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 4; ++trial) {
        const std::size_t d = first_scored + rng() % c.test_days;
        auto v = m.panel.values();
        const std::size_t w = m.panel.width();
        for (std::size_t coin = 0; coin < 3; ++coin) {
            for (std::size_t j = 0; j < w; ++j) v[(coin * 60 + d) * w + j] += 10.0 * g(rng);
        }
        MarketData changed = m;
        changed.panel = m.panel.with_values(v);
        const auto r = rolling_backtest(changed, c);
        for (std::size_t k = 0; k + first_scored <= d; ++k) CHECK(r.results[0].predictions[k] == base.results[0].predictions[k]);
        bool any_later = false;
        for (std::size_t k = d - first_scored + 1; k < c.test_days; ++k) {
            any_later |= r.results[0].predictions[k] != base.results[0].predictions[k];
        }
        if (d + 1 < 60) CHECK(any_later);
    }
}

TEST_CASE("ablation removes the similarity block and keeps the seed") {
    auto c = quick_config();
    const auto cell = c.cells().at(0);
    const auto full = c.engine_for(cell);
    c.ablate_similarity = true;
    const auto ablated = c.engine_for(cell);
    CHECK(full.use_similarity);
    CHECK_FALSE(ablated.use_similarity);
    CHECK(full.seed == ablated.seed);
    const auto panel = generate_synthetic_market({.coins = 5, .days = 40, .seed = 1}).panel;
    const auto wf = design_layout(panel.width(), 1, 5, full.kinds.size(), full.use_similarity).width();
    const auto wa = design_layout(panel.width(), 1, 5, ablated.kinds.size(), ablated.use_similarity).width();
    CHECK(wf - wa == 5 * 4);
}

TEST_CASE("grid cells and feature labels") {
    auto c = quick_config();
    c.lags = {1, 2};
    c.models = {ModelSpec{.kind = ModelKind::LR}, ModelSpec{.kind = ModelKind::GNB}};
    c.feature_groups = {{}, {"P", "R"}};
    const auto cells = c.cells();
    CHECK(cells.size() == 8);
    const auto panel = generate_synthetic_market({.coins = 2, .days = 20, .seed = 1}).panel;
    CHECK(cells[0].features_label(panel) == "P, E, R");
    CHECK(cells[1].features_label(panel) == "P, R");
    CHECK(cells[0].key() != cells[2].key());
    CHECK(c.engine_for(cells[0]).seed != c.engine_for(cells[2]).seed);
}

TEST_CASE("reports are deterministic and independent of the worker count") {
    const auto m = generate_synthetic_market({.coins = 3, .days = 60, .coupling = 0.8, .seed = 4});
    auto c = quick_config();
    c.models.push_back(ModelSpec{.kind = ModelKind::RF, .trees = 5});
    const auto dir = std::filesystem::temp_directory_path() / "c2p2_report_det";
    std::filesystem::remove_all(dir);
    write_backtest_report(dir / "a", rolling_backtest(m, c));
    c.jobs = 3;
    write_backtest_report(dir / "b", rolling_backtest(m, c));
    for (const char* f : {"report.csv", "cells.csv", "report.md"}) CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    const auto table = csv::read_file(dir / "a" / "report.csv");
    CHECK(table.header == std::vector<std::string>{"task", "coin", "classifier", "selector", "features", "lag", "auc",
                                                   "baseline_auc", "lift"});
    CHECK(table.rows.size() == 3);
}

TEST_CASE("baseline table drives the lift column") {
    const auto dir = std::filesystem::temp_directory_path() / "c2p2_baseline";
    std::filesystem::create_directories(dir);
    csv::write_file(dir / "b.csv", "coin,task,auc\nCOIN1,CloseClose,0.5\n");
    const auto table = read_baseline_table(dir / "b.csv");
    CHECK(table.at({"COIN1", Task::CloseClose}) == 0.5);

    const auto m = generate_synthetic_market({.coins = 2, .days = 60, .coupling = 0.8, .seed = 5});
    const auto r = rolling_backtest(m, quick_config(), &table);
    REQUIRE(r.best.size() == 2);
    REQUIRE(r.best[0].lift.has_value());
    CHECK(*r.best[0].lift == doctest::Approx(r.best[0].auc / 0.5));
    CHECK_FALSE(r.best[1].lift.has_value());

    csv::write_file(dir / "bad.csv", "coin,task,auc\nCOIN1,CloseClose,0\n");
    CHECK(code_of([&] { read_baseline_table(dir / "bad.csv"); }) == ErrorCode::MalformedRow);
    CHECK(code_of([&] { read_baseline_table(dir / "none.csv"); }) == ErrorCode::MissingArtifact);
}

TEST_CASE("validation days pick the cell") {
    const auto m = generate_synthetic_market({.coins = 2, .days = 70, .coupling = 0.8, .seed = 6});
    auto c = quick_config();
    c.validation_days = 10;
    c.models = {ModelSpec{.kind = ModelKind::LR}, ModelSpec{.kind = ModelKind::GNB}};
    const auto r = rolling_backtest(m, c);
    CHECK(r.selection == "validation-tail");
    for (const auto& b : r.best) {
        const double chosen = r.result(Task::CloseClose, b.cell).validation_auc[b.coin];
        for (std::size_t cell = 0; cell < 2; ++cell) CHECK(chosen >= r.result(Task::CloseClose, cell).validation_auc[b.coin]);
        CHECK(b.auc == r.result(Task::CloseClose, b.cell).test_auc[b.coin]);
    }
    CHECK(r.results[0].predictions.size() == 20);
}

TEST_CASE("too little data is rejected") {
    const auto m = generate_synthetic_market({.coins = 2, .days = 40, .seed = 7});
    CHECK(code_of([&] { rolling_backtest(m, quick_config()); }) == ErrorCode::InsufficientData);
    auto c = quick_config();
    c.lags = {};
    CHECK(code_of([&] { rolling_backtest(m, c); }) == ErrorCode::ValidationError);
}

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                        if (i == 7) throw Error(ErrorCode::IoError, "boom");
                    }),
                    Error);
}
