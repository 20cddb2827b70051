#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "c2p2/csv.hpp"
#include "c2p2/panel.hpp"
#include "c2p2/synthetic.hpp"
#include "support.hpp"

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

OhlcSeries series_from_close(std::vector<double> close) {
    OhlcSeries s;
    s.coin = "X";
    for (std::size_t i = 0; i < close.size(); ++i) {
        s.days.push_back(Day::parse("2018-01-01") + static_cast<std::int32_t>(i));
        s.open.push_back(close[i]);
        s.high.push_back(close[i]);
        s.low.push_back(close[i]);
    }
    s.close = std::move(close);
    return s;
}

GroupRow row(std::string coin, int day, std::vector<double> v) {
    return {std::move(coin), Day::parse("2018-01-01") + (day - 1), std::move(v)};
}

}  // namespace

TEST_CASE("ingest sorts rows by date") {
    std::istringstream in(
        "date,open,high,low,close\n"
        "2018-07-03,3,4,2,3.5\n"
        "2018-07-01,1,2,0.5,1.5\n"
        "2018-07-02,2,3,1,2.5\n");
    const auto s = ingest_ohlc(in, "BTC");
    REQUIRE(s.size() == 3);
    CHECK(s.days[0].to_string() == "2018-07-01");
    CHECK(s.days[2].to_string() == "2018-07-03");
    CHECK(s.close[1] == 2.5);
}

TEST_CASE("ingest rejects high below low and names the row") {
    std::istringstream in("date,open,high,low,close\n2018-07-01,6,5,7,6\n");
    try {
        ingest_ohlc(in, "BTC");
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::OhlcViolation);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("ingest rejects duplicate dates") {
    std::istringstream in("date,open,high,low,close\n2018-07-01,1,2,1,1\n2018-07-01,1,2,1,1\n");
    CHECK(code_of([&] { ingest_ohlc(in, "BTC"); }) == ErrorCode::DuplicateDay);
}

TEST_CASE("ingest reports every malformed row at once") {
    std::istringstream in("date,open,high,low,close\n2018-07-01,x,2,1,1\n2018-07-02,1,2,1,1\n2018-7-3,1,2,1,1\n");
    try {
        ingest_ohlc(in, "BTC");
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedRow);
        const std::string msg = e.what();
        CHECK(msg.find("2 malformed") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("line 4") != std::string::npos);
    }
}

TEST_CASE("ingest honours a column map") {
    std::istringstream in("Day,O,H,L,C\n2018-07-01,1,2,0.5,1.5\n");
    OhlcSchema schema{"Day", "O", "H", "L", "C"};
    CHECK(ingest_ohlc(in, "BTC", schema).high[0] == 2.0);
}

TEST_CASE("labels follow the strict increase rule") {
    const auto l = derive_labels(series_from_close({10, 11, 11, 9}), Task::CloseClose);
    CHECK(l.labels == std::vector<std::uint8_t>{1, 0, 0});

    const auto up = derive_labels(series_from_close({1, 2, 3, 4, 5}), Task::CloseClose);
    CHECK(std::all_of(up.labels.begin(), up.labels.end(), [](auto v) { return v == 1; }));

    OhlcSeries s = series_from_close({1, 1});
    s.open = {1, 2};
    s.high = {3, 2.5};
    s.low = {0.5, 0.5};
    CHECK(derive_labels(s, Task::OpenOpen).labels == std::vector<std::uint8_t>{1});
    CHECK(derive_labels(s, Task::HighHigh).labels == std::vector<std::uint8_t>{0});

    CHECK(code_of([] { derive_labels(series_from_close({1}), Task::CloseClose); }) == ErrorCode::TooShort);
}

TEST_CASE("property: labels regenerate from prices for every task") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> tick(90, 110);
    for (int trial = 0; trial < 50; ++trial) {
        OhlcSeries s = series_from_close({});
        for (int d = 0; d < 30; ++d) {
            const double o = tick(rng), c = tick(rng);
            s.days.push_back(Day::parse("2018-01-01") + d);
            s.open.push_back(o);
            s.close.push_back(c);
            s.high.push_back(std::max(o, c) + tick(rng) % 3);
            s.low.push_back(std::min(o, c) - tick(rng) % 3);
        }
        for (Task t : kAllTasks) {
            const auto l = derive_labels(s, t);
            const auto p = s.column(t);
            for (std::size_t i = 0; i < l.labels.size(); ++i) CHECK((l.labels[i] == 1) == (p[i + 1] > p[i]));
        }
    }
}

TEST_CASE("histogram counts") {
    const std::vector<double> e1{0, 2.5, 5};
    CHECK(histogram_features(std::vector<double>{1, 2, 3, 4}, e1, false) == std::vector<double>{2, 2});
    const std::vector<double> e2{0, 1, 2};
    CHECK(histogram_features(std::vector<double>{}, e2, true) == std::vector<double>{0, 0});
    CHECK(histogram_features(std::vector<double>{-1, 99}, e2, false) == std::vector<double>{1, 1});
    CHECK(histogram_features(std::vector<double>{2}, e2, false) == std::vector<double>{0, 1});
    CHECK(histogram_features(std::vector<double>{0.5, 1.5, 1.7, 3}, e2, true) == std::vector<double>{0.25, 0.75});
    const std::vector<double> bad{0, 0};
    CHECK(code_of([&] { histogram_features(std::vector<double>{1}, bad, false); }) == ErrorCode::BadEdges);
}

TEST_CASE("property: unnormalized histogram totals equal the value count") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(rng() % 50);
        for (auto& x : v) x = n(rng);
        const auto edges = equal_width_edges(-5.0, 5.0, 1 + rng() % 12);
        const auto h = histogram_features(v, edges, false);
        CHECK(std::accumulate(h.begin(), h.end(), 0.0) == static_cast<double>(v.size()));
    }
}

TEST_CASE("assembly takes the union of days and forward fills") {
    GroupFrame a{"A", 1, {}}, b{"B", 2, {}};
    for (int d = 1; d <= 10; ++d) a.rows.push_back(row("X", d, {double(d)}));
    for (int d = 3; d <= 12; ++d) {
        if (d != 6) b.rows.push_back(row("X", d, {double(d), -double(d)}));
    }
    const std::vector<GroupFrame> groups{a, b};
    const auto p = assemble_panel(groups);
    REQUIRE(p.num_days() == 12);
    CHECK(p.width() == 3);
    CHECK(p.at(0, 0, 1) == 0.0);   // leading gap zero filled
    CHECK(p.at(0, 5, 1) == 5.0);   // day 6 copies day 5
    CHECK(p.at(0, 5, 2) == -5.0);
    CHECK(p.at(0, 11, 0) == 10.0); // A ends on day 10

    const auto z = assemble_panel(groups, FillPolicy::Zero);
    CHECK(z.at(0, 5, 1) == 0.0);
}

TEST_CASE("assembly widths add up across groups") {
    GroupFrame e{"E", 88, {}}, r{"R", 366, {}}, pr{"P", 1, {}};
    for (int d = 1; d <= 3; ++d) {
        e.rows.push_back(row(std::string(kAllCoins), d, std::vector<double>(88, 1.0)));
        r.rows.push_back(row("BTC", d, std::vector<double>(366, 2.0)));
        pr.rows.push_back(row("BTC", d, {3.0}));
    }
    const std::vector<GroupFrame> groups{pr, e, r};
    const auto p = assemble_panel(groups);
    CHECK(p.width() == 455);
    CHECK(p.group("R")->offset == 89);
    CHECK(p.at(0, 0, 1) == 1.0);  // broadcast row
}

TEST_CASE("assembly intersects coins and validates") {
    GroupFrame a{"A", 1, {row("X", 1, {1}), row("Y", 1, {1})}};
    GroupFrame b{"B", 1, {row("Y", 1, {2}), row("Z", 1, {2})}};
    std::vector<GroupFrame> ok{a, b};
    CHECK(assemble_panel(ok).coins() == std::vector<std::string>{"Y"});

    GroupFrame c{"C", 1, {row("Q", 1, {2})}};
    std::vector<GroupFrame> disjoint{a, c};
    CHECK(code_of([&] { assemble_panel(disjoint); }) == ErrorCode::EmptyIntersection);

    GroupFrame late{"L", 1, {row("X", 5, {2}), row("Y", 5, {2})}};
    std::vector<GroupFrame> no_overlap{a, late};
    CHECK(code_of([&] { assemble_panel(no_overlap); }) == ErrorCode::EmptyIntersection);

    GroupFrame wide{"W", 2, {row("X", 1, {1})}};
    std::vector<GroupFrame> bad_width{wide};
    CHECK(code_of([&] { assemble_panel(bad_width); }) == ErrorCode::WidthMismatch);
}

TEST_CASE("normalizer uses train statistics only") {
    std::vector<double> v{2, 4, 6, 100};
    FeaturePanel p({"X"}, {Day{0}, Day{1}, Day{2}, Day{3}}, {{"F", 0, 1}}, v);
    const auto n = Normalizer::fit(p, 0, 2);
    CHECK(n.mean()[0] == doctest::Approx(4.0));
    CHECK(n.stdev()[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
    const auto t = n.apply(p);
    CHECK(t.at(0, 0, 0) + t.at(0, 1, 0) + t.at(0, 2, 0) == doctest::Approx(0.0));

    FeaturePanel q({"X"}, {Day{0}, Day{1}, Day{2}, Day{3}}, {{"F", 0, 1}}, {5, 5, 5, 4});
    const auto tq = Normalizer::fit(q, 0, 2).apply(q);
    CHECK(tq.at(0, 0, 0) == 0.0);
    CHECK(tq.at(0, 3, 0) == 0.0);

    FeaturePanel r({"X"}, {Day{0}, Day{1}, Day{2}, Day{3}}, {{"F", 0, 1}}, {1, 3, 5, 3});
    CHECK(Normalizer::fit(r, 0, 2).apply(r).at(0, 3, 0) == 0.0);

    CHECK(code_of([&] { Normalizer::fit(p, 2, 1); }) == ErrorCode::EmptyRange);
}

TEST_CASE("property: refitting on normalized train data gives mean 0 and stdev 1") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto p = testing::random_panel(3, 40, 6, seed);
        const auto n = Normalizer::fit(p, 5, 30);
        const auto again = Normalizer::fit(n.apply(p), 5, 30);
        for (std::size_t j = 0; j < p.width(); ++j) {
            CHECK(std::abs(again.mean()[j]) < 1e-6);
            CHECK(std::abs(again.stdev()[j] - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("property: normalizer ignores rows outside the train range") {
    const auto p = testing::random_panel(3, 40, 5, 9);
    const auto base = Normalizer::fit(p, 0, 20);
    auto v = p.values();
    std::mt19937_64 rng(3);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t d = 21; d < 40; ++d) {
            for (std::size_t j = 0; j < 5; ++j) v[(c * 40 + d) * 5 + j] = static_cast<double>(rng() % 1000);
        }
    }
    const auto other = Normalizer::fit(p.with_values(v), 0, 20);
    CHECK(base.mean() == other.mean());
    CHECK(base.stdev() == other.stdev());
    const auto trimmed = Normalizer::fit(p.slice_days(0, 20), 0, 20);
    CHECK(base.mean() == trimmed.mean());
    CHECK(base.stdev() == trimmed.stdev());
}

TEST_CASE("label panel needs the preceding calendar day") {
    OhlcSeries s = series_from_close({1, 2, 3, 2});
    s.days[2] = s.days[2] + 1;  // gap before the third price
    s.days[3] = s.days[3] + 1;
    GroupFrame g{"P", 1, {}};
    for (std::size_t i = 0; i < s.size(); ++i) g.rows.push_back({"X", s.days[i], {s.close[i]}});
    std::vector<GroupFrame> groups{g};
    const auto panel = assemble_panel(groups);
    const auto labels = build_label_panel(panel, std::span(&s, 1), Task::CloseClose);
    CHECK(labels.at(0, 0) == -1);
    CHECK(labels.at(0, 1) == 1);
    CHECK(labels.at(0, 2) == -1);
    CHECK(labels.at(0, 3) == 0);
}

TEST_CASE("panel directory round trip") {
    const auto market = generate_synthetic_market({.coins = 3, .days = 30, .coupling = 0.5, .seed = 4});
    const auto dir = std::filesystem::temp_directory_path() / "c2p2_panel_roundtrip";
    std::filesystem::remove_all(dir);
    save_panel_dir(dir, market.panel, market.labels);
    const auto back = load_panel_dir(dir);
    CHECK(back.panel.values() == market.panel.values());
    CHECK(back.panel.coins() == market.panel.coins());
    CHECK(back.panel.days() == market.panel.days());
    for (Task t : kAllTasks) CHECK(back.labels_for(t).values() == market.labels_for(t).values());
    CHECK(code_of([&] { load_panel_dir(dir / "nope"); }) == ErrorCode::MissingArtifact);
}

TEST_CASE("a written synthetic dataset ingests to the same panel") {
    const auto market = generate_synthetic_market({.coins = 2, .days = 25, .coupling = 0.3, .seed = 8});
    const auto dir = std::filesystem::temp_directory_path() / "c2p2_synth_dataset";
    std::filesystem::remove_all(dir);
    write_synthetic_dataset(dir, market);
    const auto loaded = load_market_data(DatasetManifest::load(dir / "dataset.json"));
    CHECK(loaded.panel.width() == market.panel.width());
    CHECK(loaded.panel.values() == market.panel.values());
    CHECK(loaded.labels_for(Task::CloseClose).values() == market.labels_for(Task::CloseClose).values());
}

TEST_CASE("manifest widths come from the data, including event histograms") {
    const auto dir = std::filesystem::temp_directory_path() / "c2p2_manifest";
    std::filesystem::remove_all(dir);
    csv::write_file(dir / "btc.csv", "date,open,high,low,close\n2018-01-01,1,2,1,1.5\n2018-01-02,1.5,2,1,1.2\n");
    csv::write_file(dir / "eth.csv", "date,open,high,low,close\n2018-01-01,1,2,1,1.5\n2018-01-02,1.5,2,1,1.7\n");
    csv::write_file(dir / "feat.csv",
                    "date,coin,a,b,c\n2018-01-01,BTC,1,2,3\n2018-01-02,BTC,4,5,6\n2018-01-01,ETH,1,2,3\n"
                    "2018-01-02,ETH,4,5,6\n");
    csv::write_file(dir / "events.csv",
                    "date,coin,stat,value\n2018-01-01,BTC,score,0.5\n2018-01-01,BTC,score,3\n2018-01-02,ETH,count,9\n");
    csv::write_file(dir / "dataset.json", R"({
        "ohlc": [{"coin": "BTC", "path": "btc.csv"}, {"coin": "ETH", "path": "eth.csv"}],
        "features": [{"path": "feat.csv", "groups": [{"group": "E", "columns": [0, 0]}, {"group": "R", "columns": [1, 2]}]}],
        "events": [{"path": "events.csv", "group": "H", "normalize": false,
                    "stats": [{"name": "score", "range": [0, 11]}, {"name": "count", "edges": [0, 5, 10]}]}]
    })");
    const auto m = load_market_data(DatasetManifest::load(dir / "dataset.json"));
    CHECK(m.panel.width() == 1 + 1 + 2 + 13);
    CHECK(m.panel.group("H")->width == 13);
    const auto h = m.panel.group("H")->offset;
    CHECK(m.panel.at(0, 0, h + 0) == 1.0);
    CHECK(m.panel.at(0, 0, h + 3) == 1.0);
    CHECK(m.panel.at(1, 1, h + 12) == 1.0);
    CHECK(m.labels_for(Task::CloseClose).at(0, 1) == 0);
    CHECK(m.labels_for(Task::CloseClose).at(1, 1) == 1);
}
