#include "c2p2/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "c2p2/common.hpp"
#include "c2p2/csv.hpp"

namespace c2p2 {

void SyntheticSpec::validate() const {
    if (coins < 1) throw Error(ErrorCode::ValidationError, "synthetic market needs at least one coin");
    if (days < 10) throw Error(ErrorCode::ValidationError, "synthetic market needs at least 10 days");
    if (!(coupling >= 0.0 && coupling <= 1.0)) throw Error(ErrorCode::ValidationError, "coupling must be in [0, 1]");
    if (!(step > 0.0)) throw Error(ErrorCode::ValidationError, "step must be > 0");
}

MarketData generate_synthetic_market(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t C = spec.coins, N = spec.days;
    std::mt19937_64 rng(derive_seed(spec.seed, 0x5e));
    std::normal_distribution<double> normal(0.0, 1.0);

    // Drivers for days 0..N (day N only feeds the last day's features).
    std::vector<double> g(N + 1);
    std::vector<std::vector<double>> e(C, std::vector<double>(N + 1));
    for (std::size_t d = 0; d <= N; ++d) {
        g[d] = normal(rng);
        for (std::size_t c = 0; c < C; ++c) e[c][d] = normal(rng);
    }
    const double a = std::sqrt(spec.coupling), b = std::sqrt(1.0 - spec.coupling);

    std::vector<std::string> names;
    for (std::size_t c = 0; c < C; ++c) names.push_back("COIN" + std::to_string(c + 1));

    MarketData market;
    for (std::size_t c = 0; c < C; ++c) {
        OhlcSeries s;
        s.coin = names[c];
        double close = 100.0 * std::exp(0.5 * normal(rng));
        for (std::size_t d = 0; d < N; ++d) {
            const double open = close;
            if (d > 0) close = open * std::exp(spec.step * (a * g[d] + b * e[c][d]));
            const double wick_hi = std::abs(normal(rng)) * 0.25 * spec.step;
            const double wick_lo = std::abs(normal(rng)) * 0.25 * spec.step;
            s.days.push_back(spec.start + static_cast<std::int32_t>(d));
            s.open.push_back(open);
            s.close.push_back(close);
            s.high.push_back(std::max(open, close) * (1.0 + wick_hi));
            s.low.push_back(std::min(open, close) * (1.0 - wick_lo));
        }
        market.series.push_back(std::move(s));
    }

    GroupFrame economic{"E", spec.economic_width, {}};
    GroupFrame reddit{"R", spec.own_width + spec.herd_width, {}};
    std::vector<double> shared(spec.herd_width);
    for (std::size_t d = 0; d < N; ++d) {
        const Day day = spec.start + static_cast<std::int32_t>(d);
        std::vector<double> ev(spec.economic_width);
        for (auto& v : ev) v = spec.economic_signal * g[d + 1] + normal(rng);
        economic.rows.push_back({std::string(kAllCoins), day, std::move(ev)});

        const double agree = spec.herd_strength * 0.5 * std::erfc(-spec.herd_sharpness * g[d + 1] / std::sqrt(2.0));
        for (auto& v : shared) v = normal(rng);
        for (std::size_t c = 0; c < C; ++c) {
            std::vector<double> rv;
            for (std::size_t k = 0; k < spec.own_width; ++k) rv.push_back(spec.own_signal * e[c][d + 1] + normal(rng));
            for (std::size_t k = 0; k < spec.herd_width; ++k) {
                rv.push_back(std::sqrt(agree) * shared[k] + std::sqrt(1.0 - agree) * normal(rng));
            }
            reddit.rows.push_back({names[c], day, std::move(rv)});
        }
    }

    std::vector<GroupFrame> groups{price_group(market.series, PriceFeature::LogReturn, "P")};
    if (spec.economic_width > 0) groups.push_back(std::move(economic));
    if (reddit.width > 0) groups.push_back(std::move(reddit));
    market.panel = assemble_panel(groups, FillPolicy::ForwardFillThenZero);
    for (Task t : kAllTasks) market.labels[static_cast<std::size_t>(t)] = build_label_panel(market.panel, market.series, t);
    return market;
}

void write_synthetic_dataset(const std::filesystem::path& dir, const MarketData& market) {
    const auto& panel = market.panel;
    nlohmann::json manifest;
    manifest["price_feature"] = std::string(to_string(PriceFeature::LogReturn));
    manifest["price_group"] = "P";
    manifest["fill_policy"] = std::string(to_string(panel.fill_policy()));
    manifest["ohlc"] = nlohmann::json::array();
    for (const auto& s : market.series) {
        std::string out = "date,open,high,low,close\n";
        for (std::size_t d = 0; d < s.size(); ++d) {
            out += s.days[d].to_string() + "," + format_double(s.open[d]) + "," + format_double(s.high[d]) + "," +
                   format_double(s.low[d]) + "," + format_double(s.close[d]) + "\n";
        }
        const std::string rel = "ohlc/" + s.coin + ".csv";
        csv::write_file(dir / rel, out);
        manifest["ohlc"].push_back({{"coin", s.coin}, {"path", rel}});
    }

    std::vector<const FeatureGroup*> extra;
    for (const auto& g : panel.groups()) {
        if (g.name != "P") extra.push_back(&g);
    }
    std::string out = "date,coin";
    nlohmann::json groups = nlohmann::json::array();
    std::size_t col = 0;
    for (const auto* g : extra) {
        for (std::size_t k = 0; k < g->width; ++k) out += "," + g->name + "_" + std::to_string(k);
        groups.push_back({{"group", g->name}, {"columns", {col, col + g->width - 1}}});
        col += g->width;
    }
    out += "\n";
    for (std::size_t d = 0; d < panel.num_days(); ++d) {
        for (std::size_t c = 0; c < panel.num_coins(); ++c) {
            out += panel.days()[d].to_string() + "," + panel.coins()[c];
            for (const auto* g : extra) {
                for (std::size_t k = 0; k < g->width; ++k) out += "," + format_double(panel.at(c, d, g->offset + k));
            }
            out += "\n";
        }
    }
    csv::write_file(dir / "features.csv", out);
    manifest["features"] = nlohmann::json::array({{{"path", "features.csv"}, {"groups", groups}}});
    csv::write_file(dir / "dataset.json", manifest.dump(2) + "\n");
}

}  // namespace c2p2
