#pragma once

#include <cstdint>
#include <filesystem>

#include "c2p2/panel.hpp"

namespace c2p2 {

/// Correlated toy market. Coin c's day-d return driver is
/// sqrt(coupling) * g_d + sqrt(1 - coupling) * e_{c,d}; the label is its sign.
/// Features observed on day t are noisy views of the day t+1 drivers:
///   P  log return of the coin on day t
///   E  global block, identical for all coins, weakly tied to g_{t+1}
///   R  own-signal columns tied to e_{c,t+1}, then "herd" columns whose
///      cross-coin agreement grows with g_{t+1}
struct SyntheticSpec {
    std::size_t coins = 5;
    std::size_t days = 300;
    double coupling = 0.8;
    std::uint64_t seed = 0;
    std::size_t economic_width = 4;
    std::size_t own_width = 4;
    std::size_t herd_width = 8;
    double step = 0.01;
    double economic_signal = 0.3;
    double own_signal = 0.5;
    double herd_strength = 0.6;
    double herd_sharpness = 1.0;
    Day start = Day::parse("2018-01-01");

    void validate() const;
};

MarketData generate_synthetic_market(const SyntheticSpec& spec);

/// Raw dataset directory: ohlc/<coin>.csv, features.csv and dataset.json
/// (loadable with DatasetManifest::load).
void write_synthetic_dataset(const std::filesystem::path& dir, const MarketData& market);

}  // namespace c2p2
