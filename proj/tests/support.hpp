#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "c2p2/panel.hpp"

namespace testing {

/// Brute-force AUC by enumerating every (positive, negative) pair.
inline double brute_force_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

/// Panel with one group "F" of the given width and N(0,1) values.
inline c2p2::FeaturePanel random_panel(std::size_t coins, std::size_t days, std::size_t width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < coins; ++c) names.push_back("C" + std::to_string(c));
    std::vector<c2p2::Day> ds;
    for (std::size_t d = 0; d < days; ++d) ds.push_back(c2p2::Day::parse("2018-01-01") + static_cast<std::int32_t>(d));
    std::vector<double> v(coins * days * width);
    for (auto& x : v) x = n(rng);
    return c2p2::FeaturePanel(names, ds, {{"F", 0, width}}, v);
}

inline c2p2::LabelPanel random_labels(const c2p2::FeaturePanel& panel, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::int8_t> v(panel.num_coins() * panel.num_days());
    for (auto& x : v) x = static_cast<std::int8_t>(rng() & 1);
    return c2p2::LabelPanel(c2p2::Task::CloseClose, panel.coins(), panel.days(), v);
}

}  // namespace testing
