#pragma once

#include <cstdint>
#include <span>

#include "c2p2/panel.hpp"

namespace c2p2 {

/// Probability that a random positive outscores a random negative, ties count half.
/// Throws SingleClass unless both classes are present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// auc_a / auc_b; throws ZeroBaseline when auc_b <= 0.
double lift(double auc_a, double auc_b);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    std::size_t df = 0;
    double mean_difference = 0.0;
};

/// Two-sided paired Student's t-test on a - b with n - 1 degrees of freedom.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct LinregResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double nmse = 0.0;
};

/// OLS of close[d] on close[d-1] over target days [train_first, train_last],
/// scored on target days [test_first, test_last] (indices into the series).
LinregResult linreg_baseline(const OhlcSeries& series, std::size_t train_first, std::size_t train_last,
                             std::size_t test_first, std::size_t test_last);

}  // namespace c2p2
