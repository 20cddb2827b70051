#include "c2p2/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "c2p2/common.hpp"

namespace c2p2 {

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::DimMismatch, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // 2U accumulated as an integer: 2 per correctly ordered pair, 1 per tie.
    std::uint64_t twice_u = 0, neg_below = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::uint64_t gp = 0, gn = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? gp : gn) += 1;
            ++j;
        }
        twice_u += 2 * gp * neg_below + gp * gn;
        neg_below += gn;
        pos += gp;
        neg += gn;
        i = j;
    }
    if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "AUC needs both classes");
    return (static_cast<double>(twice_u) / 2.0) / (static_cast<double>(pos) * static_cast<double>(neg));
}

double lift(double auc_a, double auc_b) {
    if (!(auc_b > 0.0)) throw Error(ErrorCode::ZeroBaseline, "baseline AUC must be > 0");
    return auc_a / auc_b;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimMismatch, "paired samples differ in length");
    if (a.size() < 2) throw Error(ErrorCode::InsufficientData, "paired t-test needs at least two pairs");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    TTestResult r;
    r.df = n - 1;
    r.mean_difference = mean;
    const bool all_zero = std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; });
    if (all_zero) return r;
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 1e-300) || sd <= 1e-14 * std::abs(mean)) {
        throw Error(ErrorCode::DegenerateVariance, "differences have zero variance");
    }
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    const boost::math::students_t dist(static_cast<double>(r.df));
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

LinregResult linreg_baseline(const OhlcSeries& series, std::size_t train_first, std::size_t train_last,
                             std::size_t test_first, std::size_t test_last) {
    const std::size_t N = series.size();
    if (train_first < 1 || test_first < 1 || train_last >= N || test_last >= N || train_first > train_last ||
        test_first > test_last) {
        throw Error(ErrorCode::InsufficientData, "train/test ranges must be nonempty target days within the series");
    }
    if (train_last - train_first + 1 < 3) throw Error(ErrorCode::InsufficientData, "linear baseline needs >= 3 train days");
    const auto& x = series.close;

    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(train_last - train_first + 1);
    for (std::size_t d = train_first; d <= train_last; ++d) {
        mx += x[d - 1];
        my += x[d];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t d = train_first; d <= train_last; ++d) {
        sxy += (x[d - 1] - mx) * (x[d] - my);
        sxx += (x[d - 1] - mx) * (x[d - 1] - mx);
    }
    if (!(sxx > 0.0)) throw Error(ErrorCode::ZeroVariance, "constant training regressor");

    LinregResult r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;

    const double m = static_cast<double>(test_last - test_first + 1);
    double mean_actual = 0.0;
    for (std::size_t d = test_first; d <= test_last; ++d) mean_actual += x[d];
    mean_actual /= m;
    double sse = 0.0, sst = 0.0;
    for (std::size_t d = test_first; d <= test_last; ++d) {
        const double e = x[d] - (r.intercept + r.slope * x[d - 1]);
        sse += e * e;
        sst += (x[d] - mean_actual) * (x[d] - mean_actual);
    }
    if (!(sst > 0.0)) throw Error(ErrorCode::ZeroVariance, "test actuals are constant");
    r.r2 = 1.0 - sse / sst;
    r.nmse = (sse / m) / (sst / m);
    return r;
}

}  // namespace c2p2
