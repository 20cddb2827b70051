#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "c2p2/metrics.hpp"
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

double auc_of(std::vector<double> s, std::vector<std::uint8_t> y) { return auc(s, y); }

// Two-sided p by Simpson integration of the Student-t density from 0 to |t|.
double simpson_two_sided_p(double t, double df) {
    const double c = std::tgamma((df + 1) / 2) / (std::sqrt(df * std::numbers::pi) * std::tgamma(df / 2));
    auto f = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
    const int n = 20000;
    const double h = std::abs(t) / n;
    double s = f(0) + f(std::abs(t));
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(i * h);
    return 1.0 - 2.0 * s * h / 3.0;
}

OhlcSeries series(const std::vector<double>& close) {
    OhlcSeries s;
    for (std::size_t i = 0; i < close.size(); ++i) {
        s.days.push_back(Day{static_cast<std::int32_t>(i)});
        s.open.push_back(close[i]);
        s.high.push_back(close[i]);
        s.low.push_back(close[i]);
    }
    s.close = close;
    return s;
}

}  // namespace

TEST_CASE("auc examples") {
    CHECK(auc_of({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK(auc_of({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
    CHECK(auc_of({0.9, 0.4, 0.6, 0.2}, {1, 0, 1, 0}) == 1.0);
    // Positives 0.9 and 0.2 against negatives 0.4 and 0.6: two of four pairs ordered.
    CHECK(auc_of({0.9, 0.4, 0.6, 0.2}, {1, 0, 0, 1}) == 0.5);
    CHECK(auc_of({0.9, 0.4, 0.6, 0.2}, {0, 1, 1, 0}) == 0.5);
    CHECK(auc_of({0.9, 0.4, 0.6, 0.2}, {1, 1, 0, 0}) == 0.75);
    CHECK(auc_of({0.1, 0.2}, {1, 0}) == 0.0);
    CHECK(code_of([] { auc_of({0.1, 0.2}, {1, 1}); }) == ErrorCode::SingleClass);
    CHECK(code_of([] { auc_of({0.1, 0.2}, {1}); }) == ErrorCode::DimMismatch);
}

TEST_CASE("property: auc equals brute-force pair counting") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 60;
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        const int levels = 1 + static_cast<int>(rng() % 8);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % levels) / levels;
            y[i] = rng() & 1;
        }
        y[0] = 1;
        y[1] = 0;
        CHECK(auc(s, y) == testing::brute_force_auc(s, y));
    }
}

TEST_CASE("property: auc is invariant under increasing maps") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(30), t(30);
        std::vector<std::uint8_t> y(30);
        for (std::size_t i = 0; i < 30; ++i) {
            s[i] = std::round(g(rng) * 3) / 3;
            t[i] = std::exp(2 * s[i]) + 5;
            y[i] = i % 3 == 0;
        }
        CHECK(auc(s, y) == auc(t, y));
    }
}

TEST_CASE("lift") {
    CHECK(lift(0.7, 0.5) == doctest::Approx(1.4));
    CHECK(lift(0.61, 0.61) == 1.0);
    CHECK(std::abs(lift(0.697, 0.697 / 1.306) - 1.306) < 1e-3);
    CHECK(std::abs(lift(0.761, 0.761 / 1.406) - 1.406) < 1e-3);
    CHECK(code_of([] { lift(0.5, 0.0); }) == ErrorCode::ZeroBaseline);
}

TEST_CASE("paired t-test examples") {
    const std::vector<double> a{0.6, 0.7, 0.8}, z{0.0, 0.0, 0.0};
    const auto same = paired_t_test(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p == 1.0);

    const std::vector<double> d{1, 2, 3};
    const auto r = paired_t_test(d, z);
    CHECK(r.df == 2);
    CHECK(r.mean_difference == doctest::Approx(2.0));
    CHECK(std::abs(r.t - 3.4641) < 1e-3);
    CHECK(std::abs(r.p - 0.0742) < 1e-3);
    CHECK(std::abs(r.p - simpson_two_sided_p(r.t, 2)) < 1e-8);

    const std::vector<double> ones{1, 1, 1, 1}, zeros{0, 0, 0, 0};
    CHECK(code_of([&] { paired_t_test(ones, zeros); }) == ErrorCode::DegenerateVariance);
    CHECK(code_of([&] { paired_t_test(std::vector<double>{1}, std::vector<double>{0}); }) == ErrorCode::InsufficientData);
}

TEST_CASE("property: t-test p agrees with numerical integration") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 3 + rng() % 20;
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = g(rng) + 0.5;
            b[i] = g(rng);
        }
        const auto r = paired_t_test(a, b);
        CHECK(std::abs(r.p - simpson_two_sided_p(r.t, static_cast<double>(r.df))) < 1e-7);
        const auto swapped = paired_t_test(b, a);
        CHECK(swapped.t == doctest::Approx(-r.t));
        CHECK(swapped.p == doctest::Approx(r.p));
    }
}

TEST_CASE("linear regression baseline") {
    std::vector<double> close{1};
    for (int i = 0; i < 20; ++i) close.push_back(close.back() * 2);
    const auto exact = linreg_baseline(series(close), 1, 14, 15, 20);
    CHECK(exact.slope == doctest::Approx(2.0));
    CHECK(exact.r2 == doctest::Approx(1.0));
    CHECK(exact.nmse < 1e-12);

    std::vector<double> flat(20, 3.0);
    for (int i = 0; i < 10; ++i) flat[i] = 1.0 + i;
    CHECK(code_of([&] { linreg_baseline(series(flat), 1, 9, 12, 19); }) == ErrorCode::ZeroVariance);
    CHECK(code_of([&] { linreg_baseline(series(close), 0, 9, 12, 19); }) == ErrorCode::InsufficientData);
}

TEST_CASE("linear regression nmse is the error share of the test variance") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    std::vector<double> close{100};
    for (int i = 0; i < 299; ++i) close.push_back(close.back() * (1 + 0.01 * g(rng)));
    const auto r = linreg_baseline(series(close), 1, 199, 200, 299);
    double sse = 0, mean = 0, sst = 0;
    for (int d = 200; d <= 299; ++d) mean += close[d] / 100.0;
    for (int d = 200; d <= 299; ++d) {
        const double e = close[d] - (r.slope * close[d - 1] + r.intercept);
        sse += e * e;
        sst += (close[d] - mean) * (close[d] - mean);
    }
    CHECK(r.nmse == doctest::Approx(sse / sst).epsilon(1e-10));
    CHECK(r.r2 == doctest::Approx(1 - sse / sst).epsilon(1e-10));
}
