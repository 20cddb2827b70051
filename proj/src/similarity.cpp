#include "c2p2/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "c2p2/common.hpp"

namespace c2p2 {

std::string_view to_string(SimilarityKind kind) {
    switch (kind) {
        case SimilarityKind::Euclidean: return "Euclidean";
        case SimilarityKind::Manhattan: return "Manhattan";
        case SimilarityKind::Cosine: return "Cosine";
        case SimilarityKind::PCC: return "PCC";
        case SimilarityKind::SCC: return "SCC";
    }
    return "?";
}

std::optional<SimilarityKind> parse_similarity_kind(std::string_view name) {
    for (auto k : kAllSimilarityKinds) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

namespace {

double pearson(std::span<const double> u, std::span<const double> v) {
    const double n = static_cast<double>(u.size());
    const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
    const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double suv = 0.0, suu = 0.0, svv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i] - mu, b = v[i] - mv;
        suv += a * b;
        suu += a * a;
        svv += b * b;
    }
    if (suu <= 0.0 || svv <= 0.0) return 0.0;
    return suv / std::sqrt(suu * svv);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double similarity(SimilarityKind kind, std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size() || u.empty()) {
        throw Error(ErrorCode::DimMismatch, "similarity needs two vectors of equal, nonzero length");
    }
    if ((kind == SimilarityKind::PCC || kind == SimilarityKind::SCC) && u.size() < 2) {
        throw Error(ErrorCode::DimMismatch, "correlation needs at least two entries");
    }
    switch (kind) {
        case SimilarityKind::Euclidean: {
            double s = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
            return std::sqrt(s);
        }
        case SimilarityKind::Manhattan: {
            double s = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(u[i] - v[i]);
            return s;
        }
        case SimilarityKind::Cosine: {
            double uv = 0.0, uu = 0.0, vv = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) {
                uv += u[i] * v[i];
                uu += u[i] * u[i];
                vv += v[i] * v[i];
            }
            if (uu <= 0.0 || vv <= 0.0) return 0.0;
            return uv / std::sqrt(uu * vv);
        }
        case SimilarityKind::PCC: return pearson(u, v);
        case SimilarityKind::SCC: {
            const auto ru = average_ranks(u);
            const auto rv = average_ranks(v);
            return pearson(ru, rv);
        }
    }
    return 0.0;
}

std::vector<double> similarity_block(std::span<const std::span<const double>> lagged, std::size_t target,
                                     std::span<const SimilarityKind> kinds) {
    if (target >= lagged.size()) throw Error(ErrorCode::DimMismatch, "target coin out of range");
    for (const auto& lf : lagged) {
        if (lf.size() != lagged[target].size()) throw Error(ErrorCode::DimMismatch, "lagged vectors differ in length");
    }
    std::vector<double> block;
    block.reserve(kinds.size() * (lagged.size() - 1));
    for (std::size_t i = 0; i < lagged.size(); ++i) {
        if (i == target) continue;
        for (auto k : kinds) block.push_back(similarity(k, lagged[i], lagged[target]));
    }
    return block;
}

}  // namespace c2p2
