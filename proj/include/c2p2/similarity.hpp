#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace c2p2 {

/// Euclidean and Manhattan are raw distances (smaller = more alike); the
/// other three are similarities in [-1, 1].
enum class SimilarityKind { Euclidean, Manhattan, Cosine, PCC, SCC };

inline constexpr std::array<SimilarityKind, 5> kAllSimilarityKinds{
    SimilarityKind::Euclidean, SimilarityKind::Manhattan, SimilarityKind::Cosine, SimilarityKind::PCC,
    SimilarityKind::SCC};

std::string_view to_string(SimilarityKind kind);
std::optional<SimilarityKind> parse_similarity_kind(std::string_view name);

/// Degenerate inputs (zero norm for Cosine, zero variance for PCC/SCC) give 0.
double similarity(SimilarityKind kind, std::span<const double> u, std::span<const double> v);

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// For coin `target`, K values per other coin in panel order, kinds in the
/// order given. Length K * (C - 1).
std::vector<double> similarity_block(std::span<const std::span<const double>> lagged, std::size_t target,
                                     std::span<const SimilarityKind> kinds);

}  // namespace c2p2
