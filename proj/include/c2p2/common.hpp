#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace c2p2 {

enum class ErrorCode {
    MalformedRow,
    OhlcViolation,
    DuplicateDay,
    TooShort,
    BadEdges,
    WidthMismatch,
    EmptyIntersection,
    EmptyRange,
    DimMismatch,
    BadHyperparameters,
    BadK,
    SingleClass,
    InsufficientHistory,
    EmptyTrainRange,
    ZeroBaseline,
    DegenerateVariance,
    InsufficientData,
    ZeroVariance,
    ParseError,
    ValidationError,
    MissingArtifact,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Calendar day at daily resolution, stored as days since 1970-01-01.
struct Day {
    std::int32_t value = 0;

    auto operator<=>(const Day&) const = default;

    Day operator+(std::int32_t n) const { return Day{value + n}; }
    Day operator-(std::int32_t n) const { return Day{value - n}; }

    /// Parses YYYY-MM-DD. Throws Error(MalformedRow) on bad input.
    static Day parse(std::string_view text);
    std::string to_string() const;
};

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x);

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t root, Tags... tags) {
    std::uint64_t s = mix_seed(root);
    ((s = mix_seed(s ^ mix_seed(static_cast<std::uint64_t>(tags) + 0x632be59bd9b4e019ULL))), ...);
    return s;
}

/// 64-bit FNV-1a, hex encoded. Stable across platforms.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Shortest round-trip text form of a double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace c2p2
