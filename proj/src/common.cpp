#include "c2p2/common.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace c2p2 {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::OhlcViolation: return "OhlcViolation";
        case ErrorCode::DuplicateDay: return "DuplicateDay";
        case ErrorCode::TooShort: return "TooShort";
        case ErrorCode::BadEdges: return "BadEdges";
        case ErrorCode::WidthMismatch: return "WidthMismatch";
        case ErrorCode::EmptyIntersection: return "EmptyIntersection";
        case ErrorCode::EmptyRange: return "EmptyRange";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::BadHyperparameters: return "BadHyperparameters";
        case ErrorCode::BadK: return "BadK";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::InsufficientHistory: return "InsufficientHistory";
        case ErrorCode::EmptyTrainRange: return "EmptyTrainRange";
        case ErrorCode::ZeroBaseline: return "ZeroBaseline";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::ValidationError: return "ValidationError";
        case ErrorCode::MissingArtifact: return "MissingArtifact";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Day Day::parse(std::string_view text) {
    auto fail = [&] { throw Error(ErrorCode::MalformedRow, "bad date '" + std::string(text) + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') fail();
    int y = 0;
    unsigned m = 0, d = 0;
    auto parse_part = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        if (ec != std::errc{} || ptr != text.data() + pos + len) fail();
    };
    parse_part(0, 4, y);
    parse_part(5, 2, m);
    parse_part(8, 2, d);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) fail();
    return Day{static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count())};
}

std::string Day::to_string() const {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{value}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::MalformedRow, "bad number '" + std::string(text) + "'");
    }
    return out;
}

}  // namespace c2p2
