#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace c2p2::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line per row

    std::optional<std::size_t> column(std::string_view name) const;
};

/// Comma-separated, header row first. Double-quoted fields may contain commas
/// and doubled quotes; embedded newlines are not supported. Blank lines are skipped.
Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

std::vector<std::string> split_line(std::string_view line);

std::string escape(std::string_view field);
std::string join(const std::vector<std::string>& fields);

void write_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text(const std::filesystem::path& path);

}  // namespace c2p2::csv
