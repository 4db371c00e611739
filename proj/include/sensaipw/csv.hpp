#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sensaipw {

/// RFC 4180 table: one header row, every record the same width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Position of a header field, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

/// Parses quoted fields (with doubled quotes and embedded line breaks), LF or
/// CRLF line ends and a leading UTF-8 byte-order mark. Throws DataError on
/// ragged records, unterminated quotes or an empty input.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

std::string format_csv(const CsvTable& table);

/// Shortest text that parses back to the same double; NaN prints as "NA".
std::string format_number(double value);

/// Parses a full field as a double; "", "NA", "NaN" and "." are missing
/// (nullopt). Throws DataError for any other non-numeric text.
std::optional<double> parse_number(std::string_view field);

/// Writes to a temporary file in the destination directory, then renames it
/// over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace sensaipw
