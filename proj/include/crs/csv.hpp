#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace crs {

/// Header row plus rectangular text cells. Blank cells are kept as "".
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC 4180 subset: comma separator, double-quote quoting, CRLF or LF rows.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace crs
