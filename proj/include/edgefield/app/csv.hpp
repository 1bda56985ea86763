#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace edgefield::app {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// RFC 4180 field: quoted when it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view text);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add_row(std::vector<std::string> row);
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  /// CRLF line endings as the RFC prescribes.
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parses RFC 4180 text (quoted fields, doubled quotes, CRLF or LF endings).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace edgefield::app
