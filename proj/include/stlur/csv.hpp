#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace stlur {

/// Minimal reader for the unquoted comma-separated files this project
/// exchanges. Blank lines are skipped; `\r` line endings are tolerated.
class CsvReader {
 public:
  explicit CsvReader(const std::string& path);

  const std::vector<std::string>& header() const { return header_; }
  /// Column index for `name`; throws if absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;

  /// Reads the next record into `fields`. Returns false at end of file.
  bool next(std::vector<std::string>& fields);
  std::size_t line_number() const { return line_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

std::vector<std::string> split_csv_line(std::string_view line);

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

}  // namespace stlur
