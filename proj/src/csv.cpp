#include "stlur/csv.hpp"

#include "stlur/common.hpp"

#include <charconv>
#include <cmath>

namespace stlur {

std::vector<std::string> split_csv_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

CsvReader::CsvReader(const std::string& path) : path_(path), in_(path) {
  if (!in_) throw Error("cannot open '" + path + "'");
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    header_ = split_csv_line(line);
    return;
  }
  throw Error("empty file '" + path + "'");
}

std::size_t CsvReader::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw Error("'" + path_ + "' has no column '" + std::string(name) + "'");
}

bool CsvReader::has_column(std::string_view name) const {
  for (const auto& h : header_) {
    if (h == name) return true;
  }
  return false;
}

bool CsvReader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    fields = split_csv_line(line);
    if (fields.size() != header_.size()) {
      throw Error(path_ + ":" + std::to_string(line_) + ": expected " + std::to_string(header_.size()) +
                  " fields, got " + std::to_string(fields.size()));
    }
    return true;
  }
  return false;
}

double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw Error("bad number '" + std::string(text) + "' for " + std::string(what));
  }
  return value;
}

long long parse_int(std::string_view text, std::string_view what) {
  long long value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error("bad integer '" + std::string(text) + "' for " + std::string(what));
  }
  return value;
}

}  // namespace stlur
