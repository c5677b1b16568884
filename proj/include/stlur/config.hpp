#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace stlur {

/// Flat `key = value` text with `[section]` headers; keys are stored as
/// `section.key`. `#` and `;` start comments.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text, const std::string& source = "<config>");
  static RunConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// `key=value` lines in key order.
  std::string canonical() const;
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stlur
