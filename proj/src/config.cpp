#include "stlur/config.hpp"

#include "stlur/common.hpp"
#include "stlur/csv.hpp"

#include <fstream>
#include <sstream>

namespace stlur {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(source + ":" + std::to_string(number) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(source + ":" + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(source + ":" + std::to_string(number) + ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::optional<std::string> RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return parse_double(*v, key);
  } catch (const Error&) {
    throw Error("config key '" + key + "' is not a number: " + *v);
  }
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return parse_int(*v, key);
  } catch (const Error&) {
    throw Error("config key '" + key + "' is not an integer: " + *v);
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw Error("config key '" + key + "' is not a boolean: " + *v);
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

}  // namespace stlur
