#include "timecap/config.hpp"

#include <fstream>
#include <sstream>

namespace timecap {

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorCode::config, "cannot open config file: " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path.string());
}

KeyValueConfig KeyValueConfig::parse_string(std::string_view text, const std::string& origin) {
  KeyValueConfig config;
  std::istringstream stream{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(stream, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::config,
           origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    if (key.empty()) {
      fail(ErrorCode::config, origin + ":" + std::to_string(lineno) + ": empty key");
    }
    config.entries_[key] = trim(stripped.substr(eq + 1));
  }
  return config;
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

void KeyValueConfig::set(const std::string& key, std::string value) {
  entries_[key] = std::move(value);
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    fail(ErrorCode::config, "missing config key: " + key);
  }
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const std::int64_t value = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return value;
  } catch (const std::exception&) {
    fail(ErrorCode::config, "config key " + key + ": not an integer: '" + v + "'");
  }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const double value = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return value;
  } catch (const std::exception&) {
    fail(ErrorCode::config, "config key " + key + ": not a number: '" + v + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = to_lower(get_string(key));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::config, "config key " + key + ": not a boolean: '" + v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<std::string> items;
  std::string value = get_string(key);
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::string item =
        trim(value.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) items.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

std::string KeyValueConfig::canonical(const std::string& prefix) const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    if (key.rfind(prefix, 0) == 0) {
      out += key;
      out += '=';
      out += value;
      out += '\n';
    }
  }
  return out;
}

}  // namespace timecap
