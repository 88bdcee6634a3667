#include "flowi2i/keyvalue.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (kv.contains(key)) throw ConfigError("duplicate key '" + std::string(key) + "'");
    kv.emplace(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

const std::string& kv_string(const KeyValues& kv, std::string_view key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing key '" + std::string(key) + "'");
  return it->second;
}

int kv_int(const KeyValues& kv, std::string_view key) {
  const auto& s = kv_string(kv, key);
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError("key '" + std::string(key) + "': expected integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t kv_u64(const KeyValues& kv, std::string_view key) {
  const auto& s = kv_string(kv, key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError("key '" + std::string(key) + "': expected unsigned integer, got '" + s + "'");
  }
  return v;
}

double kv_double(const KeyValues& kv, std::string_view key) {
  const auto& s = kv_string(kv, key);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError("key '" + std::string(key) + "': expected number, got '" + s + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace flowi2i
