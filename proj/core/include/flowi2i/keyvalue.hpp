#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace flowi2i {

// Flat "key = value" text; '#' starts a comment, blank lines are ignored.
using KeyValues = std::map<std::string, std::string, std::less<>>;

KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& kv);

int kv_int(const KeyValues& kv, std::string_view key);
double kv_double(const KeyValues& kv, std::string_view key);
std::uint64_t kv_u64(const KeyValues& kv, std::string_view key);
const std::string& kv_string(const KeyValues& kv, std::string_view key);

std::string format_double(double v);

}  // namespace flowi2i
