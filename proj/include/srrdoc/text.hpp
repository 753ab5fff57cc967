#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace srrdoc {

// Minimal UTF-8 round trip. Invalid bytes decode as U+FFFD so metrics never
// abort on malformed input.
std::vector<uint32_t> utf8_decode(std::string_view s);
void utf8_append(std::string& out, uint32_t cp);
std::string utf8_encode(const std::vector<uint32_t>& cps);

// Collapses runs of ASCII whitespace to single spaces and trims the ends.
std::string collapse_whitespace(std::string_view s);

}  // namespace srrdoc
