#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace scalemix {

// Shortest round-trip decimal form; "nan", "inf" and "-inf" for the rest.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull);
std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t h = 14695981039346656037ull);
std::string hex64(std::uint64_t v);

}  // namespace scalemix
