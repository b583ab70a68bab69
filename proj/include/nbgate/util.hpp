#ifndef NBGATE_UTIL_HPP
#define NBGATE_UTIL_HPP

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nbgate {

std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

bool is_hex(std::string_view s);
std::string hex_encode(const unsigned char* data, size_t n);
std::string hex_encode(std::string_view data);
std::string base64_encode(std::string_view data);

// Replaces every non-overlapping occurrence of `from` in `text`, left to right.
std::string replace_all(std::string_view text, std::string_view from, std::string_view to);
size_t count_occurrences(std::string_view text, std::string_view needle);

// RFC 3339 / ISO-8601 UTC timestamp, e.g. 2026-08-09T12:00:00.123Z
std::string iso8601_now();

// Strict integer parse over the whole string (optional sign, base 10).
std::optional<long long> parse_int(std::string_view s);

double steady_seconds();

std::string percent_decode(std::string_view s, bool plus_as_space);

// key=value&key=value form decoding; later keys win.
std::optional<std::string> form_value(std::string_view body, std::string_view key);

std::string html_escape(std::string_view s);

}  // namespace nbgate

#endif
