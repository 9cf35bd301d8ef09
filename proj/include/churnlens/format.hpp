#pragma once

#include <charconv>
#include <cstdio>
#include <string>

namespace churnlens {

/// Shortest decimal text that parses back to exactly `value`.
inline std::string format_real(double value) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

/// Fixed-point percentage, e.g. 0.12345 -> "12.35%".
inline std::string format_percent(double fraction, int decimals = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f%%", decimals, fraction * 100.0);
    return buf;
}

inline std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

}  // namespace churnlens
