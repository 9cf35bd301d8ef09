#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "churnlens/error.hpp"
#include "churnlens/snapshots.hpp"
#include "churnlens/timestamp.hpp"

namespace churnlens {

/// `key = value` lines; `#` starts a comment line. Relative paths resolve
/// against the directory of the file they were read from.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text, std::filesystem::path base_dir = {}) {
        KeyValueConfig cfg;
        cfg.base_dir_ = std::move(base_dir);
        std::size_t start = 0;
        std::size_t line_no = 0;
        while (start < text.size()) {
            std::size_t nl = text.find('\n', start);
            if (nl == std::string_view::npos) nl = text.size();
            const std::string_view line = detail::trim(text.substr(start, nl - start));
            start = nl + 1;
            ++line_no;
            if (line.empty() || line.front() == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw Error(ErrorCode::MalformedConfig, "line " + std::to_string(line_no) + ": expected key = value",
                            line_no);
            }
            const std::string key(detail::trim(line.substr(0, eq)));
            if (key.empty()) throw Error(ErrorCode::MalformedConfig, "line " + std::to_string(line_no) + ": empty key", line_no);
            cfg.values_[key] = std::string(detail::trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::filesystem::path& path) {
        return parse(detail::read_file_bytes(path), path.parent_path());
    }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    std::optional<std::string> get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string require(const std::string& key) const {
        auto v = get(key);
        if (!v) throw Error(ErrorCode::MalformedConfig, "missing key '" + key + "'");
        return *v;
    }

    std::filesystem::path path(const std::string& key) const {
        std::filesystem::path p = require(key);
        return p.is_relative() && !base_dir_.empty() ? base_dir_ / p : p;
    }

    Timestamp timestamp(const std::string& key) const {
        const auto text = require(key);
        const auto ts = parse_timestamp(text);
        if (!ts) throw Error(ErrorCode::MalformedConfig, "'" + key + "' is not a UTC timestamp: " + text);
        return *ts;
    }

    double real(const std::string& key, double fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        double out = 0.0;
        const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size()) {
            throw Error(ErrorCode::MalformedConfig, "'" + key + "' is not a number: " + *v);
        }
        return out;
    }

    std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        std::uint64_t out = 0;
        const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size()) {
            throw Error(ErrorCode::MalformedConfig, "'" + key + "' is not an unsigned integer: " + *v);
        }
        return out;
    }

private:
    std::filesystem::path base_dir_;
    std::map<std::string, std::string> values_;
};

}  // namespace churnlens
