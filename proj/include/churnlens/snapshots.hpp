#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <zlib.h>

#include "churnlens/error.hpp"
#include "churnlens/timestamp.hpp"

namespace churnlens {

using UserId = std::uint64_t;

/// Sorted, duplicate-free set of follower IDs stored contiguously. Snapshots
/// hold millions of IDs, so a flat vector beats node-based sets for both
/// memory and the merge-style set algebra below.
class IdSet {
public:
    IdSet() = default;
    IdSet(std::initializer_list<UserId> ids) : IdSet(std::vector<UserId>(ids)) {}

    /// Sorts and deduplicates.
    explicit IdSet(std::vector<UserId> ids) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        ids_ = std::move(ids);
    }

    /// Adopts a vector that is already strictly increasing.
    static IdSet from_sorted_unique(std::vector<UserId> ids) {
        IdSet s;
        s.ids_ = std::move(ids);
        return s;
    }

    bool contains(UserId id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    auto begin() const noexcept { return ids_.begin(); }
    auto end() const noexcept { return ids_.end(); }
    const std::vector<UserId>& ids() const noexcept { return ids_; }

    friend bool operator==(const IdSet&, const IdSet&) = default;

private:
    std::vector<UserId> ids_;
};

inline IdSet set_difference(const IdSet& a, const IdSet& b) {
    std::vector<UserId> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return IdSet::from_sorted_unique(std::move(out));
}

inline IdSet set_intersection(const IdSet& a, const IdSet& b) {
    std::vector<UserId> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return IdSet::from_sorted_unique(std::move(out));
}

inline std::size_t intersection_size(const IdSet& a, const IdSet& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

struct FollowerSnapshot {
    std::string account;
    Timestamp captured_at{};
    IdSet follower_ids;

    friend bool operator==(const FollowerSnapshot&, const FollowerSnapshot&) = default;
};

struct ParsedSnapshot {
    FollowerSnapshot snapshot;
    std::size_t duplicate_warnings = 0;
};

/// New followers, unfollowers and retained followers of one account between
/// two snapshots.
struct ChurnRecord {
    std::string account;
    Timestamp window_start{};
    Timestamp window_end{};
    IdSet new_followers;
    IdSet unfollowers;
    IdSet retained;

    friend bool operator==(const ChurnRecord&, const ChurnRecord&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline bool has_gz_suffix(const std::filesystem::path& path) { return path.extension() == ".gz"; }

inline std::string read_file_bytes(const std::filesystem::path& path) {
    if (has_gz_suffix(path)) {
        gzFile f = gzopen(path.string().c_str(), "rb");
        if (f == nullptr) throw Error(ErrorCode::Io, "cannot open " + path.string());
        std::string out;
        char buf[1 << 16];
        int n = 0;
        while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
        const bool failed = n < 0;
        gzclose(f);
        if (failed) throw Error(ErrorCode::Io, "gzip stream error in " + path.string());
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
    if (has_gz_suffix(path)) {
        gzFile f = gzopen(path.string().c_str(), "wb");
        if (f == nullptr) throw Error(ErrorCode::Io, "cannot write " + path.string());
        const int n = bytes.empty() ? 0 : gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        const int rc = gzclose(f);
        if (n != static_cast<int>(bytes.size()) || rc != Z_OK) {
            throw Error(ErrorCode::Io, "gzip write failed for " + path.string());
        }
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace detail

/// Parses the line-oriented snapshot format:
///
///     account=<handle> ts=<YYYY-MM-DDTHH:MM:SSZ>
///     17
///     # comment
///     42
///
/// Duplicate IDs are folded and counted; every other irregularity is an error.
inline ParsedSnapshot parse_snapshot_text(std::string_view text) {
    if (detail::trim(text).empty()) throw Error(ErrorCode::EmptyFile, "snapshot has no header", 1);

    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }

    ParsedSnapshot result;
    bool have_account = false;
    bool have_ts = false;
    {
        std::istringstream header{std::string(detail::trim(lines.front()))};
        std::string field;
        while (header >> field) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) throw Error(ErrorCode::MalformedHeader, "expected key=value, got '" + field + "'", 1);
            const std::string key = field.substr(0, eq);
            const std::string value = field.substr(eq + 1);
            if (key == "account" && !have_account && !value.empty()) {
                result.snapshot.account = value;
                have_account = true;
            } else if (key == "ts" && !have_ts) {
                const auto ts = parse_timestamp(value);
                if (!ts) throw Error(ErrorCode::MalformedHeader, "bad timestamp '" + value + "'", 1);
                result.snapshot.captured_at = *ts;
                have_ts = true;
            } else {
                throw Error(ErrorCode::MalformedHeader, "unexpected header field '" + field + "'", 1);
            }
        }
        if (!have_account || !have_ts) throw Error(ErrorCode::MalformedHeader, "header needs account= and ts=", 1);
    }

    std::vector<UserId> ids;
    ids.reserve(lines.size());
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string_view line = detail::trim(lines[i]);
        if (!line.empty() && line.front() == '#') continue;
        UserId id = 0;
        const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), id);
        if (line.empty() || ec != std::errc{} || ptr != line.data() + line.size()) {
            throw Error(ErrorCode::MalformedId, "line " + std::to_string(i + 1) + ": '" + std::string(line) + "'",
                        i + 1);
        }
        ids.push_back(id);
    }
    const std::size_t raw = ids.size();
    result.snapshot.follower_ids = IdSet(std::move(ids));
    result.duplicate_warnings = raw - result.snapshot.follower_ids.size();
    return result;
}

/// Reads a snapshot file; a `.gz` suffix selects gzip decoding.
inline ParsedSnapshot parse_snapshot(const std::filesystem::path& path) {
    return parse_snapshot_text(detail::read_file_bytes(path));
}

inline std::string snapshot_to_text(const FollowerSnapshot& snapshot) {
    std::string out = "account=" + snapshot.account + " ts=" + format_timestamp(snapshot.captured_at) + "\n";
    out.reserve(out.size() + snapshot.follower_ids.size() * 12);
    char buf[24];
    for (const UserId id : snapshot.follower_ids) {
        const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, id);
        out.append(buf, end);
        out.push_back('\n');
    }
    return out;
}

inline void write_snapshot(const FollowerSnapshot& snapshot, const std::filesystem::path& path) {
    detail::write_file_bytes(path, snapshot_to_text(snapshot));
}

inline ChurnRecord diff(const FollowerSnapshot& before, const FollowerSnapshot& after) {
    if (before.account != after.account) {
        throw Error(ErrorCode::AccountMismatch, "'" + before.account + "' vs '" + after.account + "'");
    }
    if (!(before.captured_at < after.captured_at)) {
        throw Error(ErrorCode::NonIncreasingTimestamps,
                    format_timestamp(before.captured_at) + " is not before " + format_timestamp(after.captured_at));
    }
    ChurnRecord r;
    r.account = before.account;
    r.window_start = before.captured_at;
    r.window_end = after.captured_at;
    r.new_followers = set_difference(after.follower_ids, before.follower_ids);
    r.unfollowers = set_difference(before.follower_ids, after.follower_ids);
    r.retained = set_intersection(before.follower_ids, after.follower_ids);
    return r;
}

/// Time-ordered snapshots of a single account.
class SnapshotSeries {
public:
    SnapshotSeries() = default;

    /// Orders the snapshots by capture time; rejects mixed accounts and
    /// repeated capture times.
    explicit SnapshotSeries(std::vector<FollowerSnapshot> snapshots) : snapshots_(std::move(snapshots)) {
        std::sort(snapshots_.begin(), snapshots_.end(),
                  [](const auto& a, const auto& b) { return a.captured_at < b.captured_at; });
        for (std::size_t i = 0; i < snapshots_.size(); ++i) {
            if (snapshots_[i].account != snapshots_.front().account) {
                throw Error(ErrorCode::AccountMismatch,
                            "series mixes '" + snapshots_.front().account + "' and '" + snapshots_[i].account + "'");
            }
            if (i > 0 && snapshots_[i].captured_at == snapshots_[i - 1].captured_at) {
                throw Error(ErrorCode::NonIncreasingTimestamps,
                            "two snapshots at " + format_timestamp(snapshots_[i].captured_at));
            }
        }
    }

    const std::string& account() const {
        static const std::string empty;
        return snapshots_.empty() ? empty : snapshots_.front().account;
    }
    const std::vector<FollowerSnapshot>& snapshots() const noexcept { return snapshots_; }
    std::size_t size() const noexcept { return snapshots_.size(); }
    bool empty() const noexcept { return snapshots_.empty(); }

private:
    std::vector<FollowerSnapshot> snapshots_;
};

/// Loads every snapshot file under `dir` (non-recursive) that belongs to
/// `account`. Files of other accounts are skipped; unparsable files are errors.
inline SnapshotSeries load_series(const std::filesystem::path& dir, const std::string& account) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<FollowerSnapshot> snaps;
    for (const auto& f : files) {
        auto parsed = parse_snapshot(f);
        if (parsed.snapshot.account == account) snaps.push_back(std::move(parsed.snapshot));
    }
    return SnapshotSeries(std::move(snaps));
}

}  // namespace churnlens
