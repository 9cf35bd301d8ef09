#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "churnlens/error.hpp"
#include "churnlens/format.hpp"
#include "churnlens/snapshots.hpp"

namespace churnlens {

struct DestinationRate {
    double fraction = 0.0;
    std::size_t numerator = 0;
    std::size_t denominator = 0;

    friend bool operator==(const DestinationRate&, const DestinationRate&) = default;
};

/// Share of `unfollowers` that appear among the destination's followers.
inline DestinationRate destination_rate(const IdSet& unfollowers, const FollowerSnapshot& destination) {
    if (unfollowers.empty()) throw Error(ErrorCode::EmptyUnfollowers, "destination rate undefined for no unfollowers");
    DestinationRate r;
    r.numerator = intersection_size(unfollowers, destination.follower_ids);
    r.denominator = unfollowers.size();
    r.fraction = static_cast<double>(r.numerator) / static_cast<double>(r.denominator);
    return r;
}

/// Index of the last snapshot captured at or before `t`, or npos.
inline std::size_t snapshot_at_or_before(const SnapshotSeries& series, Timestamp t) {
    const auto& snaps = series.snapshots();
    const auto it = std::upper_bound(snaps.begin(), snaps.end(), t,
                                     [](Timestamp v, const FollowerSnapshot& s) { return v < s.captured_at; });
    if (it == snaps.begin()) return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>(std::distance(snaps.begin(), it)) - 1;
}

struct BoundarySelection {
    Timestamp boundary{};
    Timestamp selected{};  // capture time of the snapshot used for this boundary
};

struct ChurnSummary {
    std::vector<ChurnRecord> records;
    std::vector<BoundarySelection> selections;
};

/// One ChurnRecord per consecutive boundary pair. Each boundary is served by
/// the nearest snapshot captured at or before it; the choice is reported in
/// `selections`.
inline ChurnSummary churn_summary(const SnapshotSeries& series, const std::vector<Timestamp>& boundaries) {
    if (boundaries.size() < 2) throw Error(ErrorCode::InsufficientSnapshots, "need at least two boundaries");
    if (series.size() < 2) throw Error(ErrorCode::InsufficientSnapshots, "need at least two snapshots");
    const auto first = series.snapshots().front().captured_at;
    const auto last = series.snapshots().back().captured_at;

    ChurnSummary out;
    std::vector<std::size_t> picks;
    for (const Timestamp b : boundaries) {
        if (b < first || b > last) {
            throw Error(ErrorCode::BoundaryOutOfRange, format_timestamp(b) + " outside [" + format_timestamp(first) +
                                                           ", " + format_timestamp(last) + "]");
        }
        const std::size_t idx = snapshot_at_or_before(series, b);
        picks.push_back(idx);
        out.selections.push_back({b, series.snapshots()[idx].captured_at});
    }
    for (std::size_t i = 0; i + 1 < picks.size(); ++i) {
        if (picks[i] >= picks[i + 1]) {
            throw Error(ErrorCode::InsufficientSnapshots, "boundaries " + format_timestamp(boundaries[i]) + " and " +
                                                              format_timestamp(boundaries[i + 1]) +
                                                              " resolve to the same snapshot");
        }
        out.records.push_back(diff(series.snapshots()[picks[i]], series.snapshots()[picks[i + 1]]));
    }
    return out;
}

enum class DestinationTime { WindowStart, WindowEnd };

struct TransitionRow {
    std::string destination_account;
    DestinationRate rate;
    Timestamp destination_snapshot{};
};

struct TransitionReport {
    std::string source_account;
    Timestamp window_start{};
    Timestamp window_end{};
    std::vector<TransitionRow> rows;  // sorted by destination handle
};

/// Where the source account's unfollowers in [start, end] went. Destination
/// membership is read from each destination's snapshot at or before the
/// window end (or start, if requested).
inline TransitionReport transitions(const SnapshotSeries& source, Timestamp start, Timestamp end,
                                    const std::vector<SnapshotSeries>& destinations,
                                    DestinationTime at = DestinationTime::WindowEnd) {
    const auto summary = churn_summary(source, {start, end});
    const ChurnRecord& churn = summary.records.front();

    TransitionReport report;
    report.source_account = source.account();
    report.window_start = churn.window_start;
    report.window_end = churn.window_end;
    const Timestamp probe = at == DestinationTime::WindowEnd ? end : start;
    for (const auto& dest : destinations) {
        const std::size_t idx = snapshot_at_or_before(dest, probe);
        if (idx == static_cast<std::size_t>(-1)) {
            throw Error(ErrorCode::BoundaryOutOfRange,
                        "no snapshot of '" + dest.account() + "' at or before " + format_timestamp(probe));
        }
        const auto& snap = dest.snapshots()[idx];
        report.rows.push_back({dest.account(), destination_rate(churn.unfollowers, snap), snap.captured_at});
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const auto& a, const auto& b) { return a.destination_account < b.destination_account; });
    return report;
}

inline std::string transitions_csv(const TransitionReport& report) {
    std::string out = "destination,fraction,numerator,denominator\n";
    for (const auto& row : report.rows) {
        out += row.destination_account + "," + format_real(row.rate.fraction) + "," +
               std::to_string(row.rate.numerator) + "," + std::to_string(row.rate.denominator) + "\n";
    }
    return out;
}

/// Destinations as columns, one row per labelled window (e.g. Before/After).
inline std::string transitions_markdown(const std::vector<std::pair<std::string, TransitionReport>>& windows) {
    if (windows.empty()) return {};
    const auto& head = windows.front().second;
    std::string out = "Mobility of " + head.source_account + "'s unfollowers\n\n| Destination |";
    std::string rule = "|---|";
    for (const auto& row : head.rows) {
        out += " " + row.destination_account + " |";
        rule += "---|";
    }
    out += "\n" + rule + "\n";
    for (const auto& [label, report] : windows) {
        out += "| " + label + " |";
        for (const auto& row : report.rows) out += " " + format_percent(row.rate.fraction) + " |";
        out += "\n";
    }
    return out;
}

inline std::string churn_csv(const std::vector<ChurnRecord>& records) {
    std::string out = "account,window_start,window_end,new_followers,unfollowers,retained\n";
    for (const auto& r : records) {
        out += r.account + "," + format_timestamp(r.window_start) + "," + format_timestamp(r.window_end) + "," +
               std::to_string(r.new_followers.size()) + "," + std::to_string(r.unfollowers.size()) + "," +
               std::to_string(r.retained.size()) + "\n";
    }
    return out;
}

/// Windows as columns, New Followers / Unfollowers as rows.
inline std::string churn_markdown(const std::vector<ChurnRecord>& records, const std::vector<std::string>& labels) {
    if (records.empty()) return {};
    std::string out = "Mobility in " + records.front().account + "'s followers\n\n|  |";
    std::string rule = "|---|";
    for (std::size_t i = 0; i < records.size(); ++i) {
        out += " " + (i < labels.size() ? labels[i] : format_timestamp(records[i].window_start)) + " |";
        rule += "---|";
    }
    out += "\n" + rule + "\n| New Followers |";
    for (const auto& r : records) out += " " + std::to_string(r.new_followers.size()) + " |";
    out += "\n| Unfollowers |";
    for (const auto& r : records) out += " " + std::to_string(r.unfollowers.size()) + " |";
    out += "\n";
    return out;
}

}  // namespace churnlens
