#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "churnlens/error.hpp"
#include "churnlens/format.hpp"
#include "churnlens/manifest.hpp"
#include "churnlens/pipeline.hpp"
#include "churnlens/stats.hpp"

namespace churnlens {

enum class ReportFormat { Csv, Markdown, Json };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "markdown" || s == "md") return ReportFormat::Markdown;
    if (s == "json") return ReportFormat::Json;
    throw Error(ErrorCode::MalformedConfig, "unknown format '" + std::string(s) + "'");
}

inline constexpr std::string_view kReportCsvHeader =
    "cohort,window,cohort_size,classified,female,female_fraction,drop_no_image,drop_no_face,"
    "drop_below_threshold,drop_low_confidence,z,p_two_sided,pooled_p";

/// One CSV row; test columns repeat on both windows of a cohort and are
/// absent (rendered `n/a`) for a degenerate pool.
struct ReportCsvRow {
    std::string cohort;
    std::string window;
    std::size_t cohort_size = 0, classified = 0, female = 0;
    double female_fraction = 0.0;
    std::size_t no_image = 0, no_face = 0, below_threshold = 0, low_confidence = 0;
    std::optional<double> z, p_two_sided, pooled_p;

    friend bool operator==(const ReportCsvRow&, const ReportCsvRow&) = default;
};

inline std::vector<ReportCsvRow> report_rows(const CompositionReport& report) {
    std::vector<ReportCsvRow> rows;
    for (const auto& c : report.cohorts) {
        for (const auto& [window, w] : {std::pair{"before", &c.before}, std::pair{"after", &c.after}}) {
            ReportCsvRow r;
            r.cohort = c.cohort;
            r.window = window;
            r.cohort_size = w->cohort_size;
            r.classified = w->classified;
            r.female = w->female;
            r.female_fraction = w->female_fraction();
            r.no_image = w->dropped(Fate::NoImage);
            r.no_face = w->dropped(Fate::NoFace);
            r.below_threshold = w->dropped(Fate::BelowThreshold);
            r.low_confidence = w->dropped(Fate::LowConfidence);
            if (c.test) {
                r.z = c.test->z;
                r.p_two_sided = c.test->p_two_sided;
                r.pooled_p = c.test->pooled_p;
            }
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

inline std::string render_csv(const CompositionReport& report) {
    std::string out(kReportCsvHeader);
    out += "\n";
    const auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("n/a"); };
    for (const auto& r : report_rows(report)) {
        out += r.cohort + "," + r.window + "," + std::to_string(r.cohort_size) + "," + std::to_string(r.classified) +
               "," + std::to_string(r.female) + "," + format_real(r.female_fraction) + "," +
               std::to_string(r.no_image) + "," + std::to_string(r.no_face) + "," + std::to_string(r.below_threshold) +
               "," + std::to_string(r.low_confidence) + "," + opt(r.z) + "," + opt(r.p_two_sided) + "," +
               opt(r.pooled_p) + "\n";
    }
    return out;
}

inline std::vector<ReportCsvRow> parse_report_csv(std::string_view text) {
    std::vector<ReportCsvRow> rows;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = detail::trim(text.substr(start, nl - start));
        start = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != kReportCsvHeader) throw Error(ErrorCode::MalformedReport, "unexpected header", 1);
            continue;
        }
        const auto f = detail::split_csv_line(line);
        const auto bad = [&] { return Error(ErrorCode::MalformedReport, "line " + std::to_string(line_no), line_no); };
        if (f.size() != 13) throw bad();
        ReportCsvRow r;
        r.cohort = std::string(f[0]);
        r.window = std::string(f[1]);
        const auto real = [&](std::string_view s, double& out) {
            const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            if (ec != std::errc{} || p != s.data() + s.size()) throw bad();
        };
        const auto opt_real = [&](std::string_view s) -> std::optional<double> {
            if (s == "n/a") return std::nullopt;
            double v = 0.0;
            real(s, v);
            return v;
        };
        if (!detail::parse_unsigned(f[2], r.cohort_size) || !detail::parse_unsigned(f[3], r.classified) ||
            !detail::parse_unsigned(f[4], r.female) || !detail::parse_unsigned(f[6], r.no_image) ||
            !detail::parse_unsigned(f[7], r.no_face) || !detail::parse_unsigned(f[8], r.below_threshold) ||
            !detail::parse_unsigned(f[9], r.low_confidence)) {
            throw bad();
        }
        real(f[5], r.female_fraction);
        r.z = opt_real(f[10]);
        r.p_two_sided = opt_real(f[11]);
        r.pooled_p = opt_real(f[12]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::string render_markdown(const CompositionReport& report) {
    const auto label = [](const std::string& cohort) {
        return cohort == "new_followers" ? std::string("New followers") : std::string("Unfollowers");
    };
    std::string out = "## Gender composition of " + report.account + "'s follower churn\n\n";
    out += "Before: " + format_timestamp(report.before_start) + " to " + format_timestamp(report.event_time) +
           "; after: " + format_timestamp(report.event_time) + " to " + format_timestamp(report.after_end) + ".\n";
    out += "Snapshots used:";
    for (const auto& s : report.selections) {
        out += " " + format_timestamp(s.boundary) + " -> " + format_timestamp(s.selected) + ";";
    }
    out += "\nFemale shares use classified members as denominators.\n\n";

    out += "| Cohort | Before | After |\n|---|---|---|\n";
    for (const auto& c : report.cohorts) {
        out += "| " + label(c.cohort) + " (classified) | " + std::to_string(c.before.classified) + " | " +
               std::to_string(c.after.classified) + " |\n";
        out += "| " + label(c.cohort) + " (female) | " + format_percent(c.before.female_fraction()) + " | " +
               format_percent(c.after.female_fraction()) + " |\n";
    }

    out += "\n| Null hypothesis |";
    std::string rule = "|---|";
    for (const auto& c : report.cohorts) {
        out += " " + label(c.cohort) + " z | " + label(c.cohort) + " p |";
        rule += "---|---|";
    }
    out += "\n" + rule + "\n| p_before = p_after |";
    for (const auto& c : report.cohorts) {
        if (c.test) {
            out += " " + format_fixed(c.test->z, 4) + " | " + format_fixed(c.test->p_two_sided, 4) + " |";
        } else {
            out += " n/a | n/a |";
        }
    }

    out += "\n\n| Cohort | Window | Members | Classified | No image | No face | Below size threshold | Low confidence |\n";
    out += "|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : report.cohorts) {
        for (const auto& [window, w] : {std::pair{"before", &c.before}, std::pair{"after", &c.after}}) {
            out += "| " + label(c.cohort) + " | " + window + " | " + std::to_string(w->cohort_size) + " | " +
                   std::to_string(w->classified) + " | " + std::to_string(w->dropped(Fate::NoImage)) + " | " +
                   std::to_string(w->dropped(Fate::NoFace)) + " | " + std::to_string(w->dropped(Fate::BelowThreshold)) +
                   " | " + std::to_string(w->dropped(Fate::LowConfidence)) + " |\n";
        }
    }
    return out;
}

inline nlohmann::json report_json(const CompositionReport& report) {
    nlohmann::json j;
    j["account"] = report.account;
    j["before_start"] = format_timestamp(report.before_start);
    j["event_time"] = format_timestamp(report.event_time);
    j["after_end"] = format_timestamp(report.after_end);
    j["probability_floor"] = report.probability_floor;
    j["seed"] = report.seed;
    j["denominators"] = "classified";
    j["z_orientation"] = "after_minus_before";
    for (const auto& s : report.selections) {
        j["snapshot_selection"].push_back(
            {{"boundary", format_timestamp(s.boundary)}, {"selected", format_timestamp(s.selected)}});
    }
    for (const auto& r : report_rows(report)) {
        nlohmann::json row = {{"cohort", r.cohort},
                              {"window", r.window},
                              {"cohort_size", r.cohort_size},
                              {"classified", r.classified},
                              {"female", r.female},
                              {"female_fraction", r.female_fraction},
                              {"drops",
                               {{"no_image", r.no_image},
                                {"no_face", r.no_face},
                                {"below_threshold", r.below_threshold},
                                {"low_confidence", r.low_confidence}}}};
        row["z"] = r.z ? nlohmann::json(*r.z) : nlohmann::json("n/a");
        row["p_two_sided"] = r.p_two_sided ? nlohmann::json(*r.p_two_sided) : nlohmann::json("n/a");
        row["pooled_p"] = r.pooled_p ? nlohmann::json(*r.pooled_p) : nlohmann::json("n/a");
        j["rows"].push_back(row);
    }
    return j;
}

/// Deterministic: equal reports render to identical bytes.
inline std::string render_report(const CompositionReport& report, ReportFormat format) {
    switch (format) {
    case ReportFormat::Csv: return render_csv(report);
    case ReportFormat::Markdown: return render_markdown(report);
    case ReportFormat::Json: return report_json(report).dump(2) + "\n";
    }
    return {};
}

/// `user_id,cohort,window,fate,label,probability`, one row per cohort member.
inline std::string provenance_csv(const CompositionReport& report) {
    std::string out = "user_id,cohort,window,fate,label,probability\n";
    for (const auto& m : report.provenance) {
        out += std::to_string(m.user_id) + "," + m.cohort + "," + m.window + "," + std::string(to_string(m.fate)) +
               "," + (m.fate == Fate::Classified || m.fate == Fate::LowConfidence ? std::string(to_string(m.label)) : "") +
               "," + (m.fate == Fate::Classified || m.fate == Fate::LowConfidence ? format_real(m.probability) : "") +
               "\n";
    }
    return out;
}

/// Score-test record: `z,p_two_sided,pooled_p,n1,x1,n2,x2`.
inline std::string score_test_csv(const ScoreTestResult& r) {
    return "z,p_two_sided,pooled_p,n1,x1,n2,x2\n" + format_real(r.z) + "," + format_real(r.p_two_sided) + "," +
           format_real(r.pooled_p) + "," + std::to_string(r.first.trials) + "," + std::to_string(r.first.successes) +
           "," + std::to_string(r.second.trials) + "," + std::to_string(r.second.successes) + "\n";
}

inline nlohmann::json score_test_json(const ScoreTestResult& r) {
    return {{"z", r.z},
            {"p_two_sided", r.p_two_sided},
            {"pooled_p", r.pooled_p},
            {"n1", r.first.trials},
            {"x1", r.first.successes},
            {"n2", r.second.trials},
            {"x2", r.second.successes}};
}

}  // namespace churnlens
