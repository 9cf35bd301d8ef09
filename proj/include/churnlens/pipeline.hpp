#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "churnlens/churn.hpp"
#include "churnlens/cnn/network.hpp"
#include "churnlens/cnn/serialize.hpp"
#include "churnlens/codec.hpp"
#include "churnlens/config.hpp"
#include "churnlens/error.hpp"
#include "churnlens/imageprep.hpp"
#include "churnlens/manifest.hpp"
#include "churnlens/snapshots.hpp"
#include "churnlens/stats.hpp"

namespace churnlens {

/// Which byte size the image-size filter looks at: the encoded source file
/// (manifest byte_size) or the raw RGB bytes of the selected face crop.
enum class FilterOn { Source, Crop };

/// What happened to one cohort member on the way to a gender estimate.
enum class Fate : std::uint8_t { Classified, NoImage, NoFace, BelowThreshold, LowConfidence };

inline constexpr std::array<Fate, 4> kDropFates = {Fate::NoImage, Fate::NoFace, Fate::BelowThreshold,
                                                   Fate::LowConfidence};

inline std::string_view to_string(Fate f) noexcept {
    switch (f) {
    case Fate::Classified: return "classified";
    case Fate::NoImage: return "no_image";
    case Fate::NoFace: return "no_face";
    case Fate::BelowThreshold: return "below_threshold";
    case Fate::LowConfidence: return "low_confidence";
    }
    return "unknown";
}

struct PrepOptions {
    std::size_t threshold_bytes = kDefaultSizeThreshold;
    FilterOn filter_on = FilterOn::Source;
};

using ImageLoader = std::function<RasterImage(const ManifestEntry&)>;

inline RasterImage load_manifest_image(const ManifestEntry& entry) {
    RasterImage img = load_image(entry.image_path);
    img.source_byte_size = entry.byte_size;
    return img;
}

/// Face tensor for a manifest entry, or the reason it was dropped. Drops are
/// checked in order: missing image, no detected face, size threshold.
inline std::variant<FaceTensor, Fate> prepare_face(const ManifestEntry* entry, const PrepOptions& options,
                                                   const ImageLoader& loader = load_manifest_image) {
    if (entry == nullptr) return Fate::NoImage;
    if (entry->boxes.empty()) return Fate::NoFace;
    const FaceBox box = select_face(entry->boxes);
    if (options.filter_on == FilterOn::Source && !size_filter(entry->byte_size, options.threshold_bytes)) {
        return Fate::BelowThreshold;
    }
    if (options.filter_on == FilterOn::Crop && !size_filter(box.area() * 3, options.threshold_bytes)) {
        return Fate::BelowThreshold;
    }
    const RasterImage image = loader(*entry);
    return crop_resize(image, box);
}

struct AnalysisConfig {
    std::string account;
    Timestamp before_start{};
    Timestamp event_time{};
    Timestamp after_end{};
    std::filesystem::path snapshots;
    std::filesystem::path manifest;
    std::filesystem::path model;
    PrepOptions prep;
    double probability_floor = 0.5;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(before_start < event_time && event_time < after_end)) {
            throw Error(ErrorCode::MalformedConfig, "need before_start < event_time < after_end");
        }
        if (!(probability_floor >= 0.5 && probability_floor < 1.0)) {
            throw Error(ErrorCode::MalformedConfig, "probability_floor must lie in [0.5, 1)");
        }
    }

    static AnalysisConfig from(const KeyValueConfig& kv) {
        AnalysisConfig c;
        c.account = kv.require("account");
        c.before_start = kv.timestamp("before_start");
        c.event_time = kv.timestamp("event_time");
        c.after_end = kv.timestamp("after_end");
        c.snapshots = kv.path("snapshots");
        c.manifest = kv.path("manifest");
        c.model = kv.path("model");
        c.prep.threshold_bytes = kv.unsigned_int("image_threshold", kDefaultSizeThreshold);
        const std::string filter = kv.get("filter_on").value_or("source");
        if (filter == "source") {
            c.prep.filter_on = FilterOn::Source;
        } else if (filter == "crop") {
            c.prep.filter_on = FilterOn::Crop;
        } else {
            throw Error(ErrorCode::MalformedConfig, "filter_on must be source or crop");
        }
        c.probability_floor = kv.real("probability_floor", 0.5);
        c.seed = kv.unsigned_int("seed", 1);
        c.validate();
        return c;
    }
};

struct WindowComposition {
    std::size_t cohort_size = 0;
    std::size_t classified = 0;
    std::size_t female = 0;
    std::map<Fate, std::size_t> drops;  // one entry per drop fate

    double female_fraction() const {
        return classified == 0 ? 0.0 : static_cast<double>(female) / static_cast<double>(classified);
    }
    std::size_t dropped(Fate f) const {
        const auto it = drops.find(f);
        return it == drops.end() ? 0 : it->second;
    }
    std::size_t total_dropped() const {
        std::size_t n = 0;
        for (const auto& [f, c] : drops) n += c;
        return n;
    }
};

struct CohortReport {
    std::string cohort;  // "new_followers" or "unfollowers"
    WindowComposition before;
    WindowComposition after;
    std::optional<ScoreTestResult> test;  // empty when the pooled proportion is degenerate
};

struct MemberFate {
    UserId user_id = 0;
    std::string cohort;
    std::string window;
    Fate fate = Fate::NoImage;
    WeakLabel label = WeakLabel::Unknown;
    double probability = 0.0;
};

struct CompositionReport {
    std::string account;
    Timestamp before_start{}, event_time{}, after_end{};
    std::vector<BoundarySelection> selections;
    std::vector<CohortReport> cohorts;  // new_followers, unfollowers
    std::vector<MemberFate> provenance;
    double probability_floor = 0.5;
    std::uint64_t seed = 0;
};

namespace detail {

inline Error stage_error(const char* stage, UserId id, const Error& e) {
    return Error(e.code(), std::string("stage=") + stage + " user=" + std::to_string(id) + ": " + e.what());
}

inline WindowComposition classify_cohort(const IdSet& members, const std::string& cohort, const std::string& window,
                                         const ImageManifest& manifest, const cnn::CnnModel& model,
                                         const AnalysisConfig& config, const ImageLoader& loader,
                                         std::vector<MemberFate>& provenance) {
    WindowComposition w;
    w.cohort_size = members.size();
    for (const Fate f : kDropFates) w.drops[f] = 0;
    for (const UserId id : members) {
        MemberFate mf{id, cohort, window, Fate::Classified, WeakLabel::Unknown, 0.0};
        std::variant<FaceTensor, Fate> prepared;
        try {
            prepared = prepare_face(manifest.find(id), config.prep, loader);
        } catch (const Error& e) {
            throw stage_error("imageprep", id, e);
        }
        if (const Fate* dropped = std::get_if<Fate>(&prepared)) {
            mf.fate = *dropped;
        } else {
            cnn::Prediction p;
            try {
                p = cnn::predict(model, std::get<FaceTensor>(prepared));
            } catch (const Error& e) {
                throw stage_error("classify", id, e);
            }
            mf.label = p.label;
            mf.probability = p.probability;
            mf.fate = p.probability < config.probability_floor ? Fate::LowConfidence : Fate::Classified;
        }
        if (mf.fate == Fate::Classified) {
            ++w.classified;
            if (mf.label == WeakLabel::Female) ++w.female;
        } else {
            ++w.drops[mf.fate];
        }
        provenance.push_back(mf);
    }
    if (w.classified + w.total_dropped() != w.cohort_size) {
        throw Error(ErrorCode::Internal, "provenance ledger does not reconcile for " + cohort + "/" + window);
    }
    return w;
}

}  // namespace detail

/// Before/after gender composition of new followers and unfollowers.
///
/// Windows are before = [before_start, event_time) and after = [event_time,
/// after_end], each resolved to the nearest snapshot at or before its
/// boundary. Female fractions are taken over classified members only. The
/// score test compares after (first sample) against before (second), so a
/// rise in the female share gives a positive z.
inline CompositionReport run_analysis(const AnalysisConfig& config, const SnapshotSeries& series,
                                      const ImageManifest& manifest, const cnn::CnnModel& model,
                                      const ImageLoader& loader = load_manifest_image) {
    config.validate();
    const auto summary = churn_summary(series, {config.before_start, config.event_time, config.after_end});
    CompositionReport report;
    report.account = config.account;
    report.before_start = config.before_start;
    report.event_time = config.event_time;
    report.after_end = config.after_end;
    report.selections = summary.selections;
    report.probability_floor = config.probability_floor;
    report.seed = config.seed;

    const ChurnRecord& before = summary.records[0];
    const ChurnRecord& after = summary.records[1];
    const auto build = [&](const std::string& cohort, const IdSet& b, const IdSet& a) {
        CohortReport c;
        c.cohort = cohort;
        c.before = detail::classify_cohort(b, cohort, "before", manifest, model, config, loader, report.provenance);
        c.after = detail::classify_cohort(a, cohort, "after", manifest, model, config, loader, report.provenance);
        for (const auto& [window, comp] : {std::pair{"before", &c.before}, std::pair{"after", &c.after}}) {
            if (comp->classified == 0) {
                throw Error(ErrorCode::EmptyCohort, "stage=score_test cohort=" + cohort + " window=" + window +
                                                        ": no classified members (cohort size " +
                                                        std::to_string(comp->cohort_size) + ")");
            }
        }
        try {
            c.test = score_test({c.after.female, c.after.classified}, {c.before.female, c.before.classified});
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegeneratePool) throw;
        }
        return c;
    };
    report.cohorts.push_back(build("new_followers", before.new_followers, after.new_followers));
    report.cohorts.push_back(build("unfollowers", before.unfollowers, after.unfollowers));
    return report;
}

inline CompositionReport run_analysis(const AnalysisConfig& config) {
    config.validate();
    const SnapshotSeries series = load_series(config.snapshots, config.account);
    const ImageManifest manifest = load_manifest(config.manifest);
    const cnn::CnnModel model = cnn::load_model(config.model);
    return run_analysis(config, series, manifest, model);
}

}  // namespace churnlens
