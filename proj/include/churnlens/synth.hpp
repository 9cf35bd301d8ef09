#pragma once

// Seeded synthetic datasets for desk-scale verification: follower snapshots
// with planted churn, profile images whose gender is encoded as a geometric
// pattern, display names drawn from a lexicon, and an image manifest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "churnlens/cnn/train.hpp"
#include "churnlens/codec.hpp"
#include "churnlens/error.hpp"
#include "churnlens/imageprep.hpp"
#include "churnlens/manifest.hpp"
#include "churnlens/snapshots.hpp"
#include "churnlens/timestamp.hpp"
#include "churnlens/weaklabel.hpp"

namespace churnlens {

struct SynthSpec {
    std::string account = "candidate";
    std::vector<std::string> destinations = {"rival_a", "rival_b"};
    std::vector<double> destination_rates = {0.12, 0.05};
    std::size_t destination_base = 3000;  // unrelated followers of each destination

    std::size_t retained = 2000;  // followers present in every snapshot
    std::size_t joins_before = 500;
    std::size_t joins_after = 500;
    std::size_t leaves_before = 50;
    std::size_t leaves_after = 50;

    double female_retained = 0.5;
    double female_new_before = 0.5;
    double female_new_after = 0.5;
    double female_unf_before = 0.5;
    double female_unf_after = 0.5;
    // Exact: round(fraction * n) females per cohort. Bernoulli: each member
    // is female independently with probability `fraction`.
    enum class Planting { Exact, Bernoulli } planting = Planting::Exact;

    double noise = 0.0;  // per-pixel Gaussian sigma as a fraction of 255
    double missing_image_rate = 0.05;
    double no_face_rate = 0.05;
    double small_image_rate = 0.05;
    double decoy_face_rate = 0.10;
    double unknown_name_rate = 0.20;

    std::vector<std::string> male_names = {"James", "John", "Luke", "Michael", "David", "Robert", "William", "Thomas"};
    std::vector<std::string> female_names = {"Caroline", "Elizabeth", "Emily", "Isabella", "Maria", "Sarah", "Anna",
                                             "Laura"};
    std::vector<std::string> other_names = {"Alex", "Jordan", "Taylor", "Casey", "Robin", "Morgan", "Quinn", "Sky"};

    Timestamp before_start = *parse_timestamp("2016-04-20T00:00:00Z");
    Timestamp event_time = *parse_timestamp("2016-04-27T00:00:00Z");
    Timestamp after_end = *parse_timestamp("2016-05-04T00:00:00Z");

    void validate() const {
        for (const double f : {female_retained, female_new_before, female_new_after, female_unf_before, female_unf_after,
                               missing_image_rate, no_face_rate, small_image_rate, decoy_face_rate, unknown_name_rate}) {
            if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorCode::InvalidConfig, "fractions and rates must lie in [0, 1]");
        }
        for (const double r : destination_rates) {
            if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidConfig, "destination rates must lie in [0, 1]");
        }
        if (destination_rates.size() != destinations.size()) {
            throw Error(ErrorCode::InvalidConfig, "one destination rate per destination");
        }
        if (!(noise >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise must be non-negative");
        if (!(before_start < event_time && event_time < after_end)) {
            throw Error(ErrorCode::InvalidConfig, "need before_start < event_time < after_end");
        }
        if (male_names.empty() || female_names.empty()) throw Error(ErrorCode::InvalidConfig, "empty name pool");
    }
};

inline constexpr std::size_t kSynthImageSide = 80;  // stored PNG ~19.4 kB, above the size threshold
inline constexpr std::size_t kSynthSmallSide = 48;  // ~7 kB, below it

struct SynthImageTraits {
    bool small = false;
    bool has_face = true;
    bool decoy = false;
};

struct SynthImage {
    RasterImage image;
    std::vector<FaceBox> boxes;  // detector output; empty when there is no face
};

namespace detail {

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t key, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

/// Two-tone face: the upper half bright and lower half dark encodes female;
/// the reverse encodes male.
inline void paint_face(std::vector<double>& canvas, std::size_t side, const FaceBox& box, bool upper_bright,
                       double bright, double dark, const double tint[3]) {
    for (std::size_t y = box.y; y < box.y + box.h; ++y) {
        const bool upper = (y - box.y) < box.h / 2;
        const double level = upper == upper_bright ? bright : dark;
        for (std::size_t x = box.x; x < box.x + box.w; ++x) {
            for (std::size_t c = 0; c < 3; ++c) canvas[(y * side + x) * 3 + c] = level * tint[c];
        }
    }
}

}  // namespace detail

/// Renders one profile image. Every random draw happens regardless of
/// `gender`, so flipping the gender of a user changes only the orientation of
/// the face pattern.
inline SynthImage render_profile_image(WeakLabel gender, std::mt19937_64& rng, double noise,
                                       const SynthImageTraits& traits) {
    const std::size_t side = traits.small ? kSynthSmallSide : kSynthImageSide;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const auto uniform_int = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };

    std::vector<double> canvas(side * side * 3);
    double bg[3];
    for (double& b : bg) b = uniform(60.0, 190.0);
    for (std::size_t i = 0; i < side * side; ++i) {
        for (std::size_t c = 0; c < 3; ++c) canvas[i * 3 + c] = bg[c];
    }

    const std::size_t face_side = uniform_int(side / 2, side * 4 / 5);
    const FaceBox face{uniform_int(0, side - face_side), uniform_int(0, side - face_side), face_side, face_side};
    const std::size_t decoy_side = uniform_int(side / 7, side / 4);
    const FaceBox decoy{uniform_int(0, side - decoy_side), uniform_int(0, side - decoy_side), decoy_side, decoy_side};
    const double bright = uniform(170.0, 245.0);
    const double dark = uniform(15.0, 85.0);
    double tint[3];
    for (double& t : tint) t = uniform(0.85, 1.0);

    const bool female = gender == WeakLabel::Female;
    SynthImage out;
    if (traits.has_face) {
        if (traits.decoy) {
            detail::paint_face(canvas, side, decoy, !female, bright, dark, tint);
            out.boxes.push_back(decoy);
        }
        detail::paint_face(canvas, side, face, female, bright, dark, tint);
        out.boxes.push_back(face);
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::uint8_t> pixels(canvas.size());
    for (std::size_t i = 0; i < canvas.size(); ++i) {
        const double n = gauss(rng);
        pixels[i] = detail::to_byte(canvas[i] + noise * 255.0 * n);
    }
    out.image = RasterImage(side, side, std::move(pixels));
    return out;
}

/// Balanced in-memory corpus of preprocessed faces (no drops), for training
/// and evaluation without touching disk.
inline std::vector<cnn::Example> synth_training_examples(std::size_t count, std::uint64_t seed, double noise,
                                                         double decoy_rate = 0.0) {
    std::vector<cnn::Example> out;
    out.reserve(count);
    auto rng = detail::stream_rng(seed, 0, 7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
        const WeakLabel gender = i % 2 == 0 ? WeakLabel::Female : WeakLabel::Male;
        SynthImageTraits traits;
        traits.decoy = unit(rng) < decoy_rate;
        const auto img = render_profile_image(gender, rng, noise, traits);
        out.push_back({crop_resize(img.image, select_face(img.boxes)), class_index(gender)});
    }
    return out;
}

struct SynthDataset {
    std::filesystem::path root;
    std::filesystem::path config_path;
    IdSet retained, joins_before, joins_after, leaves_before, leaves_after;
    std::map<UserId, WeakLabel> gender;   // ground truth for every candidate follower
    std::map<UserId, std::string> names;  // display names
};

namespace detail {

inline std::vector<UserId> draw_unique_ids(std::mt19937_64& rng, std::size_t n, std::unordered_set<UserId>& used) {
    std::uniform_int_distribution<UserId> dist(1'000'000ULL, 999'999'999'999ULL);
    std::vector<UserId> out;
    out.reserve(n);
    while (out.size() < n) {
        const UserId id = dist(rng);
        if (used.insert(id).second) out.push_back(id);
    }
    return out;
}

/// Exact mode: round(fraction * n) females at seeded positions, nested across
/// fractions so raising the fraction only converts males.
inline std::vector<WeakLabel> plant_genders(std::size_t n, double fraction, std::mt19937_64 rng,
                                            SynthSpec::Planting mode = SynthSpec::Planting::Exact) {
    if (mode == SynthSpec::Planting::Bernoulli) {
        std::bernoulli_distribution female(fraction);
        std::vector<WeakLabel> out(n);
        for (auto& g : out) g = female(rng) ? WeakLabel::Female : WeakLabel::Male;
        return out;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto females = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<WeakLabel> out(n, WeakLabel::Male);
    for (std::size_t i = 0; i < females && i < n; ++i) out[order[i]] = WeakLabel::Female;
    return out;
}

inline std::string snapshot_file_name(const std::string& account, Timestamp ts) {
    std::string t = format_timestamp(ts);
    t.erase(std::remove_if(t.begin(), t.end(), [](char c) { return c == '-' || c == ':'; }), t.end());
    return account + "_" + t + ".txt";
}

inline void write_text(const std::filesystem::path& path, const std::string& text) { write_file_bytes(path, text); }

}  // namespace detail

/// Writes a complete dataset under `root`:
///
///     snapshots/     follower snapshots of the account and its destinations
///     images/        profile images (PNG)
///     manifest.csv   user_id,image_path,byte_size[,x,y,w,h ...]
///     users.csv      user_id,display_name
///     truth.csv      user_id,gender (ground truth)
///     lexicon/       male.txt, female.txt
///     analysis.conf  key-value config for run_analysis
///
/// Output is byte-identical for a given (seed, spec).
inline SynthDataset gen_synthetic(std::uint64_t seed, const SynthSpec& spec, const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    spec.validate();
    std::error_code ec;
    fs::create_directories(root / "snapshots", ec);
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "lexicon", ec);
    if (ec || !fs::is_directory(root / "images")) throw Error(ErrorCode::Io, "cannot create " + root.string());

    SynthDataset ds;
    ds.root = root;
    auto id_rng = detail::stream_rng(seed, 0, 1);
    std::unordered_set<UserId> used;
    const auto retained = detail::draw_unique_ids(id_rng, spec.retained, used);
    const auto joins_before = detail::draw_unique_ids(id_rng, spec.joins_before, used);
    const auto joins_after = detail::draw_unique_ids(id_rng, spec.joins_after, used);
    const auto leaves_before = detail::draw_unique_ids(id_rng, spec.leaves_before, used);
    const auto leaves_after = detail::draw_unique_ids(id_rng, spec.leaves_after, used);
    ds.retained = IdSet(retained);
    ds.joins_before = IdSet(joins_before);
    ds.joins_after = IdSet(joins_after);
    ds.leaves_before = IdSet(leaves_before);
    ds.leaves_after = IdSet(leaves_after);

    // Gender planting, one independent stream per cohort.
    const auto plant = [&](const std::vector<UserId>& ids, double fraction, std::uint64_t stream) {
        const auto g = detail::plant_genders(ids.size(), fraction, detail::stream_rng(seed, 0, stream), spec.planting);
        for (std::size_t i = 0; i < ids.size(); ++i) ds.gender[ids[i]] = g[i];
    };
    plant(retained, spec.female_retained, 10);
    plant(joins_before, spec.female_new_before, 11);
    plant(joins_after, spec.female_new_after, 12);
    plant(leaves_before, spec.female_unf_before, 13);
    plant(leaves_after, spec.female_unf_after, 14);

    static const std::vector<std::string> surnames = {"Smith", "Lopez", "Nguyen", "Brown", "Garcia", "Miller", "Khan",
                                                      "Davis"};
    std::vector<ManifestEntry> manifest;
    std::string users_csv = "user_id,display_name\n";
    std::string truth_csv = "user_id,gender\n";
    for (const auto& [id, gender] : ds.gender) {
        // Per-user stream: drop decisions and image draws are independent of
        // the user's gender and of every other user.
        auto rng = detail::stream_rng(seed, id, 2);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const bool unknown_name = unit(rng) < spec.unknown_name_rate;
        const auto pick = [&](const std::vector<std::string>& pool) {
            return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        };
        const std::string male_first = pick(spec.male_names);
        const std::string female_first = pick(spec.female_names);
        const std::string other_first = pick(spec.other_names);
        const std::string surname = pick(surnames);
        const std::size_t style = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
        std::string first = unknown_name ? other_first : (gender == WeakLabel::Female ? female_first : male_first);
        std::string name;
        switch (style) {
        case 0: name = first + " " + surname; break;
        case 1: name = detail::ascii_fold(first) + "_" + detail::ascii_fold(surname.substr(0, 1)); break;
        case 2: name = "@" + first + "."; break;
        default:
            for (char& c : first) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            name = first + " " + detail::ascii_fold(surname);
            break;
        }
        ds.names[id] = name;
        users_csv += std::to_string(id) + "," + name + "\n";
        truth_csv += std::to_string(id) + "," + std::string(to_string(gender)) + "\n";

        SynthImageTraits traits;
        const bool missing = unit(rng) < spec.missing_image_rate;
        traits.has_face = !(unit(rng) < spec.no_face_rate);
        traits.small = unit(rng) < spec.small_image_rate;
        traits.decoy = unit(rng) < spec.decoy_face_rate;
        if (missing) continue;
        const auto img = render_profile_image(gender, rng, spec.noise, traits);
        const fs::path rel = fs::path("images") / (std::to_string(id) + ".png");
        write_png(img.image, root / rel);
        manifest.push_back({id, root / rel, static_cast<std::size_t>(fs::file_size(root / rel)), img.boxes});
    }
    detail::write_text(root / "manifest.csv", manifest_to_text(manifest, root));
    detail::write_text(root / "users.csv", users_csv);
    detail::write_text(root / "truth.csv", truth_csv);

    std::string male_txt, female_txt;
    for (const auto& n : spec.male_names) male_txt += n + "\n";
    for (const auto& n : spec.female_names) female_txt += n + "\n";
    detail::write_text(root / "lexicon" / "male.txt", male_txt);
    detail::write_text(root / "lexicon" / "female.txt", female_txt);

    // Snapshots: window boundaries plus a mid-window snapshot where half of
    // each window's churn has happened.
    const Timestamp t0 = spec.before_start, t1 = spec.event_time, t2 = spec.after_end;
    const Timestamp m1 = t0 + (t1 - t0) / 2, m2 = t1 + (t2 - t1) / 2;
    const auto half = [](const std::vector<UserId>& v) {
        return std::vector<UserId>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2));
    };
    const auto join = [](std::initializer_list<const std::vector<UserId>*> parts) {
        std::vector<UserId> out;
        for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
        return IdSet(std::move(out));
    };
    const auto lb_late = std::vector<UserId>(leaves_before.begin() + static_cast<std::ptrdiff_t>(leaves_before.size() / 2),
                                             leaves_before.end());
    const auto la_late = std::vector<UserId>(leaves_after.begin() + static_cast<std::ptrdiff_t>(leaves_after.size() / 2),
                                             leaves_after.end());
    const auto jb_early = half(joins_before);
    const auto ja_early = half(joins_after);
    const std::vector<std::pair<Timestamp, IdSet>> account_snaps = {
        {t0, join({&retained, &leaves_before, &leaves_after})},
        {m1, join({&retained, &lb_late, &leaves_after, &jb_early})},
        {t1, join({&retained, &leaves_after, &joins_before})},
        {m2, join({&retained, &la_late, &joins_before, &ja_early})},
        {t2, join({&retained, &joins_before, &joins_after})},
    };
    for (const auto& [ts, ids] : account_snaps) {
        write_snapshot({spec.account, ts, ids}, root / "snapshots" / detail::snapshot_file_name(spec.account, ts));
    }

    for (std::size_t d = 0; d < spec.destinations.size(); ++d) {
        auto rng = detail::stream_rng(seed, d, 3);
        const auto base = detail::draw_unique_ids(rng, spec.destination_base, used);
        const auto movers = [&](const std::vector<UserId>& leavers) {
            std::vector<UserId> v = leavers;
            std::shuffle(v.begin(), v.end(), rng);
            v.resize(static_cast<std::size_t>(std::llround(spec.destination_rates[d] * static_cast<double>(v.size()))));
            return v;
        };
        const auto moved_before = movers(leaves_before);
        const auto moved_after = movers(leaves_after);
        const std::vector<std::pair<Timestamp, IdSet>> snaps = {
            {t0, join({&base})},
            {t1, join({&base, &moved_before})},
            {t2, join({&base, &moved_before, &moved_after})},
        };
        for (const auto& [ts, ids] : snaps) {
            write_snapshot({spec.destinations[d], ts, ids},
                           root / "snapshots" / detail::snapshot_file_name(spec.destinations[d], ts));
        }
    }

    std::string conf;
    conf += "# generated dataset, seed " + std::to_string(seed) + "\n";
    conf += "account = " + spec.account + "\n";
    std::string dests;
    for (const auto& d : spec.destinations) dests += (dests.empty() ? "" : ",") + d;
    conf += "destinations = " + dests + "\n";
    conf += "snapshots = snapshots\nmanifest = manifest.csv\nmodel = model.cnnw\n";
    conf += "users = users.csv\ntruth = truth.csv\nlexicon_male = lexicon/male.txt\nlexicon_female = lexicon/female.txt\n";
    conf += "before_start = " + format_timestamp(t0) + "\n";
    conf += "event_time = " + format_timestamp(t1) + "\n";
    conf += "after_end = " + format_timestamp(t2) + "\n";
    conf += "image_threshold = " + std::to_string(kDefaultSizeThreshold) + "\n";
    conf += "filter_on = source\nprobability_floor = 0.5\n";
    conf += "seed = " + std::to_string(seed) + "\n";
    ds.config_path = root / "analysis.conf";
    detail::write_text(ds.config_path, conf);
    return ds;
}

}  // namespace churnlens
