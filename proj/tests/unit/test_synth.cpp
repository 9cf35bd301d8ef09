#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "churnlens/churn.hpp"
#include "churnlens/dataset.hpp"
#include "churnlens/synth.hpp"
#include "../support/temp_dir.hpp"

using namespace churnlens;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec() {
    SynthSpec s;
    s.retained = 100;
    s.joins_before = 60;
    s.joins_after = 40;
    s.leaves_before = 20;
    s.leaves_after = 10;
    s.female_new_before = 0.25;
    s.female_new_after = 0.75;
    s.female_unf_before = 0.5;
    s.female_unf_after = 0.1;
    s.destination_base = 50;
    return s;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = detail::read_file_bytes(e.path());
    }
    return out;
}

std::size_t females(const IdSet& ids, const std::map<UserId, WeakLabel>& truth) {
    return static_cast<std::size_t>(
        std::count_if(ids.begin(), ids.end(), [&](UserId id) { return truth.at(id) == WeakLabel::Female; }));
}

}  // namespace

TEST(Synth, ByteIdenticalPerSeed) {
    testing_support::TempDir a, b, c;
    gen_synthetic(7, small_spec(), a.path());
    gen_synthetic(7, small_spec(), b.path());
    gen_synthetic(8, small_spec(), c.path());
    const auto ta = tree_contents(a.path());
    EXPECT_GT(ta.size(), 10u);
    // Absolute image paths differ between roots; the manifest stores them relative.
    EXPECT_EQ(ta, tree_contents(b.path()));
    EXPECT_NE(ta, tree_contents(c.path()));
}

TEST(Synth, PlantedCompositionIsExact) {
    testing_support::TempDir dir;
    const auto spec = small_spec();
    const auto ds = gen_synthetic(3, spec, dir.path());
    const auto truth = load_label_table(dir / "truth.csv");
    EXPECT_EQ(truth, ds.gender);
    EXPECT_EQ(females(ds.joins_before, truth), 15u);
    EXPECT_EQ(females(ds.joins_after, truth), 30u);
    EXPECT_EQ(females(ds.leaves_before, truth), 10u);
    EXPECT_EQ(females(ds.leaves_after, truth), 1u);
    EXPECT_EQ(females(ds.retained, truth), 50u);
}

TEST(Synth, BernoulliPlantingVariesAroundTheRate) {
    auto spec = small_spec();
    spec.planting = SynthSpec::Planting::Bernoulli;
    spec.joins_before = 2000;
    spec.missing_image_rate = 1.0;
    testing_support::TempDir dir;
    const auto ds = gen_synthetic(4, spec, dir.path());
    const double share = static_cast<double>(females(ds.joins_before, ds.gender)) / 2000.0;
    EXPECT_NEAR(share, 0.25, 0.04);
    EXPECT_NE(share, 0.25);
}

TEST(Synth, SnapshotsAndDestinationsMatchPlan) {
    testing_support::TempDir dir;
    const auto spec = small_spec();
    const auto ds = gen_synthetic(5, spec, dir.path());
    const auto series = load_series(dir / "snapshots", spec.account);
    EXPECT_EQ(series.size(), 5u);
    const auto summary = churn_summary(series, {spec.before_start, spec.event_time, spec.after_end});
    EXPECT_EQ(summary.records[0].new_followers, ds.joins_before);
    EXPECT_EQ(summary.records[0].unfollowers, ds.leaves_before);
    EXPECT_EQ(summary.records[1].new_followers, ds.joins_after);
    EXPECT_EQ(summary.records[1].unfollowers, ds.leaves_after);
    EXPECT_EQ(summary.records[1].retained.size(), spec.retained + spec.joins_before);

    std::vector<SnapshotSeries> dests;
    for (const auto& d : spec.destinations) dests.push_back(load_series(dir / "snapshots", d));
    const auto t = transitions(series, spec.before_start, spec.event_time, dests);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0].destination_account, "rival_a");
    EXPECT_EQ(t.rows[0].rate.numerator, 2u);  // round(0.12 * 20)
    EXPECT_EQ(t.rows[1].rate.numerator, 1u);  // round(0.05 * 20)
    EXPECT_EQ(t.rows[0].rate.denominator, 20u);
}

TEST(Synth, ManifestMatchesFilesOnDisk) {
    testing_support::TempDir dir;
    gen_synthetic(6, small_spec(), dir.path());
    const auto manifest = load_manifest(dir / "manifest.csv");
    EXPECT_FALSE(manifest.entries().empty());
    std::size_t below = 0;
    for (const auto& e : manifest.entries()) {
        ASSERT_TRUE(fs::exists(e.image_path)) << e.image_path;
        ASSERT_EQ(e.byte_size, fs::file_size(e.image_path));
        if (e.byte_size < kDefaultSizeThreshold) ++below;
        const auto img = load_image(e.image_path);
        for (const auto& b : e.boxes) {
            ASSERT_LE(b.x + b.w, img.width);
            ASSERT_LE(b.y + b.h, img.height);
        }
    }
    EXPECT_LT(below, manifest.entries().size() / 4);
}

TEST(Synth, TrainingExamplesAlternateAndRepeat) {
    const auto a = synth_training_examples(10, 9, 0.1, 0.5);
    const auto b = synth_training_examples(10, 9, 0.1, 0.5);
    ASSERT_EQ(a.size(), 10u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].label, i % 2 == 0 ? 1 : 0);
        EXPECT_EQ(a[i].input, b[i].input);
        for (const double v : a[i].input.data) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    }
}

TEST(Synth, InvalidSpecRejected) {
    testing_support::TempDir dir;
    auto spec = small_spec();
    spec.female_new_after = 1.5;
    EXPECT_THROW(gen_synthetic(1, spec, dir.path()), Error);
    spec = small_spec();
    spec.destination_rates = {0.1};
    EXPECT_THROW(gen_synthetic(1, spec, dir.path()), Error);
}
