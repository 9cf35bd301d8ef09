// churnlens: follower churn composition analysis.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "churnlens/churn.hpp"
#include "churnlens/cnn/metrics.hpp"
#include "churnlens/cnn/serialize.hpp"
#include "churnlens/cnn/train.hpp"
#include "churnlens/config.hpp"
#include "churnlens/dataset.hpp"
#include "churnlens/error.hpp"
#include "churnlens/pipeline.hpp"
#include "churnlens/report.hpp"
#include "churnlens/snapshots.hpp"
#include "churnlens/stats.hpp"
#include "churnlens/synth.hpp"
#include "churnlens/weaklabel.hpp"

namespace fs = std::filesystem;
using namespace churnlens;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string format = "csv";
};

KeyValueConfig load_config(const Globals& g) {
    if (g.config_path.empty()) throw Error(ErrorCode::MalformedConfig, "--config is required for this command");
    return KeyValueConfig::load(g.config_path);
}

std::uint64_t seed_of(const Globals& g, const KeyValueConfig* kv) {
    if (g.seed) return *g.seed;
    return kv != nullptr ? kv->unsigned_int("seed", 1) : 1;
}

// Writes to <out-dir>/<name> when --out-dir is set, stdout otherwise.
void emit(const Globals& g, const std::string& name, const std::string& text) {
    if (g.out_dir.empty()) {
        std::cout << text;
        return;
    }
    fs::create_directories(g.out_dir);
    detail::write_file_bytes(fs::path(g.out_dir) / name, text);
    std::cerr << "wrote " << (fs::path(g.out_dir) / name).string() << "\n";
}

std::string extension(ReportFormat f) {
    switch (f) {
    case ReportFormat::Csv: return ".csv";
    case ReportFormat::Markdown: return ".md";
    case ReportFormat::Json: return ".json";
    }
    return ".txt";
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        const auto item = detail::trim(std::string_view(s).substr(start, comma - start));
        if (!item.empty()) out.emplace_back(item);
        start = comma + 1;
    }
    return out;
}

NameLexicon lexicon_from(const KeyValueConfig& kv) {
    if (kv.has("lexicon_male") && kv.has("lexicon_female")) {
        return NameLexicon::load(kv.path("lexicon_male"), kv.path("lexicon_female"));
    }
    return NameLexicon::defaults();
}

PrepOptions prep_from(const KeyValueConfig& kv) {
    PrepOptions p;
    p.threshold_bytes = kv.unsigned_int("image_threshold", kDefaultSizeThreshold);
    const std::string filter = kv.get("filter_on").value_or("source");
    if (filter == "crop") {
        p.filter_on = FilterOn::Crop;
    } else if (filter != "source") {
        throw Error(ErrorCode::MalformedConfig, "filter_on must be source or crop");
    }
    return p;
}

fs::path model_path(const Globals& g, const KeyValueConfig& kv) {
    if (kv.has("model")) return kv.path("model");
    if (!g.out_dir.empty()) return fs::path(g.out_dir) / "model.cnnw";
    return "model.cnnw";
}

void cmd_ingest(const Globals& g, const std::vector<std::string>& files) {
    const ReportFormat fmt = parse_report_format(g.format);
    nlohmann::json j = nlohmann::json::array();
    std::string csv = "file,account,captured_at,followers,duplicates\n";
    std::string md = "| File | Account | Captured at | Followers | Duplicates |\n|---|---|---|---|---|\n";
    for (const auto& f : files) {
        const auto parsed = parse_snapshot(f);
        const auto& s = parsed.snapshot;
        const auto ts = format_timestamp(s.captured_at);
        const auto n = std::to_string(s.follower_ids.size());
        const auto d = std::to_string(parsed.duplicate_warnings);
        csv += f + "," + s.account + "," + ts + "," + n + "," + d + "\n";
        md += "| " + f + " | " + s.account + " | " + ts + " | " + n + " | " + d + " |\n";
        j.push_back({{"file", f},
                     {"account", s.account},
                     {"captured_at", ts},
                     {"followers", s.follower_ids.size()},
                     {"duplicates", parsed.duplicate_warnings}});
    }
    emit(g, "ingest" + extension(fmt),
         fmt == ReportFormat::Csv ? csv : fmt == ReportFormat::Markdown ? md : j.dump(2) + "\n");
}

std::string ids_text(const IdSet& ids) {
    std::string out;
    for (const UserId id : ids) out += std::to_string(id) + "\n";
    return out;
}

void cmd_diff(const Globals& g, const std::string& before, const std::string& after, bool list_ids) {
    const ReportFormat fmt = parse_report_format(g.format);
    const auto a = parse_snapshot(before).snapshot;
    const auto b = parse_snapshot(after).snapshot;
    if (a.account != b.account) {
        throw Error(ErrorCode::AccountMismatch, "snapshots belong to '" + a.account + "' and '" + b.account + "'");
    }
    if (!(a.captured_at < b.captured_at)) {
        throw Error(ErrorCode::NonIncreasingTimestamps, "before snapshot is not earlier than after snapshot");
    }
    const ChurnRecord r = diff(a, b);
    std::string text;
    if (fmt == ReportFormat::Csv) {
        text = churn_csv({r});
    } else if (fmt == ReportFormat::Markdown) {
        text = churn_markdown({r}, {format_timestamp(r.window_start) + " to " + format_timestamp(r.window_end)});
    } else {
        text = nlohmann::json{{"account", r.account},
                              {"window_start", format_timestamp(r.window_start)},
                              {"window_end", format_timestamp(r.window_end)},
                              {"new_followers", r.new_followers.size()},
                              {"unfollowers", r.unfollowers.size()},
                              {"retained", r.retained.size()}}
                   .dump(2) +
               "\n";
    }
    emit(g, "diff" + extension(fmt), text);
    if (list_ids) {
        emit(g, "new_followers.txt", ids_text(r.new_followers));
        emit(g, "unfollowers.txt", ids_text(r.unfollowers));
    }
}

void cmd_transitions(const Globals& g, const std::string& at_text) {
    const ReportFormat fmt = parse_report_format(g.format);
    const auto kv = load_config(g);
    const std::string account = kv.require("account");
    const auto destinations = split_list(kv.require("destinations"));
    const auto dir = kv.path("snapshots");
    const DestinationTime at = at_text == "start" ? DestinationTime::WindowStart : DestinationTime::WindowEnd;
    const SnapshotSeries source = load_series(dir, account);
    std::vector<SnapshotSeries> dest;
    for (const auto& d : destinations) dest.push_back(load_series(dir, d));
    const auto t0 = kv.timestamp("before_start"), t1 = kv.timestamp("event_time"), t2 = kv.timestamp("after_end");
    const std::vector<std::pair<std::string, TransitionReport>> windows = {
        {"Before", transitions(source, t0, t1, dest, at)},
        {"After", transitions(source, t1, t2, dest, at)},
    };
    std::string text;
    if (fmt == ReportFormat::Markdown) {
        text = transitions_markdown(windows);
    } else if (fmt == ReportFormat::Csv) {
        text = "window," + std::string("destination,fraction,numerator,denominator\n");
        for (const auto& [label, rep] : windows) {
            const std::string body = transitions_csv(rep);
            std::size_t start = body.find('\n') + 1;
            while (start < body.size()) {
                const std::size_t nl = body.find('\n', start);
                text += label + "," + body.substr(start, nl - start) + "\n";
                start = nl + 1;
            }
        }
    } else {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& [label, rep] : windows) {
            for (const auto& row : rep.rows) {
                j.push_back({{"window", label},
                             {"destination", row.destination_account},
                             {"fraction", row.rate.fraction},
                             {"numerator", row.rate.numerator},
                             {"denominator", row.rate.denominator}});
            }
        }
        text = j.dump(2) + "\n";
    }
    emit(g, "transitions" + extension(fmt), text);
}

void cmd_label(const Globals& g, bool balanced) {
    const auto kv = load_config(g);
    const auto names = load_display_names(kv.path("users"));
    const NameLexicon lexicon = lexicon_from(kv);
    std::vector<Labeled<UserId>> pool;
    for (const auto& [id, name] : names) pool.push_back({id, weak_label(name, lexicon)});
    if (balanced) pool = build_balanced_set(pool, seed_of(g, &kv));
    std::string out = "user_id,label\n";
    for (const auto& l : pool) out += std::to_string(l.item) + "," + std::string(to_string(l.label)) + "\n";
    emit(g, balanced ? "balanced_labels.csv" : "labels.csv", out);
}

void cmd_prep(const Globals& g) {
    const auto kv = load_config(g);
    const ImageManifest manifest = load_manifest(kv.path("manifest"));
    const PrepOptions prep = prep_from(kv);
    std::string out = "user_id,fate\n";
    for (const auto& e : manifest.entries()) {
        std::string fate = "ok";
        try {
            const auto prepared = prepare_face(&e, prep);
            if (const Fate* f = std::get_if<Fate>(&prepared)) fate = std::string(to_string(*f));
        } catch (const Error& err) {
            throw Error(err.code(), "stage=imageprep user=" + std::to_string(e.user_id) + ": " + err.what());
        }
        out += std::to_string(e.user_id) + "," + fate + "\n";
    }
    emit(g, "prep.csv", out);
}

void cmd_train(const Globals& g, const cnn::TrainConfig& base) {
    const auto kv = load_config(g);
    cnn::TrainConfig tc = base;
    tc.seed = seed_of(g, &kv);
    const auto set = build_training_set(load_display_names(kv.path("users")), lexicon_from(kv),
                                        load_manifest(kv.path("manifest")), prep_from(kv), tc.seed);
    std::cerr << "training on " << set.examples.size() << " balanced examples (" << set.labeled
              << " weakly labeled users)\n";
    const auto result = cnn::train(set.examples, tc, {}, {}, [](const cnn::EpochStats& s) {
        std::cerr << "epoch " << s.epoch << " loss " << format_real(s.loss) << " train_acc " << format_real(s.train_acc)
                  << "\n";
    });
    const fs::path path = model_path(g, kv);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    cnn::save_model(result.model, path);
    std::cerr << "saved " << path.string() << "\n";
    emit(g, "history.csv", cnn::history_csv(result.history));
}

void cmd_eval(const Globals& g, const std::string& positive) {
    const ReportFormat fmt = parse_report_format(g.format);
    const auto kv = load_config(g);
    const WeakLabel pos = label_from_string(positive);
    if (pos == WeakLabel::Unknown) throw Error(ErrorCode::InvalidConfig, "--positive must be male or female");
    const auto model = cnn::load_model(model_path(g, kv));
    const auto examples = build_labeled_examples(load_label_table(kv.path("truth")), load_manifest(kv.path("manifest")),
                                                 prep_from(kv));
    const auto m = cnn::evaluate(model, examples, class_index(pos));
    const auto cell = [](double v, bool undefined) { return undefined ? std::string("n/a") : format_real(v); };
    std::string text;
    if (fmt == ReportFormat::Json) {
        text = nlohmann::json{{"positive", positive},
                              {"precision", m.precision},
                              {"recall", m.recall},
                              {"f1", m.f1},
                              {"accuracy", m.accuracy},
                              {"tp", m.counts.tp},
                              {"fp", m.counts.fp},
                              {"fn", m.counts.fn},
                              {"tn", m.counts.tn}}
                   .dump(2) +
               "\n";
    } else if (fmt == ReportFormat::Markdown) {
        text = "| Precision | Recall | F1 | Accuracy |\n|---|---|---|---|\n| " + format_percent(m.precision) + " | " +
               format_percent(m.recall) + " | " + format_percent(m.f1) + " | " + format_percent(m.accuracy) + " |\n";
    } else {
        text = "precision,recall,f1,accuracy,tp,fp,fn,tn\n" + cell(m.precision, m.precision_undefined) + "," +
               cell(m.recall, m.recall_undefined) + "," + cell(m.f1, m.f1_undefined) + "," +
               cell(m.accuracy, m.accuracy_undefined) + "," + std::to_string(m.counts.tp) + "," +
               std::to_string(m.counts.fp) + "," + std::to_string(m.counts.fn) + "," + std::to_string(m.counts.tn) +
               "\n";
    }
    emit(g, "eval" + extension(fmt), text);
}

void cmd_classify(const Globals& g) {
    const auto kv = load_config(g);
    const auto model = cnn::load_model(model_path(g, kv));
    const ImageManifest manifest = load_manifest(kv.path("manifest"));
    const PrepOptions prep = prep_from(kv);
    std::string out = "user_id,fate,label,probability\n";
    for (const auto& e : manifest.entries()) {
        const auto prepared = prepare_face(&e, prep);
        if (const Fate* f = std::get_if<Fate>(&prepared)) {
            out += std::to_string(e.user_id) + "," + std::string(to_string(*f)) + ",,\n";
            continue;
        }
        const auto p = cnn::predict(model, std::get<FaceTensor>(prepared));
        out += std::to_string(e.user_id) + ",classified," + std::string(to_string(p.label)) + "," +
               format_real(p.probability) + "\n";
    }
    emit(g, "classify.csv", out);
}

void cmd_scoretest(const Globals& g, std::uint64_t x1, std::uint64_t n1, std::uint64_t x2, std::uint64_t n2) {
    const ReportFormat fmt = parse_report_format(g.format);
    const auto r = score_test({x1, n1}, {x2, n2});
    std::string text;
    if (fmt == ReportFormat::Json) {
        text = score_test_json(r).dump(2) + "\n";
    } else if (fmt == ReportFormat::Markdown) {
        text = "| z | p (two-sided) | pooled p |\n|---|---|---|\n| " + format_fixed(r.z, 4) + " | " +
               format_fixed(r.p_two_sided, 4) + " | " + format_fixed(r.pooled_p, 4) + " |\n";
    } else {
        text = score_test_csv(r);
    }
    emit(g, "scoretest" + extension(fmt), text);
}

void cmd_report(const Globals& g) {
    const ReportFormat fmt = parse_report_format(g.format);
    auto kv = load_config(g);
    if (g.seed) kv.set("seed", std::to_string(*g.seed));
    const auto report = run_analysis(AnalysisConfig::from(kv));
    emit(g, "report" + extension(fmt), render_report(report, fmt));
    if (!g.out_dir.empty()) emit(g, "provenance.csv", provenance_csv(report));
}

void cmd_synth(const Globals& g, const SynthSpec& spec) {
    if (g.out_dir.empty()) throw Error(ErrorCode::InvalidConfig, "synth needs --out-dir");
    const auto ds = gen_synthetic(g.seed.value_or(1), spec, g.out_dir);
    std::cerr << "wrote dataset to " << ds.root.string() << " (config " << ds.config_path.string() << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Follower churn gender-composition analysis"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Seed for every random choice");
    app.add_option("--config", g.config_path, "Key-value config file");
    app.add_option("--out-dir", g.out_dir, "Write outputs here instead of stdout");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "markdown", "json"}));

    auto* ingest = app.add_subcommand("ingest", "Parse and summarize snapshot files");
    std::vector<std::string> files;
    ingest->add_option("files", files, "Snapshot files")->required();

    auto* diff_cmd = app.add_subcommand("diff", "Churn between two snapshots");
    std::string before, after;
    bool list_ids = false;
    diff_cmd->add_option("before", before)->required();
    diff_cmd->add_option("after", after)->required();
    diff_cmd->add_flag("--ids", list_ids, "Also write the new follower and unfollower ID lists");

    auto* trans = app.add_subcommand("transitions", "Where unfollowers went, per window");
    std::string at = "end";
    trans->add_option("--at", at, "Destination snapshot time")->check(CLI::IsMember({"start", "end"}));

    auto* label = app.add_subcommand("label", "Weak gender labels from display names");
    bool balanced = false;
    label->add_flag("--balanced", balanced, "Drop unknowns and downsample the majority class");

    auto* prep = app.add_subcommand("prep", "Image preprocessing fate per manifest entry");

    auto* train_cmd = app.add_subcommand("train", "Train the classifier on weakly labeled faces");
    cnn::TrainConfig tc;
    train_cmd->add_option("--lr", tc.learning_rate);
    train_cmd->add_option("--momentum", tc.momentum);
    train_cmd->add_option("--batch", tc.batch_size);
    train_cmd->add_option("--epochs", tc.epochs);

    auto* eval_cmd = app.add_subcommand("eval", "Precision, recall and F1 against ground-truth labels");
    std::string positive;
    eval_cmd->add_option("--positive", positive, "Positive class (male or female)")->required();

    auto* classify = app.add_subcommand("classify", "Predict a gender for every manifest entry");

    auto* scoretest = app.add_subcommand("scoretest", "Two-proportion score test");
    std::uint64_t x1 = 0, n1 = 0, x2 = 0, n2 = 0;
    scoretest->add_option("--x1", x1)->required();
    scoretest->add_option("--n1", n1)->required();
    scoretest->add_option("--x2", x2)->required();
    scoretest->add_option("--n2", n2)->required();

    auto* report = app.add_subcommand("report", "Before/after composition report");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    SynthSpec spec;
    synth->add_option("--retained", spec.retained);
    synth->add_option("--joins-before", spec.joins_before);
    synth->add_option("--joins-after", spec.joins_after);
    synth->add_option("--leaves-before", spec.leaves_before);
    synth->add_option("--leaves-after", spec.leaves_after);
    synth->add_option("--female-new-before", spec.female_new_before);
    synth->add_option("--female-new-after", spec.female_new_after);
    synth->add_option("--female-unf-before", spec.female_unf_before);
    synth->add_option("--female-unf-after", spec.female_unf_after);
    synth->add_option("--noise", spec.noise);
    bool bernoulli = false;
    synth->add_flag("--bernoulli", bernoulli, "Draw each gender independently instead of planting exact counts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    if (seed_opt->count() > 0) g.seed = seed_value;

    try {
        if (*ingest) cmd_ingest(g, files);
        else if (*diff_cmd) cmd_diff(g, before, after, list_ids);
        else if (*trans) cmd_transitions(g, at);
        else if (*label) cmd_label(g, balanced);
        else if (*prep) cmd_prep(g);
        else if (*train_cmd) cmd_train(g, tc);
        else if (*eval_cmd) cmd_eval(g, positive);
        else if (*classify) cmd_classify(g);
        else if (*scoretest) cmd_scoretest(g, x1, n1, x2, n2);
        else if (*report) cmd_report(g);
        else if (*synth) {
            if (bernoulli) spec.planting = SynthSpec::Planting::Bernoulli;
            cmd_synth(g, spec);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
