#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "churnlens/cnn/train.hpp"
#include "churnlens/error.hpp"
#include "churnlens/manifest.hpp"
#include "churnlens/pipeline.hpp"
#include "churnlens/snapshots.hpp"
#include "churnlens/weaklabel.hpp"

namespace churnlens {

namespace detail {

/// Two-column `user_id,value` table with a header line. The value is the
/// rest of the line, so it may itself contain commas.
inline std::map<UserId, std::string> load_id_table(const std::filesystem::path& path, std::string_view header_prefix) {
    const std::string text = read_file_bytes(path);
    std::map<UserId, std::string> out;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        const std::string_view line = trim(std::string_view(text).substr(start, nl - start));
        start = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        if (line_no == 1 && line.substr(0, header_prefix.size()) == header_prefix) continue;
        const auto comma = line.find(',');
        UserId id = 0;
        if (comma == std::string_view::npos || !parse_unsigned(line.substr(0, comma), id)) {
            throw Error(ErrorCode::MalformedManifest, path.string() + ": line " + std::to_string(line_no), line_no);
        }
        if (!out.emplace(id, std::string(line.substr(comma + 1))).second) {
            throw Error(ErrorCode::MalformedManifest,
                        path.string() + ": duplicate user " + std::to_string(id) + " on line " + std::to_string(line_no),
                        line_no);
        }
    }
    return out;
}

}  // namespace detail

/// `user_id,display_name`
inline std::map<UserId, std::string> load_display_names(const std::filesystem::path& path) {
    return detail::load_id_table(path, "user_id");
}

/// `user_id,gender` with gender in {male, female}.
inline std::map<UserId, WeakLabel> load_label_table(const std::filesystem::path& path) {
    std::map<UserId, WeakLabel> out;
    for (const auto& [id, text] : detail::load_id_table(path, "user_id")) {
        const WeakLabel label = label_from_string(detail::trim(text));
        if (label == WeakLabel::Unknown) {
            throw Error(ErrorCode::MalformedManifest, path.string() + ": user " + std::to_string(id) + " has label '" +
                                                          text + "'");
        }
        out[id] = label;
    }
    return out;
}

struct TrainingSet {
    std::vector<cnn::Example> examples;
    std::vector<UserId> ids;  // parallel to examples
    std::size_t labeled = 0;  // users with a Male/Female weak label
    std::map<Fate, std::size_t> drops;
};

/// Weakly labels users by display name, preprocesses their faces, then
/// balances the classes among the faces that survived preprocessing.
inline TrainingSet build_training_set(const std::map<UserId, std::string>& names, const NameLexicon& lexicon,
                                      const ImageManifest& manifest, const PrepOptions& prep, std::uint64_t seed,
                                      const ImageLoader& loader = load_manifest_image) {
    struct Item {
        UserId id;
        FaceTensor face;
    };
    TrainingSet out;
    std::vector<Labeled<Item>> pool;
    for (const auto& [id, name] : names) {
        const WeakLabel label = weak_label(name, lexicon);
        if (label == WeakLabel::Unknown) continue;
        ++out.labeled;
        auto prepared = prepare_face(manifest.find(id), prep, loader);
        if (const Fate* f = std::get_if<Fate>(&prepared)) {
            ++out.drops[*f];
            continue;
        }
        pool.push_back({Item{id, std::get<FaceTensor>(prepared)}, label});
    }
    for (auto& l : build_balanced_set(pool, seed)) {
        out.ids.push_back(l.item.id);
        out.examples.push_back({l.item.face, class_index(l.label)});
    }
    return out;
}

/// Ground-truth examples for every labeled user whose face survives
/// preprocessing; no balancing.
inline std::vector<cnn::Example> build_labeled_examples(const std::map<UserId, WeakLabel>& labels,
                                                        const ImageManifest& manifest, const PrepOptions& prep,
                                                        const ImageLoader& loader = load_manifest_image) {
    std::vector<cnn::Example> out;
    for (const auto& [id, label] : labels) {
        auto prepared = prepare_face(manifest.find(id), prep, loader);
        if (std::holds_alternative<FaceTensor>(prepared)) {
            out.push_back({std::get<FaceTensor>(prepared), class_index(label)});
        }
    }
    return out;
}

}  // namespace churnlens
