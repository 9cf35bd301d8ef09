#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "churnlens/error.hpp"
#include "churnlens/imageprep.hpp"
#include "churnlens/snapshots.hpp"

namespace churnlens {

/// One row of an image manifest: `user_id,image_path,byte_size[,x,y,w,h ...]`.
/// An empty box list means the face detector found nothing in the image.
struct ManifestEntry {
    UserId user_id = 0;
    std::filesystem::path image_path;  // resolved against the manifest directory
    std::size_t byte_size = 0;
    std::vector<FaceBox> boxes;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

class ImageManifest {
public:
    ImageManifest() = default;
    explicit ImageManifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (!index_.emplace(entries_[i].user_id, i).second) {
                throw Error(ErrorCode::MalformedManifest, "user " + std::to_string(entries_[i].user_id) +
                                                              " listed twice");
            }
        }
    }

    const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }

    const ManifestEntry* find(UserId id) const {
        const auto it = index_.find(id);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }

private:
    std::vector<ManifestEntry> entries_;
    std::unordered_map<UserId, std::size_t> index_;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

template <typename T>
bool parse_unsigned(std::string_view s, T& out) {
    s = trim(s);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return !s.empty() && ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

inline ImageManifest parse_manifest_text(std::string_view text, const std::filesystem::path& base_dir = {}) {
    std::vector<ManifestEntry> entries;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = detail::trim(text.substr(start, nl - start));
        start = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        if (line_no == 1 && line.rfind("user_id", 0) == 0) continue;

        const auto fields = detail::split_csv_line(line);
        const auto bad = [&](const std::string& why) {
            return Error(ErrorCode::MalformedManifest, "line " + std::to_string(line_no) + ": " + why, line_no);
        };
        if (fields.size() < 3 || (fields.size() - 3) % 4 != 0) throw bad("expected 3 + 4k fields");
        ManifestEntry e;
        if (!detail::parse_unsigned(fields[0], e.user_id)) throw bad("bad user_id");
        const std::string_view path = detail::trim(fields[1]);
        if (path.empty()) throw bad("empty image path");
        e.image_path = std::filesystem::path(std::string(path));
        if (e.image_path.is_relative() && !base_dir.empty()) e.image_path = base_dir / e.image_path;
        if (!detail::parse_unsigned(fields[2], e.byte_size)) throw bad("bad byte_size");
        for (std::size_t f = 3; f < fields.size(); f += 4) {
            FaceBox b;
            if (!detail::parse_unsigned(fields[f], b.x) || !detail::parse_unsigned(fields[f + 1], b.y) ||
                !detail::parse_unsigned(fields[f + 2], b.w) || !detail::parse_unsigned(fields[f + 3], b.h)) {
                throw bad("bad box quadruple");
            }
            if (b.w == 0 || b.h == 0) throw bad("zero-sized box");
            e.boxes.push_back(b);
        }
        entries.push_back(std::move(e));
    }
    return ImageManifest(std::move(entries));
}

inline ImageManifest load_manifest(const std::filesystem::path& path) {
    return parse_manifest_text(detail::read_file_bytes(path), path.parent_path());
}

/// Paths are written relative to `base_dir` when they live under it.
inline std::string manifest_to_text(const std::vector<ManifestEntry>& entries, const std::filesystem::path& base_dir = {}) {
    std::string out = "user_id,image_path,byte_size,boxes...\n";
    for (const auto& e : entries) {
        std::filesystem::path p = e.image_path;
        if (!base_dir.empty()) {
            const auto rel = p.lexically_relative(base_dir);
            if (!rel.empty() && rel.native().rfind("..", 0) != 0) p = rel;
        }
        out += std::to_string(e.user_id) + "," + p.generic_string() + "," + std::to_string(e.byte_size);
        for (const auto& b : e.boxes) {
            out += "," + std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) + "," +
                   std::to_string(b.h);
        }
        out += "\n";
    }
    return out;
}

}  // namespace churnlens
