#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "churnlens/error.hpp"

namespace churnlens {

/// Class indices used by the classifier: Male = 0, Female = 1.
enum class WeakLabel { Male, Female, Unknown };

inline std::string_view to_string(WeakLabel label) noexcept {
    switch (label) {
    case WeakLabel::Male: return "male";
    case WeakLabel::Female: return "female";
    case WeakLabel::Unknown: return "unknown";
    }
    return "unknown";
}

inline WeakLabel label_from_string(std::string_view s) {
    if (s == "male" || s == "Male" || s == "m" || s == "0") return WeakLabel::Male;
    if (s == "female" || s == "Female" || s == "f" || s == "1") return WeakLabel::Female;
    return WeakLabel::Unknown;
}

inline int class_index(WeakLabel label) {
    if (label == WeakLabel::Unknown) throw Error(ErrorCode::InvalidConfig, "unknown label has no class index");
    return label == WeakLabel::Male ? 0 : 1;
}

inline WeakLabel label_from_class(int index) { return index == 0 ? WeakLabel::Male : WeakLabel::Female; }

namespace detail {

// Bytes >= 0x80 belong to multi-byte UTF-8 sequences; treat them as letters so
// accented given names survive tokenization.
inline bool is_name_byte(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80; }

inline std::string ascii_fold(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

}  // namespace detail

/// Lookup key for a display name: the first whitespace-delimited token,
/// leading non-letters dropped, cut at the first non-letter, ASCII case-folded.
/// "emily_r" -> "emily", "@James." -> "james".
inline std::string name_key(std::string_view display_name) {
    std::size_t i = 0;
    const auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < display_name.size() && is_ws(display_name[i])) ++i;
    std::size_t token_end = i;
    while (token_end < display_name.size() && !is_ws(display_name[token_end])) ++token_end;
    std::string_view token = display_name.substr(i, token_end - i);
    while (!token.empty() && !detail::is_name_byte(static_cast<unsigned char>(token.front()))) token.remove_prefix(1);
    std::size_t n = 0;
    while (n < token.size() && detail::is_name_byte(static_cast<unsigned char>(token[n]))) ++n;
    return detail::ascii_fold(token.substr(0, n));
}

class NameLexicon {
public:
    NameLexicon() = default;

    /// Names are case-folded; a name present in both lists is rejected.
    NameLexicon(const std::vector<std::string>& male, const std::vector<std::string>& female) {
        for (const auto& n : male) {
            auto key = name_key(n);
            if (!key.empty()) male_.insert(std::move(key));
        }
        for (const auto& n : female) {
            auto key = name_key(n);
            if (key.empty()) continue;
            if (male_.count(key) != 0) throw Error(ErrorCode::AmbiguousName, "'" + key + "' is in both lists");
            female_.insert(std::move(key));
        }
    }

    /// The nine example names the original study quotes.
    static NameLexicon defaults() {
        return NameLexicon({"James", "John", "Luke", "Michael"}, {"Caroline", "Elizabeth", "Emily", "Isabella", "Maria"});
    }

    /// One name per line; blank lines and `#` comments ignored.
    static NameLexicon load(const std::filesystem::path& male_file, const std::filesystem::path& female_file) {
        return NameLexicon(read_names(male_file), read_names(female_file));
    }

    const std::set<std::string>& male_names() const noexcept { return male_; }
    const std::set<std::string>& female_names() const noexcept { return female_; }

    WeakLabel lookup(const std::string& key) const {
        if (male_.count(key) != 0) return WeakLabel::Male;
        if (female_.count(key) != 0) return WeakLabel::Female;
        return WeakLabel::Unknown;
    }

private:
    static std::vector<std::string> read_names(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::Io, "cannot open lexicon " + path.string());
        std::vector<std::string> names;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            names.push_back(line);
        }
        return names;
    }

    std::set<std::string> male_;
    std::set<std::string> female_;
};

inline WeakLabel weak_label(std::string_view display_name, const NameLexicon& lexicon) {
    const std::string key = name_key(display_name);
    if (key.empty()) return WeakLabel::Unknown;
    return lexicon.lookup(key);
}

template <typename Item>
struct Labeled {
    Item item;
    WeakLabel label;

    friend bool operator==(const Labeled&, const Labeled&) = default;
};

/// Drops Unknown items and downsamples the majority class uniformly at random
/// to the minority count. Surviving items keep their input order, males and
/// females interleaved as they were, so equal-sized classes come back
/// unchanged.
template <typename Item>
std::vector<Labeled<Item>> build_balanced_set(const std::vector<Labeled<Item>>& pool, std::uint64_t seed) {
    std::vector<std::size_t> male, female;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].label == WeakLabel::Male) male.push_back(i);
        if (pool[i].label == WeakLabel::Female) female.push_back(i);
    }
    if (male.empty() || female.empty()) {
        throw Error(ErrorCode::EmptyClass, "balanced set needs both classes (male=" + std::to_string(male.size()) +
                                               ", female=" + std::to_string(female.size()) + ")");
    }
    std::vector<std::size_t>& majority = male.size() > female.size() ? male : female;
    const std::size_t keep = std::min(male.size(), female.size());
    if (majority.size() > keep) {
        std::mt19937_64 rng(seed);
        // Partial Fisher-Yates: the first `keep` slots become a uniform sample.
        for (std::size_t i = 0; i < keep; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, majority.size() - 1);
            std::swap(majority[i], majority[pick(rng)]);
        }
        majority.resize(keep);
    }
    std::vector<std::size_t> chosen = male;
    chosen.insert(chosen.end(), female.begin(), female.end());
    std::sort(chosen.begin(), chosen.end());
    std::vector<Labeled<Item>> out;
    out.reserve(chosen.size());
    for (const std::size_t i : chosen) out.push_back(pool[i]);
    return out;
}

/// Keeps the first occurrence of each ID; `id_of` maps an item to its user ID.
template <typename Item, typename IdOf>
std::vector<Item> dedupe_by_id(const std::vector<Item>& items, IdOf id_of) {
    std::unordered_set<std::uint64_t> seen;
    std::vector<Item> out;
    for (const auto& item : items) {
        if (seen.insert(id_of(item)).second) out.push_back(item);
    }
    return out;
}

}  // namespace churnlens
