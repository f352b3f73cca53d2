#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace exposurelab::corpus {

struct YearRange {
    int first = 0;
    int last = 0;

    bool contains(int year) const { return year >= first && year <= last; }
    bool empty() const { return last < first; }
    bool operator==(const YearRange&) const = default;
};

/// One tagged question. `votes_final` is the net vote count at the corpus
/// snapshot; negative totals are kept here and dropped by scoring.
struct Post {
    std::string id;
    int year_posted = 0;
    std::int64_t votes_final = 0;
    std::vector<std::string> tag_ids;
    std::string country;

    bool operator==(const Post&) const = default;
};

struct Tag {
    std::string id;
    std::string name;
    std::string description;
    bool is_ai = false;

    /// Text used for the description-based similarity matrix.
    const std::string& description_or_name() const { return description.empty() ? name : description; }
    bool operator==(const Tag&) const = default;
};

class TagStore {
public:
    TagStore() = default;
    explicit TagStore(std::vector<Tag> tags);

    const Tag* find(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }
    const std::vector<Tag>& tags() const { return tags_; }
    std::vector<Tag> ai_tags() const;
    /// AI tags whose description is empty (they fall back to their name).
    const std::vector<std::string>& flagged_empty_description() const { return flagged_; }

    bool operator==(const TagStore& other) const { return tags_ == other.tags_; }

private:
    std::vector<Tag> tags_;  // sorted by id
    std::vector<std::string> flagged_;
};

struct AbilityDescriptor {
    std::string ability_id;
    std::string name;
    std::string description;

    const std::string& description_or_name() const { return description.empty() ? name : description; }
    bool operator==(const AbilityDescriptor&) const = default;
};

struct ScaleBounds {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double x) const { return x >= lo && x <= hi; }
    double rescale(double x) const { return (x - lo) / (hi - lo); }
    bool operator==(const ScaleBounds&) const = default;
};

struct AbilityRequirement {
    std::string occupation8;
    std::string ability_id;
    double importance = 0.0;
    double level = 0.0;

    bool operator==(const AbilityRequirement&) const = default;
};

enum class TitleKind { occupation, industry };

std::string_view to_string(TitleKind kind);

struct MicroTitle {
    std::string title;
    TitleKind kind = TitleKind::occupation;
    std::string code;
    int vintage = 0;

    bool operator==(const MicroTitle&) const = default;
};

struct CrosswalkRow {
    std::string from_code;
    std::string to_code;
    double weight = 0.0;

    bool operator==(const CrosswalkRow&) const = default;
};

/// Code-to-code mapping with shares; shares out of every source code sum to 1.
class Crosswalk {
public:
    Crosswalk() = default;
    explicit Crosswalk(std::vector<CrosswalkRow> rows);

    const std::vector<CrosswalkRow>& rows() const { return rows_; }
    bool empty() const { return rows_.empty(); }
    /// Targets with positive weight; empty when the code is not mapped.
    std::vector<std::string> targets(std::string_view from_code) const;

    bool operator==(const Crosswalk& other) const { return rows_ == other.rows_; }

private:
    std::vector<CrosswalkRow> rows_;  // sorted by (from, to)
};

struct PostFilter {
    std::set<std::string> countries;
    YearRange years;
};

struct PostLoadReport {
    std::size_t read = 0;
    std::size_t retained = 0;
    std::size_t outside_countries = 0;
    std::size_t outside_years = 0;
    std::size_t unknown_country = 0;
    std::size_t few_tags = 0;  // 1-2 tags: accepted, counted
};

bool is_iso_country(std::string_view code);

TagStore load_tags(const std::filesystem::path& path);

/// Reads posts.jsonl and keeps posts inside `filter`. Throws DataError on a
/// malformed line (with its line number) and on tag ids unknown to `tags`.
std::vector<Post> load_posts(const std::filesystem::path& path, const PostFilter& filter, const TagStore& tags,
                             PostLoadReport* report = nullptr);

std::vector<Post> filter_posts(const std::vector<Post>& posts, const PostFilter& filter,
                               PostLoadReport* report = nullptr);

/// Posts carrying at least one AI tag.
std::vector<Post> select_ai_posts(const std::vector<Post>& posts, const TagStore& tags);

std::vector<AbilityDescriptor> load_abilities(const std::filesystem::path& path);
std::vector<AbilityRequirement> load_requirements(const std::filesystem::path& path,
                                                  const std::vector<AbilityDescriptor>& abilities,
                                                  const ScaleBounds& importance, const ScaleBounds& level);
std::vector<MicroTitle> load_microtitles(const std::filesystem::path& path);
Crosswalk load_crosswalk(const std::filesystem::path& path);
/// Validates an in-memory crosswalk (shares per source code sum to 1 +- 1e-9).
Crosswalk make_crosswalk(std::vector<CrosswalkRow> rows, std::string_view source = "crosswalk");

struct TaxonomyPaths {
    std::filesystem::path abilities;
    std::filesystem::path ability_scores;
    std::filesystem::path microtitles;
    std::optional<std::filesystem::path> occupation_crosswalk;
    std::optional<std::filesystem::path> industry_crosswalk;
    ScaleBounds importance{1.0, 5.0};
    ScaleBounds level{0.0, 7.0};
};

struct Taxonomies {
    std::vector<AbilityDescriptor> abilities;
    std::vector<AbilityRequirement> requirements;
    std::vector<MicroTitle> microtitles;
    Crosswalk occupation_crosswalk;
    Crosswalk industry_crosswalk;

    bool operator==(const Taxonomies&) const = default;
};

Taxonomies load_taxonomies(const TaxonomyPaths& paths);

}  // namespace exposurelab::corpus
