#include "exposurelab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"

namespace exposurelab::corpus {

namespace {

// ISO-3166-1 alpha-2, officially assigned codes.
constexpr std::string_view kIsoCodes =
    "AD AE AF AG AI AL AM AO AQ AR AS AT AU AW AX AZ BA BB BD BE BF BG BH BI BJ BL BM BN BO BQ BR BS BT BV BW "
    "BY BZ CA CC CD CF CG CH CI CK CL CM CN CO CR CU CV CW CX CY CZ DE DJ DK DM DO DZ EC EE EG EH ER ES ET FI "
    "FJ FK FM FO FR GA GB GD GE GF GG GH GI GL GM GN GP GQ GR GS GT GU GW GY HK HM HN HR HT HU ID IE IL IM IN "
    "IO IQ IR IS IT JE JM JO JP KE KG KH KI KM KN KP KR KW KY KZ LA LB LC LI LK LR LS LT LU LV LY MA MC MD ME "
    "MF MG MH MK ML MM MN MO MP MQ MR MS MT MU MV MW MX MY MZ NA NC NE NF NG NI NL NO NP NR NU NZ OM PA PE PF "
    "PG PH PK PL PM PN PR PS PT PW PY QA RE RO RS RU RW SA SB SC SD SE SG SH SI SJ SK SL SM SN SO SR SS ST SV "
    "SX SY SZ TC TD TF TG TH TJ TK TL TM TN TO TR TT TV TW TZ UA UG UM US UY UZ VA VC VE VG VI VN VU WF WS YE "
    "YT ZA ZM ZW";

const std::unordered_set<std::string>& iso_codes() {
    static const std::unordered_set<std::string> codes = [] {
        std::unordered_set<std::string> out;
        for (const auto& c : split(kIsoCodes, ' ')) out.insert(c);
        return out;
    }();
    return codes;
}

bool parse_bool01(const std::string& text, const std::string& where) {
    const auto t = trim(text);
    if (t == "1") return true;
    if (t == "0") return false;
    throw DataError(where + ": is_ai must be 0 or 1, got '" + t + "'");
}

double parse_double(const std::string& text, const std::string& where, std::string_view field) {
    const auto t = trim(text);
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError(where + ": bad " + std::string(field) + " '" + t + "'");
    }
}

int parse_int(const std::string& text, const std::string& where, std::string_view field) {
    const auto t = trim(text);
    try {
        std::size_t used = 0;
        const int v = std::stoi(t, &used);
        if (used != t.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError(where + ": bad " + std::string(field) + " '" + t + "'");
    }
}

std::string list_first(const std::vector<std::string>& items, std::size_t limit = 10) {
    std::vector<std::string> head(items.begin(), items.begin() + std::min(items.size(), limit));
    auto out = join(head, ", ");
    if (items.size() > limit) out += ", ... (" + std::to_string(items.size()) + " total)";
    return out;
}

}  // namespace

std::string_view to_string(TitleKind kind) { return kind == TitleKind::occupation ? "occupation" : "industry"; }

bool is_iso_country(std::string_view code) { return iso_codes().contains(std::string(code)); }

TagStore::TagStore(std::vector<Tag> tags) : tags_(std::move(tags)) {
    std::sort(tags_.begin(), tags_.end(), [](const Tag& a, const Tag& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < tags_.size(); ++i)
        if (tags_[i].id == tags_[i - 1].id) throw DataError("duplicate tag id '" + tags_[i].id + "'");
    for (const auto& t : tags_)
        if (t.is_ai && trim(t.description).empty()) flagged_.push_back(t.id);
}

const Tag* TagStore::find(std::string_view id) const {
    auto it = std::lower_bound(tags_.begin(), tags_.end(), id, [](const Tag& t, std::string_view k) { return t.id < k; });
    if (it == tags_.end() || it->id != id) return nullptr;
    return &*it;
}

std::vector<Tag> TagStore::ai_tags() const {
    std::vector<Tag> out;
    std::copy_if(tags_.begin(), tags_.end(), std::back_inserter(out), [](const Tag& t) { return t.is_ai; });
    return out;
}

Crosswalk::Crosswalk(std::vector<CrosswalkRow> rows) : rows_(std::move(rows)) {
    std::sort(rows_.begin(), rows_.end(), [](const CrosswalkRow& a, const CrosswalkRow& b) {
        return std::tie(a.from_code, a.to_code) < std::tie(b.from_code, b.to_code);
    });
}

std::vector<std::string> Crosswalk::targets(std::string_view from_code) const {
    std::vector<std::string> out;
    auto it = std::lower_bound(rows_.begin(), rows_.end(), from_code,
                               [](const CrosswalkRow& r, std::string_view k) { return r.from_code < k; });
    for (; it != rows_.end() && it->from_code == from_code; ++it)
        if (it->weight > 0.0) out.push_back(it->to_code);
    return out;
}

TagStore load_tags(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_id = table.column("id");
    const auto c_name = table.column("name");
    const auto c_desc = table.column("description");
    const auto c_ai = table.column("is_ai");
    std::vector<Tag> tags;
    tags.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        Tag tag{trim(row[c_id]), row[c_name], row[c_desc], parse_bool01(row[c_ai], table.where(r))};
        if (tag.id.empty()) throw DataError(table.where(r) + ": empty tag id");
        tags.push_back(std::move(tag));
    }
    TagStore store(std::move(tags));
    if (!store.flagged_empty_description().empty())
        warn("AI tags without description (name used instead): " + list_first(store.flagged_empty_description()));
    return store;
}

std::vector<Post> filter_posts(const std::vector<Post>& posts, const PostFilter& filter, PostLoadReport* report) {
    if (filter.countries.empty()) throw ValidationError("empty country filter");
    if (filter.years.empty()) throw ValidationError("empty year range");
    PostLoadReport local;
    std::vector<Post> out;
    for (const auto& post : posts) {
        ++local.read;
        if (!is_iso_country(post.country)) {
            ++local.unknown_country;
            continue;
        }
        if (!filter.countries.contains(post.country)) {
            ++local.outside_countries;
            continue;
        }
        if (!filter.years.contains(post.year_posted)) {
            ++local.outside_years;
            continue;
        }
        if (post.tag_ids.size() < 3) ++local.few_tags;
        out.push_back(post);
    }
    local.retained = out.size();
    if (local.unknown_country) warn(std::to_string(local.unknown_country) + " posts with unknown country code excluded");
    if (report) *report = local;
    return out;
}

std::vector<Post> load_posts(const std::filesystem::path& path, const PostFilter& filter, const TagStore& tags,
                             PostLoadReport* report) {
    if (filter.countries.empty()) throw ValidationError("empty country filter");
    if (filter.years.empty()) throw ValidationError("empty year range");
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());

    std::vector<Post> posts;
    std::unordered_set<std::string> seen;
    std::vector<std::string> unknown_tags;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        Post post;
        try {
            const auto j = nlohmann::json::parse(line);
            post.id = j.at("id").get<std::string>();
            post.year_posted = j.at("year").get<int>();
            post.votes_final = j.at("votes").get<std::int64_t>();
            post.tag_ids = j.at("tags").get<std::vector<std::string>>();
            post.country = j.at("country").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": malformed record: " + e.what());
        }
        if (post.id.empty()) throw DataError(where + ": empty post id");
        if (post.tag_ids.empty() || post.tag_ids.size() > 5)
            throw DataError(where + ": post '" + post.id + "' has " + std::to_string(post.tag_ids.size()) +
                            " tags (expected 1-5)");
        if (!seen.insert(post.id).second) throw DataError(where + ": duplicate post id '" + post.id + "'");
        for (const auto& t : post.tag_ids)
            if (!tags.contains(t)) unknown_tags.push_back(t);
        posts.push_back(std::move(post));
    }
    if (!unknown_tags.empty()) {
        std::sort(unknown_tags.begin(), unknown_tags.end());
        unknown_tags.erase(std::unique(unknown_tags.begin(), unknown_tags.end()), unknown_tags.end());
        throw DataError(path.string() + ": unknown tag ids: " + list_first(unknown_tags));
    }
    auto out = filter_posts(posts, filter, report);
    if (report && report->few_tags)
        warn(std::to_string(report->few_tags) + " retained posts carry fewer than 3 tags");
    return out;
}

std::vector<Post> select_ai_posts(const std::vector<Post>& posts, const TagStore& tags) {
    std::vector<Post> out;
    for (const auto& post : posts) {
        const bool ai = std::any_of(post.tag_ids.begin(), post.tag_ids.end(), [&](const std::string& id) {
            const Tag* t = tags.find(id);
            return t && t->is_ai;
        });
        if (ai) out.push_back(post);
    }
    return out;
}

std::vector<AbilityDescriptor> load_abilities(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_id = table.column("ability_id");
    const auto c_name = table.column("name");
    const auto c_desc = table.column("description");
    std::vector<AbilityDescriptor> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        AbilityDescriptor a{trim(row[c_id]), row[c_name], row[c_desc]};
        if (a.ability_id.empty()) throw DataError(table.where(r) + ": empty ability_id");
        out.push_back(std::move(a));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ability_id < b.ability_id; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].ability_id == out[i - 1].ability_id)
            throw DataError(path.string() + ": duplicate ability_id '" + out[i].ability_id + "'");
    return out;
}

std::vector<AbilityRequirement> load_requirements(const std::filesystem::path& path,
                                                  const std::vector<AbilityDescriptor>& abilities,
                                                  const ScaleBounds& importance, const ScaleBounds& level) {
    if (!(importance.hi > importance.lo) || !(level.hi > level.lo))
        throw ValidationError("scale bounds must satisfy lo < hi");
    std::unordered_set<std::string> known;
    for (const auto& a : abilities) known.insert(a.ability_id);

    const auto table = csv::read(path);
    const auto c_occ = table.column("occupation8");
    const auto c_ab = table.column("ability_id");
    const auto c_imp = table.column("importance");
    const auto c_lvl = table.column("level");
    std::vector<AbilityRequirement> out;
    std::vector<std::string> dangling;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto where = table.where(r);
        AbilityRequirement req{trim(row[c_occ]), trim(row[c_ab]), parse_double(row[c_imp], where, "importance"),
                               parse_double(row[c_lvl], where, "level")};
        if (req.occupation8.size() != 8 || !is_digits(req.occupation8))
            throw DataError(where + ": occupation8 must be 8 digits, got '" + req.occupation8 + "'");
        if (!importance.contains(req.importance))
            throw DataError(where + ": importance " + format_exact(req.importance) + " outside declared bounds");
        if (!level.contains(req.level))
            throw DataError(where + ": level " + format_exact(req.level) + " outside declared bounds");
        if (!known.contains(req.ability_id)) dangling.push_back(req.ability_id);
        out.push_back(std::move(req));
    }
    if (!dangling.empty()) {
        std::sort(dangling.begin(), dangling.end());
        dangling.erase(std::unique(dangling.begin(), dangling.end()), dangling.end());
        throw DataError(path.string() + ": requirements reference unknown ability ids: " + list_first(dangling));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.occupation8, a.ability_id) < std::tie(b.occupation8, b.ability_id);
    });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].occupation8 == out[i - 1].occupation8 && out[i].ability_id == out[i - 1].ability_id)
            throw DataError(path.string() + ": duplicate requirement (" + out[i].occupation8 + ", " +
                            out[i].ability_id + ")");
    return out;
}

std::vector<MicroTitle> load_microtitles(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_title = table.column("title");
    const auto c_kind = table.column("kind");
    const auto c_code = table.column("code");
    const auto c_vintage = table.column("vintage");
    std::vector<MicroTitle> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto where = table.where(r);
        MicroTitle m;
        m.title = trim(row[c_title]);
        if (m.title.empty()) throw DataError(where + ": empty micro-title");
        const auto kind = trim(row[c_kind]);
        if (kind == "occupation")
            m.kind = TitleKind::occupation;
        else if (kind == "industry")
            m.kind = TitleKind::industry;
        else
            throw DataError(where + ": kind must be occupation or industry, got '" + kind + "'");
        m.code = trim(row[c_code]);
        const bool ok = m.kind == TitleKind::occupation ? (m.code.size() == 6 && is_digits(m.code))
                                                         : (m.code.size() >= 2 && m.code.size() <= 6 && is_digits(m.code));
        if (!ok) throw DataError(where + ": code '" + m.code + "' invalid for kind " + kind);
        m.vintage = parse_int(row[c_vintage], where, "vintage");
        out.push_back(std::move(m));
    }
    return out;
}

Crosswalk make_crosswalk(std::vector<CrosswalkRow> rows, std::string_view source) {
    std::map<std::string, std::vector<double>> shares;
    for (const auto& r : rows) {
        if (!(r.weight >= 0.0 && r.weight <= 1.0))
            throw DataError(std::string(source) + ": weight " + format_exact(r.weight) + " for " + r.from_code +
                            " outside [0,1]");
        shares[r.from_code].push_back(r.weight);
    }
    std::vector<std::string> bad;
    for (const auto& [code, ws] : shares) {
        const double total = pairwise_sum(ws);
        if (std::abs(total - 1.0) > 1e-9) bad.push_back(code + " (sum " + format_exact(total) + ")");
    }
    if (!bad.empty())
        throw DataError(std::string(source) + ": crosswalk weights do not sum to 1 for: " + list_first(bad));
    return Crosswalk(std::move(rows));
}

Crosswalk load_crosswalk(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_from = table.column("from_code");
    const auto c_to = table.column("to_code");
    const auto c_w = table.column("weight");
    std::vector<CrosswalkRow> rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        rows.push_back({trim(row[c_from]), trim(row[c_to]), parse_double(row[c_w], table.where(r), "weight")});
    }
    return make_crosswalk(std::move(rows), path.string());
}

Taxonomies load_taxonomies(const TaxonomyPaths& paths) {
    Taxonomies t;
    t.abilities = load_abilities(paths.abilities);
    t.requirements = load_requirements(paths.ability_scores, t.abilities, paths.importance, paths.level);
    t.microtitles = load_microtitles(paths.microtitles);
    if (paths.occupation_crosswalk) t.occupation_crosswalk = load_crosswalk(*paths.occupation_crosswalk);
    if (paths.industry_crosswalk) t.industry_crosswalk = load_crosswalk(*paths.industry_crosswalk);
    return t;
}

}  // namespace exposurelab::corpus
