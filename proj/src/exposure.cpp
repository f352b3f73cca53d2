#include "exposurelab/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"

namespace exposurelab::exposure {

namespace {

constexpr std::pair<Level, std::string_view> kLevelNames[] = {
    {Level::ability, "ability"},
    {Level::occupation8, "occupation8"},
    {Level::occupation6, "occupation6"},
    {Level::industry4, "industry4"},
    {Level::occ6_ind4, "occ6_ind4"},
    {Level::micro_occupation, "micro_occupation"},
    {Level::micro_industry, "micro_industry"},
};

std::string prefix(std::string_view code, std::size_t length) {
    return std::string(code.substr(0, std::min(length, code.size())));
}

}  // namespace

std::string_view to_string(Level level) {
    for (const auto& [l, name] : kLevelNames)
        if (l == level) return name;
    return "unknown";
}

Level level_from_string(std::string_view text) {
    for (const auto& [l, name] : kLevelNames)
        if (name == text) return l;
    throw DataError("unknown exposure level '" + std::string(text) + "'");
}

bool ExposureSeries::has(std::string_view entity, int year) const {
    if (year < first_year || year > last_year) return false;
    return values.contains(std::string(entity));
}

double ExposureSeries::at(std::string_view entity, int year) const {
    auto it = values.find(std::string(entity));
    if (it == values.end() || year < first_year || year > last_year)
        throw DataError("no " + std::string(to_string(level)) + " exposure for '" + std::string(entity) + "' in " +
                        std::to_string(year));
    return it->second[static_cast<std::size_t>(year - first_year)];
}

std::string cell_key(std::string_view occupation6, std::string_view industry4) {
    return std::string(occupation6) + "|" + std::string(industry4);
}

std::pair<std::string, std::string> split_cell_key(std::string_view key) {
    const auto bar = key.find('|');
    if (bar == std::string_view::npos) throw DataError("not an occupation|industry key: '" + std::string(key) + "'");
    return {std::string(key.substr(0, bar)), std::string(key.substr(bar + 1))};
}

std::string micro_key(const corpus::MicroTitle& title) { return title.code + ":" + title.title; }

std::string micro_code(std::string_view key) {
    const auto colon = key.find(':');
    if (colon == std::string_view::npos) throw DataError("not a micro-title key: '" + std::string(key) + "'");
    return std::string(key.substr(0, colon));
}

ExposureSeries cumulative_exposure(const std::vector<scoring::TagYearScores>& tag_scores,
                                   const semlink::TransitionMatrix& transition, corpus::YearRange years, Level level) {
    if (years.empty()) throw ValidationError("empty exposure year range");
    std::unordered_map<std::string, const scoring::TagYearScores*> by_tag;
    for (const auto& t : tag_scores) by_tag.emplace(t.tag_id, &t);

    std::vector<const scoring::TagYearScores*> column_scores(transition.col_ids.size(), nullptr);
    for (std::size_t c = 0; c < transition.col_ids.size(); ++c) {
        auto it = by_tag.find(transition.col_ids[c]);
        if (it != by_tag.end()) column_scores[c] = it->second;
    }

    // entries are sorted by (row, col); walk each row's run
    std::vector<std::vector<const semlink::TransitionEntry*>> by_row(transition.row_ids.size());
    for (const auto& e : transition.entries) by_row[e.row].push_back(&e);

    ExposureSeries out;
    out.level = level;
    out.first_year = years.first;
    out.last_year = years.last;
    const std::size_t n_years = out.years();
    for (std::size_t r = 0; r < transition.row_ids.size(); ++r) {
        std::vector<double> series(n_years, 0.0);
        double running = 0.0;
        std::vector<double> terms;
        for (std::size_t y = 0; y < n_years; ++y) {
            const int year = years.first + static_cast<int>(y);
            terms.clear();
            for (const auto* e : by_row[r])
                if (column_scores[e->col]) terms.push_back(column_scores[e->col]->at(year) * e->value);
            running += pairwise_sum(terms);
            series[y] = running;
        }
        out.values.emplace(transition.row_ids[r], std::move(series));
    }
    return out;
}

ExposureSeries ability_exposure(const std::vector<scoring::TagYearScores>& tag_scores,
                                const semlink::TransitionMatrix& transition, corpus::YearRange years) {
    return cumulative_exposure(tag_scores, transition, years, Level::ability);
}

ExposureSeries occupation_automation(const ExposureSeries& abilities,
                                     const std::vector<corpus::AbilityRequirement>& requirements,
                                     const corpus::ScaleBounds& importance, const corpus::ScaleBounds& level) {
    std::map<std::string, std::vector<const corpus::AbilityRequirement*>> by_occ;
    for (const auto& r : requirements) by_occ[r.occupation8].push_back(&r);

    ExposureSeries out;
    out.level = Level::occupation8;
    out.first_year = abilities.first_year;
    out.last_year = abilities.last_year;
    const std::size_t n_years = abilities.years();
    for (auto& [occ, reqs] : by_occ) {
        std::sort(reqs.begin(), reqs.end(), [](const auto* a, const auto* b) { return a->ability_id < b->ability_id; });
        std::vector<double> weights;
        std::vector<const std::vector<double>*> series;
        for (const auto* r : reqs) {
            auto it = abilities.values.find(r->ability_id);
            if (it == abilities.values.end())
                throw DataError("no exposure series for ability '" + r->ability_id + "'");
            weights.push_back(importance.rescale(r->importance) * level.rescale(r->level));
            series.push_back(&it->second);
        }
        const double total = pairwise_sum(weights);
        if (!(total > 0.0)) throw DataError("occupation " + occ + " has zero total ability weight");
        std::vector<double> values(n_years);
        std::vector<double> terms(weights.size());
        for (std::size_t y = 0; y < n_years; ++y) {
            for (std::size_t a = 0; a < weights.size(); ++a) terms[a] = (*series[a])[y] * weights[a];
            values[y] = pairwise_sum(terms) / total;
        }
        out.values.emplace(occ, std::move(values));
    }
    return out;
}

MicroExposure microtitle_exposure(const std::vector<scoring::TagYearScores>& tag_scores,
                                  const semlink::TransitionMatrix& transition_occupations,
                                  const semlink::TransitionMatrix& transition_industries, corpus::YearRange years) {
    return {cumulative_exposure(tag_scores, transition_occupations, years, Level::micro_occupation),
            cumulative_exposure(tag_scores, transition_industries, years, Level::micro_industry)};
}

Grouping prefix_grouping(Level target, std::size_t length, std::vector<std::string> universe,
                         std::vector<std::size_t> impute_prefixes) {
    Grouping g;
    g.target = target;
    g.universe = std::move(universe);
    g.impute_prefixes = std::move(impute_prefixes);
    g.parents = [length](std::string_view code) { return std::vector<std::string>{prefix(code, length)}; };
    return g;
}

Grouping crosswalk_grouping(Level target, const corpus::Crosswalk& crosswalk, std::vector<std::string> universe,
                            std::vector<std::size_t> impute_prefixes) {
    Grouping g;
    g.target = target;
    g.universe = std::move(universe);
    g.impute_prefixes = std::move(impute_prefixes);
    g.parents = [crosswalk](std::string_view code) {
        auto targets = crosswalk.targets(code);
        if (targets.empty()) targets.emplace_back(code);
        return targets;
    };
    return g;
}

Grouping micro_grouping(Level target, std::size_t code_length) {
    Grouping g;
    g.target = target;
    g.parents = [code_length](std::string_view key) {
        return std::vector<std::string>{prefix(micro_code(key), code_length)};
    };
    return g;
}

ExposureSeries aggregate(const ExposureSeries& series, const Grouping& grouping, bool impute, AggregateReport* report) {
    if (!grouping.parents) throw ValidationError("grouping without a parent mapping");
    const std::size_t n_years = series.years();

    // Fine values after imputation, keyed and iterated in sorted order.
    std::map<std::string, std::vector<double>> fine = series.values;
    AggregateReport local;
    if (impute) {
        std::vector<std::string> missing;
        for (const auto& code : grouping.universe)
            if (!series.values.contains(code)) missing.push_back(code);
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        for (const auto& code : missing) {
            bool filled = false;
            for (std::size_t len : grouping.impute_prefixes) {
                const auto stem = prefix(code, len);
                std::vector<const std::vector<double>*> siblings;
                for (const auto& [other, values] : series.values)
                    if (other.size() >= len && other.compare(0, len, stem) == 0) siblings.push_back(&values);
                if (siblings.empty()) continue;
                std::vector<double> mean(n_years);
                std::vector<double> column(siblings.size());
                for (std::size_t y = 0; y < n_years; ++y) {
                    for (std::size_t s = 0; s < siblings.size(); ++s) column[s] = (*siblings[s])[y];
                    mean[y] = pairwise_sum(column) / static_cast<double>(siblings.size());
                }
                fine.emplace(code, std::move(mean));
                filled = true;
                ++local.imputed;
                break;
            }
            if (!filled) throw DataError("cannot impute '" + code + "': no parent group has observed values");
        }
    }

    std::map<std::string, std::vector<const std::vector<double>*>> groups;
    for (const auto& [code, values] : fine) {
        const auto parents = grouping.parents(code);
        if (parents.empty()) throw DataError("entity '" + code + "' has no parent group");
        for (const auto& p : parents) groups[p].push_back(&values);
    }

    ExposureSeries out;
    out.level = grouping.target;
    out.first_year = series.first_year;
    out.last_year = series.last_year;
    for (const auto& [parent, members] : groups) {
        std::vector<double> mean(n_years);
        std::vector<double> column(members.size());
        for (std::size_t y = 0; y < n_years; ++y) {
            for (std::size_t m = 0; m < members.size(); ++m) column[m] = (*members[m])[y];
            mean[y] = pairwise_sum(column) / static_cast<double>(members.size());
        }
        out.values.emplace(parent, std::move(mean));
    }
    if (report) *report = local;
    return out;
}

ExposureSeries combine_augmentation(const ExposureSeries& occupations, const ExposureSeries& industries,
                                    const std::vector<std::pair<std::string, std::string>>& cells,
                                    CombineReport* report) {
    if (occupations.first_year != industries.first_year || occupations.last_year != industries.last_year)
        throw ValidationError("occupation and industry augmentation series cover different years");
    std::vector<std::pair<std::string, std::string>> wanted = cells;
    if (wanted.empty())
        for (const auto& [occ, _] : occupations.values)
            for (const auto& [ind, __] : industries.values) wanted.emplace_back(occ, ind);

    ExposureSeries out;
    out.level = Level::occ6_ind4;
    out.first_year = occupations.first_year;
    out.last_year = occupations.last_year;
    CombineReport local;
    for (const auto& [occ, ind] : wanted) {
        auto o = occupations.values.find(occ);
        auto i = industries.values.find(ind);
        if (o == occupations.values.end()) {
            ++local.missing_occupation;
            continue;
        }
        if (i == industries.values.end()) {
            ++local.missing_industry;
            continue;
        }
        std::vector<double> values(o->second.size());
        for (std::size_t y = 0; y < values.size(); ++y) values[y] = (i->second[y] + o->second[y]) / 2.0;
        out.values.emplace(cell_key(occ, ind), std::move(values));
    }
    if (report) *report = local;
    return out;
}

Moments sample_moments(const ExposureSeries& series, const Sample& sample) {
    std::vector<double> xs;
    if (sample) {
        for (const auto& [entity, year] : *sample) xs.push_back(series.at(entity, year));
    } else {
        for (const auto& [_, values] : series.values) xs.insert(xs.end(), values.begin(), values.end());
    }
    Moments m;
    m.count = xs.size();
    if (xs.size() < 2) throw NumericalError("standardization sample has fewer than 2 cells");
    m.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - m.mean) * (xs[i] - m.mean);
    m.sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(xs.size() - 1));
    return m;
}

ExposureSeries standardize(const ExposureSeries& series, const Sample& sample) {
    const auto m = sample_moments(series, sample);
    // Relative test: a constant series can leave rounding-level spread.
    if (!(m.sd > 1e-12 * std::max(1.0, std::abs(m.mean))))
        throw NumericalError("zero variance in " + std::string(to_string(series.level)) + " exposure sample");
    ExposureSeries out = series;
    for (auto& [_, values] : out.values)
        for (auto& v : values) v = (v - m.mean) / m.sd;
    out.standardized = true;
    return out;
}

ExposureSeries shift_years(const ExposureSeries& series, int lag) {
    ExposureSeries out = series;
    out.first_year += lag;
    out.last_year += lag;
    return out;
}

std::vector<semlink::LinkText> tag_link_texts(const corpus::TagStore& tags) {
    std::vector<semlink::LinkText> out;
    for (const auto& t : tags.ai_tags()) out.push_back({t.id, t.name, t.description});
    return out;
}

std::vector<semlink::LinkText> ability_link_texts(const std::vector<corpus::AbilityDescriptor>& abilities) {
    std::vector<semlink::LinkText> out;
    for (const auto& a : abilities) out.push_back({a.ability_id, a.name, a.description});
    return out;
}

std::vector<semlink::LinkText> micro_link_texts(const std::vector<corpus::MicroTitle>& titles, corpus::TitleKind kind) {
    std::map<std::string, std::string> unique;
    for (const auto& t : titles)
        if (t.kind == kind) unique.emplace(micro_key(t), t.title);
    std::vector<semlink::LinkText> out;
    for (const auto& [key, title] : unique) out.push_back({key, title, {}});
    return out;
}

AutomationResult automation_from_links(const std::vector<scoring::TagYearScores>& tag_scores,
                                       const semlink::TransitionMatrix& ability_links,
                                       const corpus::Taxonomies& taxonomies,
                                       const std::vector<std::string>& occupation_universe,
                                       const IndexOptions& options) {
    AutomationResult r;
    r.abilities = ability_exposure(tag_scores, ability_links, options.years);
    r.occ8 = occupation_automation(r.abilities, taxonomies.requirements, options.importance, options.level);
    // 8-digit -> 6-digit; missing 8-digit codes borrow from the 6-digit,
    // broad (5), minor (3) and major (2) group in turn.
    r.occ6 = aggregate(r.occ8, prefix_grouping(Level::occupation6, 6, occupation_universe, {6, 5, 3, 2}), true);
    if (!taxonomies.occupation_crosswalk.empty())
        r.occ6 = aggregate(r.occ6, crosswalk_grouping(Level::occupation6, taxonomies.occupation_crosswalk), false);
    return r;
}

AugmentationResult augmentation_from_links(const std::vector<scoring::TagYearScores>& tag_scores,
                                           const semlink::TransitionMatrix& occupation_links,
                                           const semlink::TransitionMatrix& industry_links,
                                           const corpus::Taxonomies& taxonomies, const IndexOptions& options) {
    const auto micro = microtitle_exposure(tag_scores, occupation_links, industry_links, options.years);
    AugmentationResult r;
    r.occupation6 = aggregate(micro.occupations, micro_grouping(Level::occupation6, 6), false);
    if (!taxonomies.occupation_crosswalk.empty())
        r.occupation6 =
            aggregate(r.occupation6, crosswalk_grouping(Level::occupation6, taxonomies.occupation_crosswalk), false);
    r.industry4 = aggregate(micro.industries, micro_grouping(Level::industry4, 4), false);
    if (!taxonomies.industry_crosswalk.empty())
        r.industry4 = aggregate(r.industry4, crosswalk_grouping(Level::industry4, taxonomies.industry_crosswalk), false);
    r.cells = combine_augmentation(r.occupation6, r.industry4);
    return r;
}

IndexBundle build_indices(const IndexInputs& inputs, const IndexOptions& options) {
    if (!inputs.text_embeddings) throw ValidationError("index construction needs an embedding store");
    if (options.years.last > options.end_year)
        throw ValidationError("exposure years extend past the scoring end year");
    const auto ai_posts = corpus::select_ai_posts(inputs.posts, inputs.tags);
    if (ai_posts.empty()) throw DataError("corpus has no AI-related posts");

    IndexBundle b;
    b.tag_scores =
        scoring::tag_year_scores(scoring::smooth_question_scores(ai_posts, options.decay, options.end_year), ai_posts);

    const auto tags = tag_link_texts(inputs.tags);
    const auto& store = *inputs.text_embeddings;
    b.ability_links = semlink::link_entities(ability_link_texts(inputs.taxonomies.abilities), tags, store,
                                             options.quantile, options.threads);
    b.occupation_title_links =
        semlink::link_entities(micro_link_texts(inputs.taxonomies.microtitles, corpus::TitleKind::occupation), tags,
                               store, options.quantile, options.threads);
    b.industry_title_links =
        semlink::link_entities(micro_link_texts(inputs.taxonomies.microtitles, corpus::TitleKind::industry), tags,
                               store, options.quantile, options.threads);

    auto automation = automation_from_links(b.tag_scores, b.ability_links, inputs.taxonomies,
                                            inputs.occupation_universe, options);
    b.abilities = std::move(automation.abilities);
    b.automation_occ8 = std::move(automation.occ8);
    b.automation = std::move(automation.occ6);

    auto augmentation = augmentation_from_links(b.tag_scores, b.occupation_title_links, b.industry_title_links,
                                                inputs.taxonomies, options);
    b.augm_occupation = std::move(augmentation.occupation6);
    b.augm_industry = std::move(augmentation.industry4);
    b.augmentation = std::move(augmentation.cells);
    return b;
}

Instruments build_instrument(const IndexInputs& iv_inputs, const IndexOptions& iv_options, int lag) {
    if (lag < 0) throw ValidationError("instrument lag must be >= 0");
    if (iv_inputs.posts.empty()) throw DataError("instrument corpus is empty");
    const auto bundle = build_indices(iv_inputs, iv_options);
    return {shift_years(bundle.automation, lag), shift_years(bundle.augmentation, lag)};
}

void write_series(std::ostream& out, const ExposureSeries& series) {
    csv::Writer w(out);
    w.row({"entity_key", "year", "value", "standardized_flag"});
    for (const auto& [entity, values] : series.values)
        for (std::size_t y = 0; y < values.size(); ++y)
            w.row({entity, std::to_string(series.first_year + static_cast<int>(y)), format_exact(values[y]),
                   series.standardized ? "1" : "0"});
}

ExposureSeries read_series(const std::filesystem::path& path, Level level) {
    const auto table = csv::read(path);
    const auto c_key = table.column("entity_key");
    const auto c_year = table.column("year");
    const auto c_value = table.column("value");
    const auto c_flag = table.column("standardized_flag");
    std::map<std::string, std::map<int, double>> cells;
    ExposureSeries out;
    out.level = level;
    bool first = true;
    int lo = 0;
    int hi = -1;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        int year = 0;
        double value = 0.0;
        try {
            year = std::stoi(row[c_year]);
            value = std::stod(row[c_value]);
        } catch (const std::exception&) {
            throw DataError(table.where(r) + ": bad year or value");
        }
        if (!cells[row[c_key]].emplace(year, value).second)
            throw DataError(table.where(r) + ": duplicate cell (" + row[c_key] + ", " + row[c_year] + ")");
        out.standardized = row[c_flag] == "1";
        lo = first ? year : std::min(lo, year);
        hi = first ? year : std::max(hi, year);
        first = false;
    }
    out.first_year = lo;
    out.last_year = hi;
    for (auto& [key, by_year] : cells) {
        if (by_year.size() != out.years())
            throw DataError(path.string() + ": entity '" + key + "' does not cover every year");
        std::vector<double> values;
        for (const auto& [_, v] : by_year) values.push_back(v);
        out.values.emplace(key, std::move(values));
    }
    return out;
}

}  // namespace exposurelab::exposure
