#include "exposurelab/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"

namespace exposurelab::scoring {

double QuestionScoreSeries::at(int year) const {
    if (year < first_year || year > last_year()) return 0.0;
    return scores[static_cast<std::size_t>(year - first_year)];
}

double TagYearScores::at(int year) const {
    auto it = scores.find(year);
    return it == scores.end() ? 0.0 : it->second;
}

std::vector<QuestionScoreSeries> smooth_question_scores(const std::vector<corpus::Post>& posts, double decay,
                                                        int end_year) {
    if (!(decay > 0.0 && decay < 1.0)) throw ValidationError("decay must lie in (0,1), got " + format_exact(decay));

    std::vector<const corpus::Post*> order;
    order.reserve(posts.size());
    for (const auto& p : posts) {
        if (p.year_posted > end_year)
            throw DataError("post '" + p.id + "' posted in " + std::to_string(p.year_posted) + " after end year " +
                            std::to_string(end_year));
        if (p.votes_final > 0) order.push_back(&p);
    }
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    std::vector<QuestionScoreSeries> out;
    out.reserve(order.size());
    for (const auto* p : order) {
        const auto span = static_cast<std::size_t>(end_year - p->year_posted + 1);
        std::vector<double> powers(span);
        double w = 1.0;
        for (std::size_t i = 0; i < span; ++i, w *= decay) powers[i] = w;
        const double norm = pairwise_sum(powers);
        const double votes = static_cast<double>(p->votes_final);

        QuestionScoreSeries s{p->id, p->year_posted, std::vector<double>(span)};
        for (std::size_t i = 0; i < span; ++i) s.scores[i] = votes * powers[i] / norm;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TagYearScores> tag_year_scores(const std::vector<QuestionScoreSeries>& series,
                                           const std::vector<corpus::Post>& posts) {
    std::unordered_map<std::string, const corpus::Post*> by_id;
    for (const auto& p : posts) by_id.emplace(p.id, &p);

    std::vector<const QuestionScoreSeries*> order;
    for (const auto& s : series) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->post_id < b->post_id; });

    // (tag, year) -> contributions in post-id order
    std::map<std::string, std::map<int, std::vector<double>>> parts;
    for (const auto* s : order) {
        auto it = by_id.find(s->post_id);
        if (it == by_id.end()) throw DataError("score series for unknown post '" + s->post_id + "'");
        const auto& tags = it->second->tag_ids;
        const double n_tags = static_cast<double>(tags.size());
        std::vector<std::string> sorted_tags = tags;
        std::sort(sorted_tags.begin(), sorted_tags.end());
        for (const auto& tag : sorted_tags)
            for (std::size_t i = 0; i < s->scores.size(); ++i)
                parts[tag][s->first_year + static_cast<int>(i)].push_back(s->scores[i] / n_tags);
    }

    std::vector<TagYearScores> out;
    out.reserve(parts.size());
    for (auto& [tag, years] : parts) {
        TagYearScores t{tag, {}};
        for (auto& [year, values] : years) t.scores[year] = pairwise_sum(values);
        out.push_back(std::move(t));
    }
    return out;
}

void write_tag_scores(std::ostream& out, const std::vector<TagYearScores>& scores) {
    csv::Writer w(out);
    w.row({"tag_id", "year", "score"});
    for (const auto& t : scores)
        for (const auto& [year, value] : t.scores) w.row({t.tag_id, std::to_string(year), format_sig9(value)});
}

std::vector<TagYearScores> read_tag_scores(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_tag = table.column("tag_id");
    const auto c_year = table.column("year");
    const auto c_score = table.column("score");
    std::map<std::string, TagYearScores> by_tag;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto& t = by_tag[row[c_tag]];
        t.tag_id = row[c_tag];
        try {
            t.scores[std::stoi(row[c_year])] = std::stod(row[c_score]);
        } catch (const std::exception&) {
            throw DataError(table.where(r) + ": bad year or score");
        }
    }
    std::vector<TagYearScores> out;
    for (auto& [_, t] : by_tag) out.push_back(std::move(t));
    return out;
}

}  // namespace exposurelab::scoring
