#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "exposurelab/corpus.hpp"

namespace exposurelab::scoring {

/// A question's snapshot votes spread over year_posted..end_year with
/// geometric decay; the yearly scores add back up to the vote total.
struct QuestionScoreSeries {
    std::string post_id;
    int first_year = 0;
    std::vector<double> scores;  // scores[i] belongs to first_year + i

    int last_year() const { return first_year + static_cast<int>(scores.size()) - 1; }
    /// 0 outside the covered years.
    double at(int year) const;
};

struct TagYearScores {
    std::string tag_id;
    std::map<int, double> scores;

    double at(int year) const;
};

/// Posts with non-positive vote totals are skipped. Output is sorted by
/// post id. Throws ValidationError on decay outside (0,1) and DataError on a
/// post newer than end_year.
std::vector<QuestionScoreSeries> smooth_question_scores(const std::vector<corpus::Post>& posts, double decay,
                                                        int end_year);

/// ST[g][t] = sum over questions tagged g of S[q][t] / n_tags(q).
/// Output sorted by tag id; the reduction order is fixed (post id order).
std::vector<TagYearScores> tag_year_scores(const std::vector<QuestionScoreSeries>& series,
                                           const std::vector<corpus::Post>& posts);

void write_tag_scores(std::ostream& out, const std::vector<TagYearScores>& scores);
std::vector<TagYearScores> read_tag_scores(const std::filesystem::path& path);

}  // namespace exposurelab::scoring
