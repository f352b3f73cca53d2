#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exposurelab/corpus.hpp"
#include "exposurelab/scoring.hpp"
#include "exposurelab/semlink.hpp"

namespace exposurelab::exposure {

enum class Level { ability, occupation8, occupation6, industry4, occ6_ind4, micro_occupation, micro_industry };

std::string_view to_string(Level level);
Level level_from_string(std::string_view text);

/// Entity-by-year values over one contiguous year range shared by all
/// entities. Cell keys for occ6_ind4 are "<occupation6>|<industry4>".
struct ExposureSeries {
    Level level = Level::ability;
    int first_year = 0;
    int last_year = -1;
    std::map<std::string, std::vector<double>> values;
    bool standardized = false;

    std::size_t years() const { return last_year >= first_year ? static_cast<std::size_t>(last_year - first_year + 1) : 0; }
    bool has(std::string_view entity, int year) const;
    /// Throws DataError when the cell is absent.
    double at(std::string_view entity, int year) const;

    bool operator==(const ExposureSeries&) const = default;
};

std::string cell_key(std::string_view occupation6, std::string_view industry4);
std::pair<std::string, std::string> split_cell_key(std::string_view key);

/// "<code>:<title>" identifies a micro-title row of a transition matrix.
std::string micro_key(const corpus::MicroTitle& title);
std::string micro_code(std::string_view key);

/// value(e, t) = sum_{tau = first..t} sum_g ST[g][tau] * C[e][g]. Tags missing
/// from `tag_scores` contribute nothing; tag scores outside `years` are ignored.
ExposureSeries cumulative_exposure(const std::vector<scoring::TagYearScores>& tag_scores,
                                   const semlink::TransitionMatrix& transition, corpus::YearRange years, Level level);

ExposureSeries ability_exposure(const std::vector<scoring::TagYearScores>& tag_scores,
                                const semlink::TransitionMatrix& transition, corpus::YearRange years);

/// Importance- and level-weighted mean of ability exposure per 8-digit
/// occupation; both scores are rescaled to [0,1] by the declared bounds.
ExposureSeries occupation_automation(const ExposureSeries& abilities,
                                     const std::vector<corpus::AbilityRequirement>& requirements,
                                     const corpus::ScaleBounds& importance, const corpus::ScaleBounds& level);

struct MicroExposure {
    ExposureSeries occupations;
    ExposureSeries industries;
};

MicroExposure microtitle_exposure(const std::vector<scoring::TagYearScores>& tag_scores,
                                  const semlink::TransitionMatrix& transition_occupations,
                                  const semlink::TransitionMatrix& transition_industries, corpus::YearRange years);

/// Maps fine entities to coarser codes. `universe` lists the fine entities
/// that should exist; with imputation, those absent from the input series
/// take the mean of present entities sharing their code prefix, trying the
/// prefix lengths in `impute_prefixes` in order.
struct Grouping {
    Level target = Level::occupation6;
    std::vector<std::string> universe;
    std::function<std::vector<std::string>(std::string_view)> parents;
    std::vector<std::size_t> impute_prefixes;
};

/// Parent = first `length` characters (or the whole code if shorter).
Grouping prefix_grouping(Level target, std::size_t length, std::vector<std::string> universe = {},
                         std::vector<std::size_t> impute_prefixes = {});
/// Parents from a crosswalk; codes it does not list map to themselves.
Grouping crosswalk_grouping(Level target, const corpus::Crosswalk& crosswalk, std::vector<std::string> universe = {},
                            std::vector<std::size_t> impute_prefixes = {});
/// Micro-title keys grouped by their code (optionally truncated).
Grouping micro_grouping(Level target, std::size_t code_length);

struct AggregateReport {
    std::size_t imputed = 0;
};

ExposureSeries aggregate(const ExposureSeries& series, const Grouping& grouping, bool impute,
                         AggregateReport* report = nullptr);

struct CombineReport {
    std::size_t missing_occupation = 0;
    std::size_t missing_industry = 0;
};

/// (occupation + industry) / 2 for each requested (occupation6, industry4)
/// cell; an empty request means every pair.
ExposureSeries combine_augmentation(const ExposureSeries& occupations, const ExposureSeries& industries,
                                    const std::vector<std::pair<std::string, std::string>>& cells = {},
                                    CombineReport* report = nullptr);

/// Cells of the standardization sample; nullopt means every cell.
using Sample = std::optional<std::set<std::pair<std::string, int>>>;

struct Moments {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t count = 0;
};

/// Unweighted pooled mean and sample standard deviation over `sample`.
Moments sample_moments(const ExposureSeries& series, const Sample& sample);

/// z = (x - mean) / sd with the moments of the sample; applied to all cells.
ExposureSeries standardize(const ExposureSeries& series, const Sample& sample = std::nullopt);

/// value(e, t) := value(e, t - lag).
ExposureSeries shift_years(const ExposureSeries& series, int lag);

struct IndexOptions {
    corpus::YearRange years{2010, 2022};
    double decay = 0.5;
    int end_year = 2022;
    double quantile = 0.25;
    corpus::ScaleBounds importance{1.0, 5.0};
    corpus::ScaleBounds level{0.0, 7.0};
    unsigned threads = 1;
};

/// Everything the index construction consumes. `posts` are already filtered
/// to the run's countries and years; `text_embeddings` is keyed by text.
struct IndexInputs {
    std::vector<corpus::Post> posts;
    corpus::TagStore tags;
    corpus::Taxonomies taxonomies;
    std::vector<std::string> occupation_universe;  // 8-digit codes; empty = those with requirements
    const semlink::EmbeddingStore* text_embeddings = nullptr;
};

struct IndexBundle {
    std::vector<scoring::TagYearScores> tag_scores;
    semlink::TransitionMatrix ability_links;
    semlink::TransitionMatrix occupation_title_links;
    semlink::TransitionMatrix industry_title_links;
    ExposureSeries abilities;
    ExposureSeries automation_occ8;
    ExposureSeries automation;    // occupation6 (or crosswalked)
    ExposureSeries augm_occupation;  // occupation6
    ExposureSeries augm_industry;    // industry4
    ExposureSeries augmentation;  // occ6 x ind4
};

/// Link texts for the tags, abilities and micro-titles of a run.
std::vector<semlink::LinkText> tag_link_texts(const corpus::TagStore& tags);
std::vector<semlink::LinkText> ability_link_texts(const std::vector<corpus::AbilityDescriptor>& abilities);
std::vector<semlink::LinkText> micro_link_texts(const std::vector<corpus::MicroTitle>& titles, corpus::TitleKind kind);

/// Automation and augmentation pieces downstream of the transition matrices.
struct AutomationResult {
    ExposureSeries abilities;
    ExposureSeries occ8;
    ExposureSeries occ6;
};
AutomationResult automation_from_links(const std::vector<scoring::TagYearScores>& tag_scores,
                                       const semlink::TransitionMatrix& ability_links,
                                       const corpus::Taxonomies& taxonomies,
                                       const std::vector<std::string>& occupation_universe, const IndexOptions& options);

struct AugmentationResult {
    ExposureSeries occupation6;
    ExposureSeries industry4;
    ExposureSeries cells;
};
AugmentationResult augmentation_from_links(const std::vector<scoring::TagYearScores>& tag_scores,
                                           const semlink::TransitionMatrix& occupation_links,
                                           const semlink::TransitionMatrix& industry_links,
                                           const corpus::Taxonomies& taxonomies, const IndexOptions& options);

/// The full index construction: AI post selection, score smoothing, tag
/// scores, transition matrices, and both exposure indices.
IndexBundle build_indices(const IndexInputs& inputs, const IndexOptions& options);

struct Instruments {
    ExposureSeries automation;
    ExposureSeries augmentation;
};

/// Runs build_indices on the instrument-group inputs and shifts both indices
/// forward by `lag` years. Throws DataError when the corpus has no AI posts.
Instruments build_instrument(const IndexInputs& iv_inputs, const IndexOptions& iv_options, int lag);

/// exposure.csv: entity_key,year,value,standardized_flag.
void write_series(std::ostream& out, const ExposureSeries& series);
ExposureSeries read_series(const std::filesystem::path& path, Level level);

}  // namespace exposurelab::exposure
