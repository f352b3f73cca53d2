#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "exposurelab/corpus.hpp"
#include "exposurelab/semlink.hpp"

namespace exposurelab::newwork {

/// Word tables behind title normalization. Both ship as data files.
struct NormalizationTables {
    std::map<std::string, std::string> gender;            // female form -> male form
    std::map<std::string, std::string> plural_exceptions;  // word -> singular (identity = keep)

    static NormalizationTables defaults();
    static NormalizationTables from_files(const std::filesystem::path& gender_csv,
                                          const std::filesystem::path& plural_csv);
};

class TitleNormalizer {
public:
    TitleNormalizer() : TitleNormalizer(NormalizationTables::defaults()) {}
    explicit TitleNormalizer(NormalizationTables tables);

    /// Casefold, drop punctuation (intra-word hyphens kept), collapse
    /// whitespace, singularize, map gendered words to the male form.
    /// Throws ValidationError when nothing is left.
    std::string operator()(std::string_view text) const;

    std::string singular(std::string_view word) const;

private:
    NormalizationTables tables_;
};

std::string normalize_title(std::string_view text);

struct TitleSet {
    std::string occupation6;
    int year = 0;
    std::set<std::string> titles;
    std::set<std::string> normalized;
};

struct TitleRow {
    std::string occupation6;
    int year = 0;
    std::string title;
};

std::vector<TitleRow> load_titles(const std::filesystem::path& path);

/// Groups rows by (occupation, year). Codes listed in `crosswalk` are mapped
/// first; a code with several targets contributes its titles to each, so a
/// split occupation is compared against the union of its predecessors.
std::map<std::string, std::map<int, TitleSet>> build_title_sets(const std::vector<TitleRow>& rows,
                                                                const TitleNormalizer& normalize,
                                                                const corpus::Crosswalk& crosswalk = {});

/// Similarity between a current and a previous normalized title.
using Similarity = std::function<double(const std::string& current, const std::string& previous)>;

/// Cosine similarity from a text-keyed embedding store; throws DataError
/// naming a title that has no vector.
Similarity embedding_similarity(const semlink::EmbeddingStore& store);

/// Normalized titles of `current` that match no previous title exactly and
/// whose best similarity to the previous titles is below `threshold`.
std::set<std::string> detect_new_work(const TitleSet& previous, const TitleSet& current, const Similarity& similarity,
                                      double threshold);

struct LedgerEntry {
    std::string occupation6;
    int year = 0;
    std::string title;

    auto operator<=>(const LedgerEntry&) const = default;
};

struct NewWorkLedger {
    int base_year = 0;
    std::vector<LedgerEntry> entries;           // sorted, unique per (occupation, title)
    std::map<std::string, std::size_t> base_counts;
    /// Every compared (occupation, year, title) with its flag, for newwork.csv.
    std::vector<std::pair<LedgerEntry, bool>> decisions;
};

/// Compares each year t > base_year strictly with t - 1. A title already in
/// the ledger is not counted again when it reappears.
NewWorkLedger build_ledger(const std::map<std::string, std::map<int, TitleSet>>& sets, int base_year,
                           const Similarity& similarity, double threshold);

/// sum_{tau = base+1..year} new(o, tau) / count(o, base).
double cumulative_share(const NewWorkLedger& ledger, std::string_view occupation6, int year);

void write_decisions(std::ostream& out, const NewWorkLedger& ledger);
/// shares.csv rows for every ledger occupation and base_year..last_year.
void write_shares(std::ostream& out, const NewWorkLedger& ledger, int last_year);

struct ShareRow {
    std::string occupation6;
    int year = 0;
    double share = 0.0;
};
std::vector<ShareRow> read_shares(const std::filesystem::path& path);

}  // namespace exposurelab::newwork
