#include "exposurelab/newwork.hpp"

#include <algorithm>
#include <cctype>
#include <ostream>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"

namespace exposurelab::newwork {

namespace detail {
extern const char* const kGenderCsv;
extern const char* const kPluralCsv;
}  // namespace detail

namespace {

std::map<std::string, std::string> pairs_from(const csv::Table& table) {
    if (table.header.size() != 2) throw DataError(table.source.string() + ": expected exactly two columns");
    std::map<std::string, std::string> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        auto key = trim(table.rows[r][0]);
        auto value = trim(table.rows[r][1]);
        if (key.empty() || value.empty()) throw DataError(table.where(r) + ": empty entry");
        if (!out.emplace(std::move(key), std::move(value)).second)
            throw DataError(table.where(r) + ": duplicate entry");
    }
    return out;
}

bool ends_with(std::string_view word, std::string_view suffix) {
    return word.size() >= suffix.size() && word.substr(word.size() - suffix.size()) == suffix;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80; }

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> prod(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * b[i];
    return pairwise_sum(prod) / (semlink::stable_norm(a) * semlink::stable_norm(b));
}

}  // namespace

NormalizationTables NormalizationTables::defaults() {
    static const NormalizationTables tables = [] {
        NormalizationTables t;
        t.gender = pairs_from(csv::parse(detail::kGenderCsv, "gender.csv"));
        t.plural_exceptions = pairs_from(csv::parse(detail::kPluralCsv, "plural_exceptions.csv"));
        return t;
    }();
    return tables;
}

NormalizationTables NormalizationTables::from_files(const std::filesystem::path& gender_csv,
                                                    const std::filesystem::path& plural_csv) {
    NormalizationTables t;
    t.gender = pairs_from(csv::read(gender_csv));
    t.plural_exceptions = pairs_from(csv::read(plural_csv));
    return t;
}

TitleNormalizer::TitleNormalizer(NormalizationTables tables) : tables_(std::move(tables)) {}

std::string TitleNormalizer::singular(std::string_view word) const {
    if (auto it = tables_.plural_exceptions.find(std::string(word)); it != tables_.plural_exceptions.end())
        return it->second;
    std::string w(word);
    if (w.size() <= 3) return w;
    if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return w;
    if (ends_with(w, "women")) return w.substr(0, w.size() - 5) + "woman";
    if (ends_with(w, "men")) return w.substr(0, w.size() - 3) + "man";
    if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
    for (std::string_view suffix : {"sses", "shes", "ches", "xes", "zzes"})
        if (ends_with(w, suffix)) return w.substr(0, w.size() - 2);
    if (ends_with(w, "s")) {
        // possessive of an irregular plural: "childrens" -> "children" -> "child"
        auto stem = w.substr(0, w.size() - 1);
        if (auto it = tables_.plural_exceptions.find(stem); it != tables_.plural_exceptions.end()) return it->second;
        return stem;
    }
    return w;
}

std::string TitleNormalizer::operator()(std::string_view text) const {
    std::string lowered;
    lowered.reserve(text.size());
    for (char c : text) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

    std::string cleaned;
    cleaned.reserve(lowered.size());
    for (std::size_t i = 0; i < lowered.size(); ++i) {
        const char c = lowered[i];
        if (is_word_char(c)) {
            cleaned += c;
        } else if (c == '-') {
            const bool inner = i > 0 && i + 1 < lowered.size() && is_word_char(lowered[i - 1]) && is_word_char(lowered[i + 1]);
            cleaned += inner ? '-' : ' ';
        } else if (c == '\'') {
            // possessives and elisions: "driver's" -> "drivers"
        } else {
            cleaned += ' ';
        }
    }

    std::vector<std::string> words;
    for (auto& token : split(cleaned, ' ')) {
        if (token.empty()) continue;
        auto word = singular(token);
        if (auto it = tables_.gender.find(word); it != tables_.gender.end()) word = it->second;
        words.push_back(std::move(word));
    }
    if (words.empty()) throw ValidationError("title '" + std::string(text) + "' is empty after normalization");
    return join(words, " ");
}

std::string normalize_title(std::string_view text) {
    static const TitleNormalizer normalizer;
    return normalizer(text);
}

std::vector<TitleRow> load_titles(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_occ = table.column("occupation6");
    const auto c_year = table.column("year");
    const auto c_title = table.column("title");
    std::vector<TitleRow> rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        TitleRow t{trim(row[c_occ]), 0, trim(row[c_title])};
        if (t.occupation6.size() != 6 || !is_digits(t.occupation6))
            throw DataError(table.where(r) + ": occupation6 must be 6 digits, got '" + t.occupation6 + "'");
        try {
            t.year = std::stoi(row[c_year]);
        } catch (const std::exception&) {
            throw DataError(table.where(r) + ": bad year '" + row[c_year] + "'");
        }
        if (t.title.empty()) throw DataError(table.where(r) + ": empty title");
        rows.push_back(std::move(t));
    }
    return rows;
}

std::map<std::string, std::map<int, TitleSet>> build_title_sets(const std::vector<TitleRow>& rows,
                                                                const TitleNormalizer& normalize,
                                                                const corpus::Crosswalk& crosswalk) {
    std::map<std::string, std::map<int, TitleSet>> out;
    for (const auto& row : rows) {
        auto targets = crosswalk.targets(row.occupation6);
        if (targets.empty()) targets.push_back(row.occupation6);
        const auto norm = normalize(row.title);
        for (const auto& code : targets) {
            auto& set = out[code][row.year];
            set.occupation6 = code;
            set.year = row.year;
            set.titles.insert(row.title);
            set.normalized.insert(norm);
        }
    }
    return out;
}

Similarity embedding_similarity(const semlink::EmbeddingStore& store) {
    return [&store](const std::string& current, const std::string& previous) {
        return cosine(store.at(current), store.at(previous));
    };
}

std::set<std::string> detect_new_work(const TitleSet& previous, const TitleSet& current, const Similarity& similarity,
                                      double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ValidationError("similarity threshold must lie in (0,1], got " + format_exact(threshold));
    if (previous.occupation6 != current.occupation6 && !previous.normalized.empty())
        throw ValidationError("title sets belong to different occupations: " + previous.occupation6 + " vs " +
                              current.occupation6);
    std::set<std::string> fresh;
    for (const auto& title : current.normalized) {
        if (previous.normalized.contains(title)) continue;
        bool matched = false;
        for (const auto& old : previous.normalized) {
            if (similarity(title, old) >= threshold) {
                matched = true;
                break;
            }
        }
        if (!matched) fresh.insert(title);
    }
    return fresh;
}

NewWorkLedger build_ledger(const std::map<std::string, std::map<int, TitleSet>>& sets, int base_year,
                           const Similarity& similarity, double threshold) {
    NewWorkLedger ledger;
    ledger.base_year = base_year;
    for (const auto& [occ, by_year] : sets) {
        if (auto base = by_year.find(base_year); base != by_year.end())
            ledger.base_counts[occ] = base->second.normalized.size();
        std::set<std::string> counted;
        for (const auto& [year, current] : by_year) {
            if (year <= base_year) continue;
            TitleSet empty{occ, year - 1, {}, {}};
            auto prev_it = by_year.find(year - 1);
            const TitleSet& previous = prev_it == by_year.end() ? empty : prev_it->second;
            const auto fresh = detect_new_work(previous, current, similarity, threshold);
            for (const auto& title : current.normalized) {
                const bool is_new = fresh.contains(title);
                ledger.decisions.push_back({{occ, year, title}, is_new});
                if (is_new && counted.insert(title).second) ledger.entries.push_back({occ, year, title});
            }
        }
    }
    std::sort(ledger.entries.begin(), ledger.entries.end());
    return ledger;
}

double cumulative_share(const NewWorkLedger& ledger, std::string_view occupation6, int year) {
    auto it = ledger.base_counts.find(std::string(occupation6));
    if (it == ledger.base_counts.end() || it->second == 0)
        throw DataError("occupation " + std::string(occupation6) + " has no titles in base year " +
                        std::to_string(ledger.base_year));
    std::size_t count = 0;
    for (const auto& e : ledger.entries)
        if (e.occupation6 == occupation6 && e.year > ledger.base_year && e.year <= year) ++count;
    return static_cast<double>(count) / static_cast<double>(it->second);
}

void write_decisions(std::ostream& out, const NewWorkLedger& ledger) {
    auto rows = ledger.decisions;
    std::sort(rows.begin(), rows.end());
    csv::Writer w(out);
    w.row({"occupation6", "year", "title", "is_new"});
    for (const auto& [e, is_new] : rows) w.row({e.occupation6, std::to_string(e.year), e.title, is_new ? "1" : "0"});
}

void write_shares(std::ostream& out, const NewWorkLedger& ledger, int last_year) {
    std::map<std::string, std::map<int, std::size_t>> new_by_year;
    for (const auto& e : ledger.entries) ++new_by_year[e.occupation6][e.year];
    csv::Writer w(out);
    w.row({"occupation6", "year", "cumulative_share"});
    for (const auto& [occ, base] : ledger.base_counts) {
        if (base == 0) continue;
        std::size_t running = 0;
        const auto& counts = new_by_year[occ];
        for (int year = ledger.base_year; year <= last_year; ++year) {
            if (auto it = counts.find(year); it != counts.end() && year > ledger.base_year) running += it->second;
            w.row({occ, std::to_string(year),
                   format_sig9(static_cast<double>(running) / static_cast<double>(base))});
        }
    }
}

std::vector<ShareRow> read_shares(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_occ = table.column("occupation6");
    const auto c_year = table.column("year");
    const auto c_share = table.column("cumulative_share");
    std::vector<ShareRow> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        try {
            out.push_back({row[c_occ], std::stoi(row[c_year]), std::stod(row[c_share])});
        } catch (const std::exception&) {
            throw DataError(table.where(r) + ": bad year or share");
        }
    }
    return out;
}

}  // namespace exposurelab::newwork
