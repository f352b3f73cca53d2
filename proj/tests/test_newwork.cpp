#include <doctest.h>

#include <cmath>
#include <sstream>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"
#include "exposurelab/newwork.hpp"
#include "newwork_corpus.hpp"
#include "support.hpp"

using namespace exposurelab;
using namespace exposurelab::newwork;

namespace {

TitleSet title_set(std::string occ, int year, std::vector<std::string> titles) {
    TitleSet s{std::move(occ), year, {}, {}};
    for (auto& t : titles) {
        s.normalized.insert(normalize_title(t));
        s.titles.insert(std::move(t));
    }
    return s;
}

// Fixed similarity table; unknown pairs are 0.
Similarity table(std::map<std::pair<std::string, std::string>, double> values) {
    return [values = std::move(values)](const std::string& cur, const std::string& prev) {
        auto it = values.find({cur, prev});
        return it == values.end() ? 0.0 : it->second;
    };
}

semlink::EmbeddingStore title_store(const std::vector<TitleRow>& rows) {
    std::vector<std::string> texts;
    for (const auto& r : rows) texts.push_back(normalize_title(r.title));
    return semlink::test_embedder(texts, 256, 20240101);
}

}  // namespace

TEST_CASE("normalization rules") {
    CHECK(normalize_title("Drivers ") == "driver");
    CHECK(normalize_title("Waitress") == "waiter");
    CHECK(normalize_title("  Truck   DRIVERS, Long-Haul ") == "truck driver long-haul");
    CHECK(normalize_title("Saleswomen") == "salesman");
    CHECK(normalize_title("Nurses' Aides") == "nurse aide");
    CHECK(normalize_title("Policies -Analyst-") == "policy analyst");
    CHECK(normalize_title("Boxes") == "box");
    CHECK(normalize_title("Business Analysis") == "business analysis");
    CHECK(normalize_title("Children's Librarian") == "child librarian");
    CHECK_THROWS_AS(normalize_title(" -- !! "), ValidationError);
}

TEST_CASE("normalization is idempotent on corpus titles") {
    const auto corpus = testing::rename_corpus(3);
    for (const auto& r : corpus.rows) {
        const auto once = normalize_title(r.title);
        CHECK(normalize_title(once) == once);
    }
    const auto fixture = load_titles(std::filesystem::path(EXPOSURELAB_SOURCE_DIR) / "fixtures/synthetic/inputs/alt_titles.csv");
    CHECK(fixture.size() > 100);
    for (const auto& r : fixture) {
        const auto once = normalize_title(r.title);
        CHECK(normalize_title(once) == once);
    }
}

TEST_CASE("normalization tables load from files") {
    testing::TempDir dir;
    const auto tables = NormalizationTables::from_files(
        testing::write_text(dir / "gender.csv", "female,male\nhostess,host\n"),
        testing::write_text(dir / "plural.csv", "word,singular\ndata,datum\n"));
    const TitleNormalizer normalize(tables);
    CHECK(normalize("Hostesses") == "host");
    CHECK(normalize("Data Clerks") == "datum clerk");
    CHECK(normalize("Waitress") == "waitress");  // the shipped gender table is replaced
}

TEST_CASE("title sets collapse renames into one normalized title") {
    const TitleNormalizer normalize;
    const auto sets = build_title_sets(
        {{"533032", 2015, "Truck Driver"}, {"533032", 2015, "Truck Drivers"}, {"533032", 2016, "TRUCK DRIVER"}},
        normalize);
    const auto& s = sets.at("533032").at(2015);
    CHECK(s.titles.size() == 2);
    CHECK(s.normalized == std::set<std::string>{"truck driver"});
}

TEST_CASE("split occupations are compared against the union of predecessors") {
    const TitleNormalizer normalize;
    const auto cw = corpus::make_crosswalk({{"151131", "151252", 0.5}, {"151131", "151253", 0.5}});
    const auto sets = build_title_sets({{"151131", 2019, "Programmer"}, {"151252", 2020, "Programmer"},
                                        {"151253", 2020, "Programmer"}, {"151253", 2020, "Tester"}},
                                       normalize, cw);
    CHECK(sets.at("151252").at(2019).normalized == std::set<std::string>{"programmer"});
    CHECK(sets.at("151253").at(2019).normalized == std::set<std::string>{"programmer"});
    const auto ledger = build_ledger(sets, 2019, table({}), 0.7);
    CHECK(ledger.entries == std::vector<LedgerEntry>{{"151253", 2020, "tester"}});
}

TEST_CASE("exact matches are never new") {
    const auto prev = title_set("111111", 2015, {"Data Scientist", "Analyst"});
    const auto cur = title_set("111111", 2016, {"Data Scientists", "analyst", "Prompt Engineer"});
    CHECK(detect_new_work(prev, cur, table({}), 0.7) == std::set<std::string>{"prompt engineer"});
}

TEST_CASE("the similarity threshold is inclusive") {
    const auto prev = title_set("111111", 2015, {"Old Title"});
    const auto cur = title_set("111111", 2016, {"New Title"});
    CHECK(detect_new_work(prev, cur, table({{{"new title", "old title"}, 0.69}}), 0.7).size() == 1);
    CHECK(detect_new_work(prev, cur, table({{{"new title", "old title"}, 0.70}}), 0.7).empty());
}

TEST_CASE("medical transport driver is not new work") {
    const auto prev = title_set("533011", 2019, {"Transport Medic", "Medical Driver", "Driver Medic"});
    const auto cur = title_set("533011", 2020, {"Medical Transport Driver"});
    const auto sim = table({{{"medical transport driver", "transport medic"}, 0.72},
                            {{"medical transport driver", "medical driver"}, 0.84},
                            {{"medical transport driver", "driver medic"}, 0.79}});
    CHECK(detect_new_work(prev, cur, sim, 0.7).empty());
    CHECK(detect_new_work(prev, cur, sim, 0.85).size() == 1);
}

TEST_CASE("embedding similarity names titles without vectors") {
    const auto store = semlink::test_embedder({"analyst", "data analyst"}, 64, 1);
    const auto sim = embedding_similarity(store);
    CHECK(sim("analyst", "analyst") == doctest::Approx(1.0));
    try {
        sim("analyst", "zookeeper");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("zookeeper") != std::string::npos);
    }
}

TEST_CASE("cumulative shares") {
    NewWorkLedger ledger;
    ledger.base_year = 2015;
    ledger.base_counts = {{"111111", 50}, {"222222", 10}, {"333333", 0}};
    for (int i = 0; i < 5; ++i) ledger.entries.push_back({"111111", 2016 + i % 3, "t" + std::to_string(i)});
    CHECK(cumulative_share(ledger, "111111", 2018) == doctest::Approx(0.10));
    CHECK(cumulative_share(ledger, "111111", 2015) == 0.0);
    for (int y = 2015; y <= 2022; ++y) CHECK(cumulative_share(ledger, "222222", y) == 0.0);
    CHECK_THROWS_AS(cumulative_share(ledger, "333333", 2018), DataError);
    CHECK_THROWS_AS(cumulative_share(ledger, "999999", 2018), DataError);
}

TEST_CASE("a title that skips a year is flagged new on return") {
    const TitleNormalizer normalize;
    const auto sets = build_title_sets({{"111111", 2015, "Clerk"}, {"111111", 2015, "Typist"},
                                        {"111111", 2016, "Clerk"}, {"111111", 2017, "Clerk"},
                                        {"111111", 2017, "Typist"}},
                                       normalize);
    const auto ledger = build_ledger(sets, 2015, table({}), 0.7);
    CHECK(ledger.entries == std::vector<LedgerEntry>{{"111111", 2017, "typist"}});
}

TEST_CASE("rename and insertion corpus: precision and recall are one") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const auto corpus = testing::rename_corpus(seed);
        const TitleNormalizer normalize;
        const auto store = title_store(corpus.rows);
        const auto ledger =
            build_ledger(build_title_sets(corpus.rows, normalize), corpus.base_year, embedding_similarity(store), 0.7);
        const std::set<LedgerEntry> found(ledger.entries.begin(), ledger.entries.end());
        CHECK(found == corpus.truth);
        CHECK(ledger.base_counts == corpus.base_counts);
        for (const auto& [occ, base] : corpus.base_counts) {
            double previous = 0.0;
            for (int year = corpus.base_year; year <= corpus.last_year; ++year) {
                std::size_t count = 0;
                for (const auto& e : corpus.truth) count += e.occupation6 == occ && e.year <= year;
                const double share = cumulative_share(ledger, occ, year);
                CHECK(share == static_cast<double>(count) / static_cast<double>(base));
                CHECK(share >= previous);
                previous = share;
            }
        }
    }
}

TEST_CASE("raising the threshold never shrinks the new-work set and renames stay old") {
    const auto corpus = testing::rename_corpus(11);
    const TitleNormalizer normalize;
    const auto sets = build_title_sets(corpus.rows, normalize);
    const auto store = title_store(corpus.rows);
    std::set<LedgerEntry> previous;
    for (double theta : {0.05, 0.2, 0.4, 0.6, 0.7, 0.8, 0.95, 1.0}) {
        const auto ledger = build_ledger(sets, corpus.base_year, embedding_similarity(store), theta);
        const std::set<LedgerEntry> found(ledger.entries.begin(), ledger.entries.end());
        CHECK(std::includes(found.begin(), found.end(), previous.begin(), previous.end()));
        for (const auto& e : found) CHECK(corpus.truth.contains(e));
        previous = found;
    }
}

TEST_CASE("ledger files") {
    const auto corpus = testing::rename_corpus(5, 3);
    const TitleNormalizer normalize;
    const auto store = title_store(corpus.rows);
    const auto ledger =
        build_ledger(build_title_sets(corpus.rows, normalize), corpus.base_year, embedding_similarity(store), 0.7);
    std::ostringstream decisions, shares;
    write_decisions(decisions, ledger);
    write_shares(shares, ledger, 2020);
    const auto d = csv::parse(decisions.str());
    CHECK(d.header == std::vector<std::string>{"occupation6", "year", "title", "is_new"});
    std::size_t flagged = 0;
    for (const auto& row : d.rows) flagged += row[3] == "1";
    CHECK(flagged == corpus.truth.size());

    testing::TempDir dir;
    const auto back = read_shares(testing::write_text(dir / "shares.csv", shares.str()));
    CHECK(back.size() == corpus.base_counts.size() * 6);
    for (const auto& row : back)
        CHECK(row.share == doctest::Approx(cumulative_share(ledger, row.occupation6, row.year)).epsilon(1e-8));
}
