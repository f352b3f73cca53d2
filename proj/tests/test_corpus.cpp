#include <doctest.h>

#include <algorithm>
#include <string>

#include "exposurelab/common.hpp"
#include "exposurelab/corpus.hpp"
#include "support.hpp"

using namespace exposurelab;
using namespace exposurelab::corpus;

namespace {

const char* kTags =
    "id,name,description,is_ai\n"
    "keras,Keras,\"Deep learning library, Python\",1\n"
    "ml,Machine Learning,Learning from data,1\n"
    "python,Python,A programming language,0\n"
    "nlp,NLP,,1\n";

std::string post(const std::string& id, int year, int votes, const std::string& tags, const std::string& country) {
    return "{\"id\":\"" + id + "\",\"year\":" + std::to_string(year) + ",\"votes\":" + std::to_string(votes) +
           ",\"tags\":[" + tags + "],\"country\":\"" + country + "\"}\n";
}

struct Corpus {
    testing::TempDir dir;
    TagStore tags;
    std::filesystem::path posts;

    explicit Corpus(const std::string& lines) {
        tags = load_tags(testing::write_text(dir / "tags.csv", kTags));
        posts = testing::write_text(dir / "posts.jsonl", lines);
    }
};

PostFilter filter(std::set<std::string> countries, int first = 2010, int last = 2022) {
    return PostFilter{std::move(countries), YearRange{first, last}};
}

}  // namespace

TEST_CASE("tags load sorted with empty-description AI tags flagged") {
    Corpus c("");
    REQUIRE(c.tags.tags().size() == 4);
    CHECK(c.tags.tags().front().id == "keras");
    CHECK(c.tags.find("keras")->description == "Deep learning library, Python");
    CHECK(c.tags.ai_tags().size() == 3);
    CHECK(c.tags.flagged_empty_description() == std::vector<std::string>{"nlp"});
    CHECK(c.tags.find("nlp")->description_or_name() == "NLP");
}

TEST_CASE("country filter keeps matching posts") {
    Corpus c(post("a", 2015, 3, "\"ml\",\"python\",\"keras\"", "US") + post("b", 2016, 1, "\"ml\"", "FR") +
             post("c", 2017, 2, "\"keras\",\"ml\",\"nlp\"", "US"));
    PostLoadReport report;
    const auto posts = load_posts(c.posts, filter({"US"}), c.tags, &report);
    CHECK(posts.size() == 2);
    CHECK(report.read == 3);
    CHECK(report.retained == 2);
    CHECK(report.outside_countries == 1);
}

TEST_CASE("empty country filter is rejected") {
    Corpus c(post("a", 2015, 3, "\"ml\"", "US"));
    try {
        load_posts(c.posts, filter({}), c.tags);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()) == "empty country filter");
    }
}

TEST_CASE("year window drops early posts") {
    std::string lines;
    for (int i = 0; i < 10; ++i) lines += post("p" + std::to_string(i), i < 2 ? 2009 : 2012 + i, 1, "\"ml\"", "US");
    Corpus c(lines);
    PostLoadReport report;
    CHECK(load_posts(c.posts, filter({"US"}), c.tags, &report).size() == 8);
    CHECK(report.outside_years == 2);
    CHECK(report.few_tags == 8);
}

TEST_CASE("malformed lines report their line number and unknown tags are listed") {
    Corpus bad(post("a", 2015, 3, "\"ml\"", "US") + "{\"id\": \"b\", \"year\": \n");
    try {
        load_posts(bad.posts, filter({"US"}), bad.tags);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    Corpus unknown(post("a", 2015, 3, "\"ml\",\"rust\"", "US") + post("b", 2015, 3, "\"golang\"", "US"));
    try {
        load_posts(unknown.posts, filter({"US"}), unknown.tags);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("rust") != std::string::npos);
        CHECK(msg.find("golang") != std::string::npos);
    }
    Corpus too_many(post("a", 2015, 3, "\"ml\",\"ml\",\"ml\",\"ml\",\"ml\",\"ml\"", "US"));
    CHECK_THROWS_AS(load_posts(too_many.posts, filter({"US"}), too_many.tags), DataError);
    Corpus dup(post("a", 2015, 3, "\"ml\"", "US") + post("a", 2016, 3, "\"ml\"", "US"));
    CHECK_THROWS_AS(load_posts(dup.posts, filter({"US"}), dup.tags), DataError);
}

TEST_CASE("unknown country codes are excluded and counted") {
    Corpus c(post("a", 2015, 3, "\"ml\"", "US") + post("b", 2015, 3, "\"ml\"", "usa") +
             post("c", 2015, 3, "\"ml\"", "Z9"));
    PostLoadReport report;
    CHECK(load_posts(c.posts, filter({"US", "usa"}), c.tags, &report).size() == 1);
    CHECK(report.unknown_country == 2);
    CHECK(is_iso_country("GB"));
    CHECK_FALSE(is_iso_country("gb"));
}

TEST_CASE("negative votes survive ingestion") {
    Corpus c(post("a", 2015, -4, "\"ml\"", "US"));
    const auto posts = load_posts(c.posts, filter({"US"}), c.tags);
    REQUIRE(posts.size() == 1);
    CHECK(posts[0].votes_final == -4);
}

TEST_CASE("filtering by a union equals the union of filters") {
    std::string lines;
    const char* countries[] = {"US", "CA", "GB", "DE", "FR"};
    for (int i = 0; i < 25; ++i)
        lines += post("p" + std::to_string(100 + i), 2010 + i % 10, i, "\"ml\"", countries[i % 5]);
    Corpus c(lines);
    const auto all = load_posts(c.posts, filter({"US", "CA", "GB", "DE", "FR"}), c.tags);
    const auto s1 = filter_posts(all, filter({"US", "GB"}));
    const auto s2 = filter_posts(all, filter({"GB", "DE"}));
    const auto both = filter_posts(all, filter({"US", "GB", "DE"}));
    std::set<std::string> ids;
    for (const auto& p : s1) ids.insert(p.id);
    for (const auto& p : s2) ids.insert(p.id);
    std::set<std::string> expected;
    for (const auto& p : both) expected.insert(p.id);
    CHECK(ids == expected);
    CHECK(expected.size() == 15);
}

TEST_CASE("ingestion is idempotent") {
    Corpus c(post("a", 2015, 3, "\"ml\",\"python\"", "US") + post("b", 2016, 5, "\"keras\"", "CA"));
    CHECK(load_posts(c.posts, filter({"US", "CA"}), c.tags) == load_posts(c.posts, filter({"US", "CA"}), c.tags));
    CHECK(load_tags(c.dir / "tags.csv") == c.tags);
}

TEST_CASE("select_ai_posts keeps posts with any AI tag") {
    Corpus c("");
    std::vector<Post> posts = {
        {"a", 2015, 1, {"python", "keras"}, "US"},
        {"b", 2015, 1, {"python"}, "US"},
        {"c", 2015, 1, {"ml"}, "US"},
    };
    const auto ai = select_ai_posts(posts, c.tags);
    REQUIRE(ai.size() == 2);
    CHECK(ai[0].id == "a");
    CHECK(ai[1].id == "c");

    std::vector<Post> all_ai;
    for (int i = 0; i < 5; ++i) all_ai.push_back({"q" + std::to_string(i), 2015, 1, {"nlp", "ml"}, "US"});
    const auto kept = select_ai_posts(all_ai, c.tags);
    CHECK(kept.size() == 5);
    for (const auto& p : kept)
        CHECK(std::any_of(p.tag_ids.begin(), p.tag_ids.end(), [&](const auto& t) { return c.tags.find(t)->is_ai; }));
}

TEST_CASE("crosswalk shares must sum to one") {
    CHECK_NOTHROW(make_crosswalk({{"X", "A", 0.6}, {"X", "B", 0.4}}));
    CHECK_THROWS_AS(make_crosswalk({{"X", "A", 0.6}, {"X", "B", 0.3}}), DataError);
    const auto cw = make_crosswalk({{"X", "B", 0.4}, {"X", "A", 0.6}, {"Y", "A", 1.0}});
    CHECK(cw.targets("X") == std::vector<std::string>{"A", "B"});
    CHECK(cw.targets("Z").empty());
}

TEST_CASE("taxonomies enforce referential integrity and scale bounds") {
    testing::TempDir dir;
    TaxonomyPaths paths;
    paths.abilities = testing::write_text(dir / "abilities.csv",
                                          "ability_id,name,description\nA1,Near Vision,See details close up\n"
                                          "A2,Far Vision,See details at distance\n");
    paths.ability_scores = testing::write_text(dir / "scores.csv",
                                               "occupation8,ability_id,importance,level\n"
                                               "15125200,A1,4.5,5.0\n00111100,A2,1,0\n");
    paths.microtitles = testing::write_text(dir / "micro.csv",
                                            "title,kind,code,vintage\nData Scientist,occupation,152051,2020\n"
                                            "Software Publishers,industry,511210,2020\n");
    paths.occupation_crosswalk = testing::write_text(dir / "occ_cw.csv", "from_code,to_code,weight\n152051,152098,1\n");

    const auto tax = load_taxonomies(paths);
    CHECK(tax.abilities.size() == 2);
    REQUIRE(tax.requirements.size() == 2);
    CHECK(tax.requirements[0].occupation8 == "00111100");  // leading zeros kept
    CHECK(tax.microtitles.size() == 2);
    CHECK(tax.occupation_crosswalk.rows().size() == 1);
    CHECK(load_taxonomies(paths) == tax);

    testing::write_text(paths.ability_scores, "occupation8,ability_id,importance,level\n15125200,A9,4.5,5.0\n");
    try {
        load_taxonomies(paths);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("A9") != std::string::npos);
    }
    testing::write_text(paths.ability_scores, "occupation8,ability_id,importance,level\n15125200,A1,6.0,5.0\n");
    CHECK_THROWS_AS(load_taxonomies(paths), DataError);
    testing::write_text(paths.ability_scores, "occupation8,ability_id,importance,level\n1512520,A1,3.0,5.0\n");
    CHECK_THROWS_AS(load_taxonomies(paths), DataError);

    testing::write_text(paths.microtitles, "title,kind,code,vintage\nData Scientist,occupation,15205,2020\n");
    CHECK_THROWS_AS(load_microtitles(paths.microtitles), DataError);
    testing::write_text(paths.microtitles, "title,kind,code,vintage\nData Scientist,trade,152051,2020\n");
    CHECK_THROWS_AS(load_microtitles(paths.microtitles), DataError);
}
