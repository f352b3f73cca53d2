#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "exposurelab/common.hpp"
#include "exposurelab/scoring.hpp"
#include "support.hpp"

using namespace exposurelab;
using namespace exposurelab::scoring;
using corpus::Post;

namespace {

Post make_post(std::string id, int year, std::int64_t votes, std::vector<std::string> tags) {
    return Post{std::move(id), year, votes, std::move(tags), "US"};
}

const TagYearScores& tag(const std::vector<TagYearScores>& all, const std::string& id) {
    for (const auto& t : all)
        if (t.tag_id == id) return t;
    throw std::runtime_error("no tag " + id);
}

std::vector<Post> random_posts(std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> year(2010, 2022), votes(-3, 60), ntags(1, 5), tag_id(0, 9);
    std::vector<Post> posts;
    for (int i = 0; i < n; ++i) {
        std::vector<std::string> tags;
        const int k = ntags(rng);
        while (static_cast<int>(tags.size()) < k) {
            auto t = "t" + std::to_string(tag_id(rng));
            if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
        }
        posts.push_back(make_post("q" + std::to_string(1000 + i), year(rng), votes(rng), tags));
    }
    return posts;
}

}  // namespace

TEST_CASE("decay example from a 2020 question") {
    const auto s = smooth_question_scores({make_post("q", 2020, 10, {"ml"})}, 0.5, 2022);
    REQUIRE(s.size() == 1);
    CHECK(s[0].first_year == 2020);
    CHECK(s[0].at(2020) == doctest::Approx(40.0 / 7.0).epsilon(1e-12));
    CHECK(s[0].at(2021) == doctest::Approx(20.0 / 7.0).epsilon(1e-12));
    CHECK(s[0].at(2022) == doctest::Approx(10.0 / 7.0).epsilon(1e-12));
    CHECK(std::fabs(s[0].at(2020) - 5.7) <= 0.05);
    CHECK(std::fabs(s[0].at(2021) - 2.9) <= 0.05);
    CHECK(std::fabs(s[0].at(2022) - 1.4) <= 0.05);
    CHECK(s[0].at(2019) == 0.0);
}

TEST_CASE("decay example from a 2019 question") {
    const auto s = smooth_question_scores({make_post("q", 2019, 15, {"ml"})}, 0.5, 2022);
    CHECK(s[0].scores == std::vector<double>{8.0, 4.0, 2.0, 1.0});
}

TEST_CASE("a question from the end year keeps its votes") {
    const auto s = smooth_question_scores({make_post("q", 2022, 7, {"ml"})}, 0.5, 2022);
    CHECK(s[0].scores == std::vector<double>{7.0});
}

TEST_CASE("smoothing preconditions") {
    CHECK_THROWS_AS(smooth_question_scores({make_post("q", 2023, 7, {"ml"})}, 0.5, 2022), DataError);
    CHECK_THROWS_AS(smooth_question_scores({make_post("q", 2020, 7, {"ml"})}, 1.0, 2022), ValidationError);
    CHECK_THROWS_AS(smooth_question_scores({make_post("q", 2020, 7, {"ml"})}, 0.0, 2022), ValidationError);
    const auto s = smooth_question_scores({make_post("neg", 2020, -2, {"ml"}), make_post("zero", 2020, 0, {"ml"})},
                                          0.5, 2022);
    CHECK(s.empty());
}

TEST_CASE("tag scores split each question across its tags") {
    // the 2010 end year makes each S equal the vote total
    const std::vector<Post> posts = {make_post("q1", 2010, 15, {"ML", "SemanticComparison", "NLP"}),
                                     make_post("q2", 2010, 6, {"ML", "DL"})};
    const auto scores = tag_year_scores(smooth_question_scores(posts, 0.5, 2010), posts);
    CHECK(tag(scores, "ML").at(2010) == doctest::Approx(8.0).epsilon(1e-14));

    const std::vector<Post> dl = {make_post("q1", 2010, 20, {"DeepLearning", "NN", "CV"}),
                                  make_post("q2", 2010, 10, {"DeepLearning", "Keras"})};
    const auto dl_scores = tag_year_scores(smooth_question_scores(dl, 0.5, 2010), dl);
    CHECK(std::fabs(tag(dl_scores, "DeepLearning").at(2010) - 11.67) <= 0.05);
}

TEST_CASE("a single-tag question passes through unchanged") {
    const std::vector<Post> posts = {make_post("q", 2018, 31, {"solo"})};
    const auto series = smooth_question_scores(posts, 0.5, 2022);
    const auto scores = tag_year_scores(series, posts);
    REQUIRE(scores.size() == 1);
    for (int y = 2018; y <= 2022; ++y) CHECK(scores[0].at(y) == series[0].at(y));
}

TEST_CASE("empty input gives empty output") { CHECK(tag_year_scores({}, {}).empty()); }

TEST_CASE("mass conservation, homogeneity and monotone decay") {
    const auto posts = random_posts(17, 400);
    const auto series = smooth_question_scores(posts, 0.5, 2022);
    double votes = 0.0;
    for (const auto& p : posts)
        if (p.votes_final > 0) votes += static_cast<double>(p.votes_final);
    double per_question = 0.0;
    for (const auto& s : series) {
        double sum = 0.0;
        for (std::size_t i = 0; i < s.scores.size(); ++i) {
            sum += s.scores[i];
            if (i > 0) CHECK(s.scores[i] <= s.scores[i - 1]);
        }
        per_question += sum;
    }
    CHECK(std::fabs(per_question - votes) <= 1e-6 * votes);

    const auto scores = tag_year_scores(series, posts);
    double total = 0.0;
    for (const auto& t : scores)
        for (const auto& [year, v] : t.scores) total += v;
    CHECK(std::fabs(total - votes) <= 1e-6 * votes);

    // power-of-two scaling keeps the floating-point operations exact
    auto scaled = posts;
    for (auto& p : scaled) p.votes_final *= 8;
    const auto scaled_series = smooth_question_scores(scaled, 0.5, 2022);
    const auto scaled_scores = tag_year_scores(scaled_series, scaled);
    REQUIRE(scaled_scores.size() == scores.size());
    for (std::size_t g = 0; g < scores.size(); ++g)
        for (const auto& [year, v] : scores[g].scores) CHECK(scaled_scores[g].at(year) == 8.0 * v);
}

TEST_CASE("tag scores are additive over disjoint post subsets") {
    const auto posts = random_posts(23, 120);
    const std::vector<Post> a(posts.begin(), posts.begin() + 50), b(posts.begin() + 50, posts.end());
    const auto all = tag_year_scores(smooth_question_scores(posts, 0.5, 2022), posts);
    const auto sa = tag_year_scores(smooth_question_scores(a, 0.5, 2022), a);
    const auto sb = tag_year_scores(smooth_question_scores(b, 0.5, 2022), b);
    auto lookup = [](const std::vector<TagYearScores>& s, const std::string& id, int y) {
        for (const auto& t : s)
            if (t.tag_id == id) return t.at(y);
        return 0.0;
    };
    for (const auto& t : all)
        for (const auto& [year, v] : t.scores)
            CHECK(v == doctest::Approx(lookup(sa, t.tag_id, year) + lookup(sb, t.tag_id, year)).epsilon(1e-12));
}

TEST_CASE("tag score output is independent of input order") {
    auto posts = random_posts(29, 200);
    const auto first = tag_year_scores(smooth_question_scores(posts, 0.5, 2022), posts);
    std::reverse(posts.begin(), posts.end());
    const auto second = tag_year_scores(smooth_question_scores(posts, 0.5, 2022), posts);
    std::ostringstream a, b;
    write_tag_scores(a, first);
    write_tag_scores(b, second);
    CHECK(a.str() == b.str());
}

TEST_CASE("tag score files round trip at nine significant digits") {
    const auto posts = random_posts(31, 60);
    const auto scores = tag_year_scores(smooth_question_scores(posts, 0.5, 2022), posts);
    testing::TempDir dir;
    std::ostringstream out;
    write_tag_scores(out, scores);
    const auto path = testing::write_text(dir / "tag_scores.csv", out.str());
    CHECK(out.str().rfind("tag_id,year,score\n", 0) == 0);
    const auto back = read_tag_scores(path);
    REQUIRE(back.size() == scores.size());
    for (std::size_t g = 0; g < scores.size(); ++g)
        for (const auto& [year, v] : scores[g].scores)
            CHECK(back[g].at(year) == doctest::Approx(v).epsilon(1e-8));
}
