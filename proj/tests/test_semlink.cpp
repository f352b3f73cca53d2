#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "exposurelab/common.hpp"
#include "exposurelab/semlink.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace exposurelab;
using namespace exposurelab::semlink;

namespace {

SimilarityMatrix matrix(const Eigen::MatrixXd& values) {
    SimilarityMatrix m;
    for (Eigen::Index r = 0; r < values.rows(); ++r) m.row_ids.push_back("r" + std::to_string(r));
    for (Eigen::Index c = 0; c < values.cols(); ++c) m.col_ids.push_back("c" + std::to_string(c));
    m.values = values;
    return m;
}

std::set<std::pair<Eigen::Index, Eigen::Index>> kept(const TransitionMatrix& t) {
    std::set<std::pair<Eigen::Index, Eigen::Index>> out;
    for (const auto& e : t.entries) out.emplace(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col));
    return out;
}

// Values on a coarse grid so ties are common.
Eigen::MatrixXd tied_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::uniform_int_distribution<int> level(0, 6);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = level(rng) / 6.0;
    return m;
}

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

TEST_CASE("clamped cosine on identical, orthogonal and antiparallel vectors") {
    EmbeddingStore a(3), b(3);
    a.add("u", {1.0, 2.0, 2.0});
    b.add("same", {1.0, 2.0, 2.0});
    b.add("orth", {2.0, -1.0, 0.0});
    b.add("anti", {-1.0, -2.0, -2.0});
    b.add("scaled", {1e200, 2e200, 2e200});
    const auto m = cosine_clamped(a, b);
    CHECK(m.values(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.values(0, 1) == 0.0);
    CHECK(m.values(0, 2) == 0.0);
    CHECK(m.values(0, 3) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.row_ids == std::vector<std::string>{"u"});
}

TEST_CASE("embedding stores reject bad vectors and mismatched dims") {
    EmbeddingStore s(2);
    try {
        s.add("zero", {0.0, 0.0});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("zero") != std::string::npos);
    }
    CHECK_THROWS_AS(s.add("nan", {std::nan(""), 1.0}), DataError);
    CHECK_THROWS_AS(s.add("short", {1.0}), DataError);
    s.add("ok", {1.0, 0.0});
    CHECK_THROWS_AS(s.add("ok", {0.0, 1.0}), DataError);
    CHECK_THROWS_AS(s.at("missing"), DataError);
    EmbeddingStore t(3);
    t.add("x", {1.0, 0.0, 0.0});
    CHECK_THROWS_AS(cosine_clamped(s, t), ValidationError);
}

TEST_CASE("stable_norm survives extreme magnitudes") {
    CHECK(stable_norm({3e200, 4e200}) == doctest::Approx(5e200));
    CHECK(stable_norm({3e-200, 4e-200}) == doctest::Approx(5e-200));
    CHECK(stable_norm({0.0, 0.0}) == 0.0);
}

TEST_CASE("joint top-quantile example keeps only the shared top entry") {
    Eigen::MatrixXd name(2, 2), desc(2, 2);
    name << 0.9, 0.1, 0.2, 0.3;
    desc << 0.8, 0.05, 0.4, 0.1;
    const auto t = joint_top_quantile_average(matrix(name), matrix(desc), 0.25);
    REQUIRE(t.entries.size() == 1);
    CHECK(t.entries[0] == TransitionEntry{0, 0, (0.9 + 0.8) / 2.0});
    CHECK(t.dense()(1, 1) == 0.0);
}

TEST_CASE("q = 1 keeps every entry at the elementwise mean") {
    std::mt19937_64 rng(3);
    const auto a = tied_matrix(rng, 4, 5);
    const auto b = tied_matrix(rng, 4, 5);
    const auto t = joint_top_quantile_average(matrix(a), matrix(b), 1.0);
    CHECK(t.entries.size() == 20);
    CHECK((t.dense() - (a + b) / 2.0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("equal inputs keep the single-matrix top-q set with unchanged values") {
    std::mt19937_64 rng(5);
    const auto a = tied_matrix(rng, 5, 6);
    for (double q : {0.1, 0.25, 0.5}) {
        const auto t = joint_top_quantile_average(matrix(a), matrix(a), q);
        CHECK(kept(t) == oracle::top_q_set(a, q));
        for (const auto& e : t.entries)
            CHECK(e.value == a(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)));
    }
}

TEST_CASE("kept set is the intersection of the per-matrix top-q sets") {
    for (std::uint64_t seed = 10; seed < 60; ++seed) {
        std::mt19937_64 rng(seed);
        const Eigen::Index r = 2 + static_cast<Eigen::Index>(seed % 5), c = 3 + static_cast<Eigen::Index>(seed % 4);
        const auto a = tied_matrix(rng, r, c);
        const auto b = tied_matrix(rng, r, c);
        for (double q : {0.1, 0.25, 0.5, 0.75, 1.0}) {
            const auto sa = oracle::top_q_set(a, q);
            const auto sb = oracle::top_q_set(b, q);
            std::set<std::pair<Eigen::Index, Eigen::Index>> both;
            std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(both, both.end()));
            const auto t = joint_top_quantile_average(matrix(a), matrix(b), q);
            CHECK(kept(t) == both);
            for (const auto& e : t.entries) CHECK((e.value >= 0.0 && e.value <= 1.0));
        }
    }
}

TEST_CASE("joint filter commutes with row and column permutations") {
    std::mt19937_64 rng(77);
    const auto a = tied_matrix(rng, 5, 4);
    const auto b = tied_matrix(rng, 5, 4);
    Eigen::PermutationMatrix<Eigen::Dynamic> pr(5), pc(4);
    pr.indices() << 3, 0, 4, 1, 2;
    pc.indices() << 2, 3, 1, 0;
    const Eigen::MatrixXd pa = pr * a * pc, pb = pr * b * pc;
    const auto base = joint_top_quantile_average(matrix(a), matrix(b), 0.25).dense();
    const auto permuted = joint_top_quantile_average(matrix(pa), matrix(pb), 0.25).dense();
    CHECK((Eigen::MatrixXd(pr * base * pc) - permuted).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("joint filter preconditions") {
    CHECK_THROWS_AS(joint_top_quantile_average(matrix(Eigen::MatrixXd::Ones(2, 2)), matrix(Eigen::MatrixXd::Ones(2, 3)), 0.5),
                    ValidationError);
    CHECK_THROWS_AS(joint_top_quantile_average(matrix(Eigen::MatrixXd::Ones(2, 2)), matrix(Eigen::MatrixXd::Ones(2, 2)), 0.0),
                    ValidationError);
    CHECK_THROWS_AS(top_quantile_threshold(Eigen::MatrixXd::Ones(2, 2), 1.5), ValidationError);
}

TEST_CASE("test embedder is deterministic and unit norm") {
    const std::vector<std::string> texts = {"abc", "Machine Learning", "Near Vision", "abc"};
    const auto a = test_embedder(texts, 64, 42);
    const auto b = test_embedder({"Near Vision", "abc"}, 64, 42);
    CHECK(a.size() == 3);
    CHECK(a.at("abc") == b.at("abc"));
    CHECK(a.at("Near Vision") == b.at("Near Vision"));
    for (const auto& id : a.ids()) CHECK(std::fabs(stable_norm(a.at(id)) - 1.0) <= 1e-9);
    CHECK(test_embedder({"abc"}, 64, 43).at("abc") != a.at("abc"));
    CHECK_THROWS_AS(test_embedder({""}, 64, 1), ValidationError);
    CHECK_THROWS_AS(test_embedder({"abc"}, 4, 1), ValidationError);
}

TEST_CASE("EMB1 layout matches a hand-built file") {
    std::string bytes = "EMB1";
    put_u32(bytes, 2);
    for (int i = 0; i < 8; ++i) bytes.push_back(i == 0 ? 1 : 0);  // u64 count = 1
    bytes.push_back(2);
    bytes.push_back(0);  // u16 id length
    bytes += "id";
    put_u32(bytes, std::bit_cast<std::uint32_t>(0.5f));
    put_u32(bytes, std::bit_cast<std::uint32_t>(-1.25f));

    std::istringstream in(bytes);
    const auto store = read_binary(in);
    CHECK(store.dim() == 2);
    CHECK(store.at("id") == std::vector<double>{0.5, -1.25});

    std::ostringstream out;
    write_binary(out, store);
    CHECK(out.str() == bytes);

    std::istringstream trailing(bytes + "x");
    CHECK_THROWS_AS(read_binary(trailing), DataError);
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_binary(truncated), DataError);
    std::istringstream magic("EMB2" + bytes.substr(4));
    CHECK_THROWS_AS(read_binary(magic), DataError);
}

TEST_CASE("binary and CSV stores round trip bit-exactly") {
    testing::TempDir dir;
    std::mt19937_64 rng(9);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    EmbeddingStore store(16);
    for (int r = 0; r < 20; ++r) {
        std::vector<double> v(16);
        for (auto& x : v) x = normal(rng);  // representable as f32
        store.add("entity \"" + std::to_string(r) + "\", ünï", std::move(v));
    }
    {
        std::ofstream bin(dir / "store.emb", std::ios::binary);
        write_binary(bin, store);
        std::ofstream txt(dir / "store.csv", std::ios::binary);
        write_csv(txt, store);
    }
    for (const char* name : {"store.emb", "store.csv"}) {
        const auto back = load_store(dir / name);
        REQUIRE(back.ids() == store.ids());
        CHECK(back.dim() == 16);
        for (const auto& id : store.ids()) {
            const auto& u = store.at(id);
            const auto& v = back.at(id);
            CHECK(std::memcmp(u.data(), v.data(), u.size() * sizeof(double)) == 0);
        }
    }
    testing::write_text(dir / "bad.csv", "id,v0,v2\nx,1,2\n");
    CHECK_THROWS_AS(load_store(dir / "bad.csv"), DataError);
}

TEST_CASE("link_entities falls back to names and uses both matrices") {
    const std::vector<LinkText> targets = {{"A1", "Near Vision", "See details at close range"},
                                           {"A2", "Oral Comprehension", ""}};
    const std::vector<LinkText> tags = {{"t1", "computer-vision", "Image understanding"},
                                        {"t2", "speech", "Spoken language recognition"}};
    std::vector<std::string> texts;
    for (const auto* list : {&targets, &tags})
        for (const auto& t : *list) {
            texts.push_back(t.name);
            if (!t.description.empty()) texts.push_back(t.description);
        }
    const auto store = test_embedder(texts, 64, 7);
    const auto full = link_entities(targets, tags, store, 1.0);
    CHECK(full.entries.size() == 4);
    const auto by_name = cosine_clamped(store.select({{"A2", "Oral Comprehension"}}), store.select({{"t2", "speech"}}));
    const auto by_desc = cosine_clamped(store.select({{"A2", "Oral Comprehension"}}),
                                        store.select({{"t2", "Spoken language recognition"}}));
    CHECK(full.dense()(1, 1) == (by_name.values(0, 0) + by_desc.values(0, 0)) / 2.0);

    std::ostringstream out;
    write_transition(out, full);
    testing::TempDir dir;
    const auto back = read_transition(testing::write_text(dir / "t.json", out.str()));
    CHECK(back.entries == full.entries);
    CHECK(back.row_ids == full.row_ids);

    CHECK_THROWS_AS(link_entities(targets, {{"t9", "unknown text", ""}}, store, 1.0), DataError);
}

TEST_CASE("cosine matrices are identical across thread counts") {
    std::vector<std::string> texts;
    for (int i = 0; i < 40; ++i) texts.push_back("title number " + std::to_string(i * 7));
    const auto store = test_embedder(texts, 32, 1);
    const auto one = cosine_clamped(store, store, 1);
    const auto four = cosine_clamped(store, store, 4);
    CHECK((one.values - four.values).cwiseAbs().maxCoeff() == 0.0);
}
