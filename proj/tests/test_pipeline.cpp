#include <doctest.h>

#include <filesystem>
#include <map>

#include "exposurelab/common.hpp"
#include "exposurelab/pipeline.hpp"
#include "support.hpp"

using namespace exposurelab;
using namespace exposurelab::pipeline;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = EXPOSURELAB_SOURCE_DIR;

RunConfig fixture_config(const fs::path& out) {
    auto c = RunConfig::load(kSource / "configs" / "synthetic.ini");
    c.out_dir = out;
    return c;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = testing::read_text(e.path());
    return files;
}

std::map<Stage, bool> hits(const std::vector<StageOutcome>& outcomes) {
    std::map<Stage, bool> m;
    for (const auto& o : outcomes) m[o.stage] = o.cache_hit;
    return m;
}

std::string validation_message(const RunConfig& c) {
    try {
        c.validate();
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

const RunOptions kQuiet{1, false};

}  // namespace

TEST_CASE("config validation names the offending field") {
    testing::TempDir dir;
    auto c = fixture_config(dir.path());
    CHECK(validation_message(c).empty());

    auto bad = c;
    bad.threshold = 1.5;
    CHECK(validation_message(bad) == "newwork.threshold must lie in (0,1], got 1.5");
    CHECK_THROWS_AS(run(Stage::all, bad, kQuiet), ValidationError);
    CHECK_FALSE(fs::exists(dir / "ingest"));

    bad = c;
    bad.decay = 1.0;
    CHECK(validation_message(bad).rfind("scoring.decay", 0) == 0);
    bad = c;
    bad.quantile = 0.0;
    CHECK(validation_message(bad).rfind("semlink.quantile", 0) == 0);
    bad = c;
    bad.countries.clear();
    CHECK(validation_message(bad).rfind("corpus.countries", 0) == 0);
    bad = c;
    bad.titles = dir / "missing.csv";
    CHECK(validation_message(bad).find("file not found") != std::string::npos);
}

TEST_CASE("config files reject unknown keys and bad values") {
    testing::TempDir dir;
    const auto base = testing::read_text(kSource / "configs" / "synthetic.ini");
    auto write_variant = [&](const std::string& from, const std::string& to) {
        auto text = base;
        const auto at = text.find(from);
        REQUIRE(at != std::string::npos);
        text.replace(at, from.size(), to);
        // keep relative input paths valid by writing next to the original
        return testing::write_text(dir / "configs" / "variant.ini", text);
    };
    fs::create_directory_symlink(kSource / "fixtures", dir / "fixtures");

    CHECK_THROWS_WITH_AS(RunConfig::load(write_variant("decay = 0.5", "decay = half")),
                         "scoring.decay: expected a number, got 'half'", ValidationError);
    CHECK_THROWS_WITH_AS(RunConfig::load(write_variant("decay = 0.5", "decay = 0.5\nspeed = 2")),
                         "config: unknown key scoring.speed", ValidationError);
    CHECK_THROWS_WITH_AS(RunConfig::load(write_variant("[iv]", "[extra]\nk = 1\n[iv]")),
                         "config: unknown section [extra]", ValidationError);
    CHECK_THROWS_AS(RunConfig::load(dir / "nope.ini"), ValidationError);

    const auto c = RunConfig::load(write_variant("threshold = 0.7", "threshold = 0.8"));
    CHECK(c.threshold == 0.8);
    CHECK(c.settings().at("newwork.threshold") == format_exact(0.8));
    CHECK(fs::equivalent(c.posts, kSource / "fixtures" / "synthetic" / "inputs" / "posts.jsonl"));
}

TEST_CASE("stage names") {
    for (auto s : stage_order()) CHECK(stage_from_string(to_string(s)) == s);
    CHECK(stage_from_string("all") == Stage::all);
    CHECK_THROWS_AS(stage_from_string("train"), ValidationError);
    CHECK(stage_order().size() == 7);
}

TEST_CASE("sha256 matches known digests") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    testing::TempDir dir;
    CHECK(sha256_file(testing::write_text(dir / "f", "abc")) == sha256_hex("abc"));
}

TEST_CASE("a second run is served from the cache with identical bytes") {
    testing::TempDir dir;
    const auto c = fixture_config(dir.path());
    const auto first = run(Stage::all, c, kQuiet);
    REQUIRE(first.size() == 7);
    for (const auto& o : first) {
        CHECK_FALSE(o.cache_hit);
        CHECK(o.reason == "no manifest");
    }
    const auto before = snapshot(dir.path());
    CHECK(before.contains("estimate/results.json"));
    CHECK(before.contains("panel/panel.csv"));

    for (const auto& o : run(Stage::all, c, kQuiet)) CHECK(o.cache_hit);
    CHECK(snapshot(dir.path()) == before);

    // a fresh directory reproduces the same bytes
    testing::TempDir again;
    run(Stage::all, fixture_config(again.path()), kQuiet);
    CHECK(snapshot(again.path()) == before);
}

TEST_CASE("a single stage runs only its upstream closure") {
    testing::TempDir dir;
    const auto outcomes = run(Stage::newwork, fixture_config(dir.path()), kQuiet);
    REQUIRE(outcomes.size() == 2);
    CHECK(outcomes[0].stage == Stage::ingest);
    CHECK(outcomes[1].stage == Stage::newwork);
    CHECK_FALSE(fs::exists(dir / "scores"));
}

TEST_CASE("changed inputs, settings and outputs invalidate downstream stages") {
    testing::TempDir dir;
    auto c = fixture_config(dir / "out");
    c.outcome_table = testing::write_text(dir / "outcomes.csv", testing::read_text(c.outcome_table));
    run(Stage::all, c, kQuiet);

    SUBCASE("input") {
        auto text = testing::read_text(c.outcome_table);
        const auto row = text.find(",2018,");
        REQUIRE(row != std::string::npos);
        text.insert(row + 6, "1");  // a panel-year wage gains a leading digit
        testing::write_text(c.outcome_table, text);
        auto h = hits(run(Stage::all, c, kQuiet));
        CHECK(h[Stage::ingest]);
        CHECK(h[Stage::exposure]);
        CHECK(h[Stage::newwork]);
        CHECK_FALSE(h[Stage::panel]);
        CHECK_FALSE(h[Stage::estimate]);
    }
    SUBCASE("setting") {
        c.decay = 0.4;
        const auto outcomes = run(Stage::all, c, kQuiet);
        auto h = hits(outcomes);
        CHECK(h[Stage::ingest]);
        CHECK(h[Stage::newwork]);
        CHECK_FALSE(h[Stage::scores]);
        CHECK(outcomes[1].reason == "config changed");
        CHECK_FALSE(h[Stage::exposure]);
        CHECK_FALSE(h[Stage::estimate]);
    }
    SUBCASE("output") {
        const auto panel = dir / "out" / "panel" / "panel.csv";
        testing::write_text(panel, testing::read_text(panel) + "\n");
        const auto outcomes = run(Stage::all, c, kQuiet);
        auto h = hits(outcomes);
        CHECK(h[Stage::newwork]);
        CHECK_FALSE(h[Stage::panel]);
        CHECK(outcomes[5].reason == "outputs missing or modified");
        // the regenerated panel is byte-identical, so estimation stays cached
        CHECK(h[Stage::estimate]);
    }
}

TEST_CASE("data errors surface from the stage that hits them") {
    testing::TempDir dir;
    auto c = fixture_config(dir / "out");
    c.outcome_table = testing::write_text(dir / "outcomes.csv",
                                          "occupation6,industry4,year,mean_hourly_wage,employment\n");
    CHECK_THROWS_AS(run(Stage::all, c, kQuiet), DataError);
    CHECK(fs::exists(dir / "out" / "newwork" / "manifest.json"));
    CHECK_FALSE(fs::exists(dir / "out" / "panel" / "manifest.json"));
}
