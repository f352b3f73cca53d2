#include "exposurelab/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"
#include "exposurelab/estimator.hpp"
#include "exposurelab/exposure.hpp"
#include "exposurelab/newwork.hpp"
#include "exposurelab/scoring.hpp"
#include "exposurelab/semlink.hpp"

namespace exposurelab::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"inputs",
         {"posts", "tags", "abilities", "ability_scores", "microtitles", "occupation_crosswalk", "industry_crosswalk",
          "occupation_universe", "titles", "outcomes", "covariates", "job_zones", "embeddings"}},
        {"corpus", {"countries", "first_year", "last_year"}},
        {"scoring", {"decay", "end_year"}},
        {"semlink", {"quantile", "embedding_dim", "embedding_seed"}},
        {"exposure", {"importance_lo", "importance_hi", "level_lo", "level_hi"}},
        {"newwork", {"threshold", "base_year", "last_year", "gender_table", "plural_table"}},
        {"panel", {"first_year", "last_year", "weights", "standardize"}},
        {"estimate", {"outcomes"}},
        {"iv",
         {"enabled", "posts", "tags", "countries", "first_year", "last_year", "end_year", "lag", "abilities",
          "ability_scores", "microtitles", "occupation_crosswalk", "industry_crosswalk", "occupation_universe"}},
        {"output", {"dir"}},
    };
    return keys;
}

class IniReader {
public:
    IniReader(const fs::path& path) : base_(path.parent_path()) {
        try {
            boost::property_tree::ini_parser::read_ini(path.string(), tree_);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ValidationError(std::string("config: ") + e.what());
        }
        const auto& allowed = allowed_keys();
        for (const auto& [section, body] : tree_) {
            auto it = allowed.find(section);
            if (it == allowed.end()) throw ValidationError("config: unknown section [" + section + "]");
            if (body.empty() && !body.data().empty())
                throw ValidationError("config: key '" + section + "' outside a section");
            for (const auto& [key, value] : body)
                if (!it->second.contains(key)) throw ValidationError("config: unknown key " + section + "." + key);
        }
    }

    std::optional<std::string> get(const std::string& section, const std::string& key) const {
        auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(section + "/" + key, '/'));
        if (!v) return std::nullopt;
        return trim(*v);
    }

    void text(const std::string& s, const std::string& k, std::string& out) const {
        if (auto v = get(s, k)) out = *v;
    }
    void path(const std::string& s, const std::string& k, fs::path& out) const {
        if (auto v = get(s, k)) out = resolve(*v);
    }
    void path(const std::string& s, const std::string& k, std::optional<fs::path>& out) const {
        if (auto v = get(s, k); v && !v->empty()) out = resolve(*v);
    }
    void number(const std::string& s, const std::string& k, double& out) const {
        if (auto v = get(s, k)) {
            std::size_t used = 0;
            try {
                out = std::stod(*v, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != v->size()) throw ValidationError(s + "." + k + ": expected a number, got '" + *v + "'");
        }
    }
    template <typename Int>
    void integer(const std::string& s, const std::string& k, Int& out) const {
        if (auto v = get(s, k)) {
            std::size_t used = 0;
            long long parsed = 0;
            try {
                parsed = std::stoll(*v, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != v->size()) throw ValidationError(s + "." + k + ": expected an integer, got '" + *v + "'");
            if constexpr (std::is_unsigned_v<Int>)
                if (parsed < 0) throw ValidationError(s + "." + k + ": must be non-negative");
            out = static_cast<Int>(parsed);
        }
    }
    void boolean(const std::string& s, const std::string& k, bool& out) const {
        if (auto v = get(s, k)) {
            if (*v == "true" || *v == "1" || *v == "yes") out = true;
            else if (*v == "false" || *v == "0" || *v == "no") out = false;
            else throw ValidationError(s + "." + k + ": expected true or false, got '" + *v + "'");
        }
    }
    void list(const std::string& s, const std::string& k, std::vector<std::string>& out) const {
        if (auto v = get(s, k)) {
            out.clear();
            for (auto& item : split(*v, ','))
                if (auto t = trim(item); !t.empty()) out.push_back(t);
        }
    }

    fs::path resolve(const std::string& value) const {
        const fs::path p(value);
        return (p.is_absolute() ? p : base_ / p).lexically_normal();
    }

private:
    fs::path base_;
    boost::property_tree::ptree tree_;
};

void read_taxonomy(const IniReader& ini, const std::string& section, corpus::TaxonomyPaths& t) {
    ini.path(section, "abilities", t.abilities);
    ini.path(section, "ability_scores", t.ability_scores);
    ini.path(section, "microtitles", t.microtitles);
    ini.path(section, "occupation_crosswalk", t.occupation_crosswalk);
    ini.path(section, "industry_crosswalk", t.industry_crosswalk);
}

std::set<std::string> country_set(const std::vector<std::string>& items) {
    std::set<std::string> out;
    for (const auto& c : items) {
        std::string upper = c;
        std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) { return std::toupper(ch); });
        out.insert(upper);
    }
    return out;
}

void require_file(const std::string& field, const fs::path& path) {
    if (path.empty()) throw ValidationError(field + ": path is required");
    if (!fs::is_regular_file(path)) throw ValidationError(field + ": file not found: " + path.string());
}

std::string hex(const unsigned char* bytes, unsigned len) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        out += digits[bytes[i] >> 4];
        out += digits[bytes[i] & 0xF];
    }
    return out;
}

struct Context {
    const RunConfig& config;
    fs::path out;
    unsigned threads = 1;
};

fs::path stage_dir(const Context& ctx, Stage s) { return ctx.out / std::string(to_string(s)); }

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    body(out);
    out.flush();
    if (!out) throw DataError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> load_universe(const std::optional<fs::path>& path) {
    if (!path) return {};
    const auto table = csv::read(*path);
    const auto col = table.column("occupation8");
    std::vector<std::string> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        auto code = trim(table.rows[r][col]);
        if (code.size() != 8 || !is_digits(code))
            throw DataError(table.where(r) + ": occupation8 must be 8 digits, got '" + code + "'");
        out.push_back(std::move(code));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

newwork::TitleNormalizer make_normalizer(const RunConfig& c) {
    if (c.gender_table || c.plural_table) {
        return newwork::TitleNormalizer(newwork::NormalizationTables::from_files(
            c.gender_table.value_or(fs::path()), c.plural_table.value_or(fs::path())));
    }
    return newwork::TitleNormalizer();
}

// Posts of one run: the main corpus or the instrument group.
struct CorpusSpec {
    fs::path posts;
    fs::path tags;
    std::set<std::string> countries;
    corpus::YearRange years;
    int end_year = 0;
    corpus::TaxonomyPaths taxonomy;
    std::optional<fs::path> universe;
};

CorpusSpec main_corpus(const RunConfig& c) {
    return {c.posts, c.tags, c.countries, c.years, c.end_year, c.taxonomy, c.occupation_universe};
}

CorpusSpec iv_corpus(const RunConfig& c) {
    return {c.iv.posts, c.iv.tags, c.iv.countries, c.iv.years, c.iv.end_year, c.iv.taxonomy, c.iv.occupation_universe};
}

std::vector<CorpusSpec> corpora(const RunConfig& c) {
    std::vector<CorpusSpec> out{main_corpus(c)};
    if (c.iv.enabled) out.push_back(iv_corpus(c));
    return out;
}

std::string suffix(std::size_t run) { return run == 0 ? "" : "_iv"; }

json report_json(const corpus::PostLoadReport& r) {
    return {{"read", r.read},
            {"retained", r.retained},
            {"outside_countries", r.outside_countries},
            {"outside_years", r.outside_years},
            {"unknown_country", r.unknown_country},
            {"few_tags", r.few_tags}};
}

void add_link_texts(std::set<std::string>& texts, const std::vector<semlink::LinkText>& items) {
    for (const auto& it : items) {
        texts.insert(it.name);
        texts.insert(it.description.empty() ? it.name : it.description);
    }
}

// ---- stages ---------------------------------------------------------------

void stage_ingest(const Context& ctx, const fs::path& dir) {
    const auto& c = ctx.config;
    json summary;
    std::set<std::string> texts;
    const auto runs = corpora(c);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        const auto tags = corpus::load_tags(run.tags);
        for (const auto& id : tags.flagged_empty_description())
            warn("tag " + id + " has no description; its name is used instead");
        corpus::PostLoadReport report;
        const auto posts = corpus::load_posts(run.posts, {run.countries, run.years}, tags, &report);
        const auto ai = corpus::select_ai_posts(posts, tags);
        if (ai.empty()) throw DataError(std::string(i == 0 ? "main" : "instrument") + " corpus has no AI-related posts");
        const auto tax = corpus::load_taxonomies(run.taxonomy);
        const auto universe = load_universe(run.universe);

        std::size_t occ_titles = 0;
        for (const auto& t : tax.microtitles) occ_titles += t.kind == corpus::TitleKind::occupation;
        json j;
        j["posts"] = report_json(report);
        j["ai_posts"] = ai.size();
        j["tags"] = tags.tags().size();
        j["ai_tags"] = tags.ai_tags().size();
        j["tags_without_description"] = tags.flagged_empty_description();
        j["abilities"] = tax.abilities.size();
        j["requirements"] = tax.requirements.size();
        j["occupation_microtitles"] = occ_titles;
        j["industry_microtitles"] = tax.microtitles.size() - occ_titles;
        j["occupation_crosswalk_rows"] = tax.occupation_crosswalk.rows().size();
        j["industry_crosswalk_rows"] = tax.industry_crosswalk.rows().size();
        j["occupation_universe"] = universe.size();
        summary[i == 0 ? "main" : "instrument"] = std::move(j);

        const auto tag_texts = exposure::tag_link_texts(tags);
        add_link_texts(texts, tag_texts);
        add_link_texts(texts, exposure::ability_link_texts(tax.abilities));
        add_link_texts(texts, exposure::micro_link_texts(tax.microtitles, corpus::TitleKind::occupation));
        add_link_texts(texts, exposure::micro_link_texts(tax.microtitles, corpus::TitleKind::industry));
    }

    const auto rows = newwork::load_titles(c.titles);
    const auto normalize = make_normalizer(c);
    std::set<std::string> normalized;
    for (const auto& r : rows) normalized.insert(normalize(r.title));
    texts.insert(normalized.begin(), normalized.end());
    summary["titles"] = {{"rows", rows.size()}, {"normalized", normalized.size()}};
    summary["texts"] = texts.size();

    write_file(dir / "summary.json", [&](std::ostream& out) { out << summary.dump(2) << '\n'; });
    write_file(dir / "texts.csv", [&](std::ostream& out) {
        csv::Writer w(out);
        w.row({"id", "text"});
        for (const auto& t : texts) w.row({t, t});
    });
}

void stage_scores(const Context& ctx, const fs::path& dir) {
    const auto runs = corpora(ctx.config);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        const auto tags = corpus::load_tags(run.tags);
        const auto posts = corpus::select_ai_posts(corpus::load_posts(run.posts, {run.countries, run.years}, tags), tags);
        const auto series = scoring::smooth_question_scores(posts, ctx.config.decay, run.end_year);
        const auto scores = scoring::tag_year_scores(series, posts);
        write_file(dir / ("tag_scores" + suffix(i) + ".csv"), [&](std::ostream& out) { scoring::write_tag_scores(out, scores); });
    }
}

semlink::EmbeddingStore text_store(const Context& ctx) {
    const auto& c = ctx.config;
    const auto table = csv::read(ctx.out / "ingest" / "texts.csv");
    const auto col = table.column("text");
    std::vector<std::string> texts;
    for (const auto& row : table.rows) texts.push_back(row[col]);
    if (c.embeddings == "test") return semlink::test_embedder(texts, c.embedding_dim, c.embedding_seed);
    auto store = semlink::load_store(fs::path(c.embeddings));
    std::vector<std::string> missing;
    for (const auto& t : texts)
        if (!store.contains(t)) missing.push_back(t);
    if (!missing.empty()) {
        if (missing.size() > 5) missing.resize(5);
        throw DataError("embedding store " + c.embeddings + " lacks texts: " + join(missing, " | "));
    }
    return store;
}

void stage_matrices(const Context& ctx, const fs::path& dir) {
    const auto store = text_store(ctx);
    const auto runs = corpora(ctx.config);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        const auto tags = exposure::tag_link_texts(corpus::load_tags(run.tags));
        const auto tax = corpus::load_taxonomies(run.taxonomy);
        const double q = ctx.config.quantile;
        const auto save = [&](const std::string& name, const std::vector<semlink::LinkText>& targets) {
            const auto m = semlink::link_entities(targets, tags, store, q, ctx.threads);
            write_file(dir / (name + suffix(i) + ".json"), [&](std::ostream& out) { semlink::write_transition(out, m); });
        };
        save("ability_links", exposure::ability_link_texts(tax.abilities));
        save("occupation_title_links", exposure::micro_link_texts(tax.microtitles, corpus::TitleKind::occupation));
        save("industry_title_links", exposure::micro_link_texts(tax.microtitles, corpus::TitleKind::industry));
    }
}

struct ExposureRun {
    exposure::AutomationResult automation;
    exposure::AugmentationResult augmentation;
};

ExposureRun exposure_run(const Context& ctx, const CorpusSpec& run, std::size_t i) {
    const auto scores = scoring::read_tag_scores(ctx.out / "scores" / ("tag_scores" + suffix(i) + ".csv"));
    const auto mdir = ctx.out / "matrices";
    const auto abilities = semlink::read_transition(mdir / ("ability_links" + suffix(i) + ".json"));
    const auto occ = semlink::read_transition(mdir / ("occupation_title_links" + suffix(i) + ".json"));
    const auto ind = semlink::read_transition(mdir / ("industry_title_links" + suffix(i) + ".json"));
    const auto tax = corpus::load_taxonomies(run.taxonomy);

    exposure::IndexOptions options;
    options.years = run.years;
    options.decay = ctx.config.decay;
    options.end_year = run.end_year;
    options.quantile = ctx.config.quantile;
    options.importance = run.taxonomy.importance;
    options.level = run.taxonomy.level;
    options.threads = ctx.threads;
    return {exposure::automation_from_links(scores, abilities, tax, load_universe(run.universe), options),
            exposure::augmentation_from_links(scores, occ, ind, tax, options)};
}

void stage_exposure(const Context& ctx, const fs::path& dir) {
    const auto save = [&](const std::string& name, const exposure::ExposureSeries& s) {
        write_file(dir / (name + ".csv"), [&](std::ostream& out) { exposure::write_series(out, s); });
    };
    const auto main = exposure_run(ctx, main_corpus(ctx.config), 0);
    save("ability", main.automation.abilities);
    save("automation_occ8", main.automation.occ8);
    save("automation", main.automation.occ6);
    save("augmentation_occupation", main.augmentation.occupation6);
    save("augmentation_industry", main.augmentation.industry4);
    save("augmentation", main.augmentation.cells);
    if (ctx.config.iv.enabled) {
        const auto iv = exposure_run(ctx, iv_corpus(ctx.config), 1);
        save("instrument_automation", exposure::shift_years(iv.automation.occ6, ctx.config.iv.lag));
        save("instrument_augmentation", exposure::shift_years(iv.augmentation.cells, ctx.config.iv.lag));
    }
}

void stage_newwork(const Context& ctx, const fs::path& dir) {
    const auto& c = ctx.config;
    const auto store = text_store(ctx);
    const auto tax = corpus::load_taxonomies(c.taxonomy);
    const auto sets = newwork::build_title_sets(newwork::load_titles(c.titles), make_normalizer(c), tax.occupation_crosswalk);
    const auto ledger = newwork::build_ledger(sets, c.base_year, newwork::embedding_similarity(store), c.threshold);
    for (const auto& [occ, by_year] : sets)
        if (!ledger.base_counts.contains(occ)) warn("occupation " + occ + " has no titles in the base year; no share");
    write_file(dir / "newwork.csv", [&](std::ostream& out) { newwork::write_decisions(out, ledger); });
    write_file(dir / "shares.csv", [&](std::ostream& out) { newwork::write_shares(out, ledger, c.last_year); });
}

void stage_panel(const Context& ctx, const fs::path& dir) {
    const auto& c = ctx.config;
    const auto edir = ctx.out / "exposure";
    const auto automation = exposure::read_series(edir / "automation.csv", exposure::Level::occupation6);
    const auto augmentation = exposure::read_series(edir / "augmentation.csv", exposure::Level::occ6_ind4);
    std::optional<exposure::Instruments> instruments;
    if (c.iv.enabled)
        instruments = exposure::Instruments{
            exposure::read_series(edir / "instrument_automation.csv", exposure::Level::occupation6),
            exposure::read_series(edir / "instrument_augmentation.csv", exposure::Level::occ6_ind4)};

    panel::PanelSources sources;
    sources.automation = &automation;
    sources.augmentation = &augmentation;
    sources.instruments = instruments ? &*instruments : nullptr;
    sources.shares = newwork::read_shares(ctx.out / "newwork" / "shares.csv");
    sources.outcomes = c.outcome_table;
    sources.covariates = c.covariates;

    panel::PanelOptions options;
    options.weights = c.weights;
    options.years = c.panel_years;
    options.standardize_on_panel = c.standardize_on_panel;
    panel::PanelReport report;
    const auto frame = panel::build_panel(sources, options, &report);
    if (frame.size() == 0) throw DataError("panel is empty after joining exposures, shares, outcomes and covariates");

    write_file(dir / "panel.csv", [&](std::ostream& out) { panel::write_panel(out, frame); });
    json r;
    r["candidates"] = report.candidates;
    r["dropped"] = report.dropped;
    r["kept"] = report.kept;
    r["weights"] = c.weights.to_string();
    write_file(dir / "panel_report.json", [&](std::ostream& out) { out << r.dump(2) << '\n'; });
}

void stage_estimate(const Context& ctx, const fs::path& dir) {
    const auto& c = ctx.config;
    const auto frame = panel::read_panel(ctx.out / "panel" / "panel.csv");
    std::vector<estimator::RegressionResult> results;
    std::ostringstream tables;
    for (const auto& outcome : c.outcomes) {
        std::vector<estimator::RegressionResult> block;
        for (const auto& spec : estimator::table_specs(frame, outcome)) block.push_back(estimator::run_spec(frame, spec));
        tables << estimator::render_table("Outcome: " + outcome, block) << '\n';
        results.insert(results.end(), block.begin(), block.end());
    }

    json skipped = json::array();
    if (c.job_zones) {
        const auto groups = panel::skill_partition(frame, panel::load_job_zones(*c.job_zones));
        const std::vector<std::pair<std::string, const panel::PanelFrame*>> parts = {
            {"low", &groups.low}, {"middle", &groups.middle}, {"high", &groups.high}};
        for (const auto& [name, part] : parts) {
            for (const auto& outcome : c.outcomes) {
                std::vector<estimator::RegressionResult> block;
                for (const auto& spec : estimator::table_specs(*part, outcome, "skill_" + name + "/" + outcome + "/")) {
                    try {
                        block.push_back(estimator::run_spec(*part, spec));
                    } catch (const Error& e) {
                        warn("spec " + spec.id + " skipped: " + e.what());
                        skipped.push_back({{"spec_id", spec.id}, {"reason", e.what()}});
                    }
                }
                if (!block.empty())
                    tables << estimator::render_table("Skill group " + name + ", outcome: " + outcome, block) << '\n';
                results.insert(results.end(), block.begin(), block.end());
            }
        }
    }

    write_file(dir / "results.csv", [&](std::ostream& out) { estimator::write_results_csv(out, results); });
    write_file(dir / "results.json", [&](std::ostream& out) { estimator::write_results_json(out, results); });
    write_file(dir / "tables.txt", [&](std::ostream& out) { out << tables.str(); });
    write_file(dir / "skipped.json", [&](std::ostream& out) { out << skipped.dump(2) << '\n'; });
}

// ---- caching ---------------------------------------------------------------

struct StagePlan {
    std::vector<std::string> sections;
    std::vector<std::pair<std::string, fs::path>> inputs;
    std::vector<Stage> upstream;
    std::function<void(const Context&, const fs::path&)> body;
};

void add_taxonomy_inputs(std::vector<std::pair<std::string, fs::path>>& in, const std::string& prefix,
                         const corpus::TaxonomyPaths& t) {
    in.emplace_back(prefix + ".abilities", t.abilities);
    in.emplace_back(prefix + ".ability_scores", t.ability_scores);
    in.emplace_back(prefix + ".microtitles", t.microtitles);
    if (t.occupation_crosswalk) in.emplace_back(prefix + ".occupation_crosswalk", *t.occupation_crosswalk);
    if (t.industry_crosswalk) in.emplace_back(prefix + ".industry_crosswalk", *t.industry_crosswalk);
}

StagePlan plan(Stage s, const RunConfig& c) {
    StagePlan p;
    auto corpus_inputs = [&] {
        p.inputs.emplace_back("inputs.posts", c.posts);
        p.inputs.emplace_back("inputs.tags", c.tags);
        if (c.iv.enabled) {
            p.inputs.emplace_back("iv.posts", c.iv.posts);
            p.inputs.emplace_back("iv.tags", c.iv.tags);
        }
    };
    auto taxonomy_inputs = [&] {
        add_taxonomy_inputs(p.inputs, "inputs", c.taxonomy);
        if (c.occupation_universe) p.inputs.emplace_back("inputs.occupation_universe", *c.occupation_universe);
        if (c.iv.enabled) {
            add_taxonomy_inputs(p.inputs, "iv", c.iv.taxonomy);
            if (c.iv.occupation_universe) p.inputs.emplace_back("iv.occupation_universe", *c.iv.occupation_universe);
        }
    };
    auto normalizer_inputs = [&] {
        if (c.gender_table) p.inputs.emplace_back("newwork.gender_table", *c.gender_table);
        if (c.plural_table) p.inputs.emplace_back("newwork.plural_table", *c.plural_table);
    };
    switch (s) {
        case Stage::ingest:
            p.sections = {"inputs", "corpus", "iv", "newwork"};
            corpus_inputs();
            taxonomy_inputs();
            p.inputs.emplace_back("inputs.titles", c.titles);
            normalizer_inputs();
            p.body = stage_ingest;
            break;
        case Stage::scores:
            p.sections = {"corpus", "scoring", "iv"};
            corpus_inputs();
            p.upstream = {Stage::ingest};
            p.body = stage_scores;
            break;
        case Stage::matrices:
            p.sections = {"inputs", "semlink", "iv"};
            corpus_inputs();
            taxonomy_inputs();
            if (c.embeddings != "test") p.inputs.emplace_back("inputs.embeddings", fs::path(c.embeddings));
            p.upstream = {Stage::ingest};
            p.body = stage_matrices;
            break;
        case Stage::exposure:
            p.sections = {"corpus", "scoring", "semlink", "exposure", "iv"};
            taxonomy_inputs();
            p.upstream = {Stage::scores, Stage::matrices};
            p.body = stage_exposure;
            break;
        case Stage::newwork:
            p.sections = {"inputs", "semlink", "newwork"};
            p.inputs.emplace_back("inputs.titles", c.titles);
            add_taxonomy_inputs(p.inputs, "inputs", c.taxonomy);
            normalizer_inputs();
            if (c.embeddings != "test") p.inputs.emplace_back("inputs.embeddings", fs::path(c.embeddings));
            p.upstream = {Stage::ingest};
            p.body = stage_newwork;
            break;
        case Stage::panel:
            p.sections = {"panel", "iv"};
            p.inputs.emplace_back("inputs.outcomes", c.outcome_table);
            p.inputs.emplace_back("inputs.covariates", c.covariates);
            p.upstream = {Stage::exposure, Stage::newwork};
            p.body = stage_panel;
            break;
        case Stage::estimate:
            p.sections = {"estimate"};
            if (c.job_zones) p.inputs.emplace_back("inputs.job_zones", *c.job_zones);
            p.upstream = {Stage::panel};
            p.body = stage_estimate;
            break;
        case Stage::all:
            throw ValidationError("'all' is not a single stage");
    }
    return p;
}

std::size_t data_rows(const fs::path& path, const std::string& bytes) {
    const auto lines = static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n'));
    return path.extension() == ".csv" && lines > 0 ? lines - 1 : lines;
}

json output_listing(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    json out = json::object();
    for (const auto& f : files) {
        const auto bytes = read_file(f);
        out[f.filename().string()] = {{"sha256", sha256_hex(bytes)}, {"rows", data_rows(f, bytes)}};
    }
    return out;
}

std::string config_hash(const RunConfig& c, const std::vector<std::string>& sections) {
    std::string canonical;
    for (const auto& [key, value] : c.settings()) {
        const auto section = key.substr(0, key.find('.'));
        if (std::find(sections.begin(), sections.end(), section) == sections.end()) continue;
        canonical += key + "=" + value + "\n";
    }
    return sha256_hex(canonical);
}

// Empty when the manifest is still valid, otherwise the reason it is not.
std::string cache_miss_reason(const fs::path& dir, const json& expected) {
    const auto manifest = dir / "manifest.json";
    if (!fs::exists(manifest)) return "no manifest";
    json m;
    try {
        m = json::parse(read_file(manifest));
    } catch (const json::exception&) {
        return "unreadable manifest";
    }
    if (m.value("config_hash", "") != expected["config_hash"]) return "config changed";
    if (m["inputs"] != expected["inputs"]) {
        for (const auto& [name, sha] : expected["inputs"].items())
            if (!m["inputs"].contains(name) || m["inputs"][name] != sha) return "input " + name + " changed";
        return "input set changed";
    }
    try {
        if (output_listing(dir) != m.at("outputs")) return "outputs missing or modified";
    } catch (const std::exception&) {
        return "outputs missing or modified";
    }
    return {};
}

StageOutcome execute(Stage s, const Context& ctx, const RunOptions& options) {
    const auto p = plan(s, ctx.config);
    const auto dir = stage_dir(ctx, s);

    json expected;
    expected["stage"] = std::string(to_string(s));
    expected["config_hash"] = config_hash(ctx.config, p.sections);
    json inputs = json::object();
    for (const auto& [name, path] : p.inputs) inputs[name] = sha256_file(path);
    for (auto up : p.upstream) {
        const auto updir = stage_dir(ctx, up);
        const auto listing = output_listing(updir);
        for (const auto& [file, meta] : listing.items())
            inputs[std::string(to_string(up)) + "/" + file] = meta["sha256"];
    }
    expected["inputs"] = std::move(inputs);

    StageOutcome outcome;
    outcome.stage = s;
    outcome.reason = cache_miss_reason(dir, expected);
    if (outcome.reason.empty()) {
        outcome.cache_hit = true;
        if (options.verbose) std::cerr << "exposure-lab: " << to_string(s) << ": cache hit\n";
        return outcome;
    }
    if (options.verbose) std::cerr << "exposure-lab: " << to_string(s) << ": running (" << outcome.reason << ")\n";

    if (fs::exists(dir)) fs::remove_all(dir);
    fs::create_directories(dir);
    p.body(ctx, dir);
    expected["outputs"] = output_listing(dir);
    write_file(dir / "manifest.json", [&](std::ostream& out) { out << expected.dump(2) << '\n'; });
    return outcome;
}

std::string path_setting(const fs::path& p, const fs::path& base) {
    if (p.empty()) return "";
    auto rel = p.lexically_relative(base);
    return (rel.empty() ? p : rel).generic_string();
}

}  // namespace

RunConfig RunConfig::load(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ValidationError("config file not found: " + path.string());
    const IniReader ini(path);
    RunConfig c;
    c.source = fs::absolute(path).lexically_normal();
    c.out_dir = ini.resolve("out");

    ini.path("inputs", "posts", c.posts);
    ini.path("inputs", "tags", c.tags);
    read_taxonomy(ini, "inputs", c.taxonomy);
    ini.path("inputs", "occupation_universe", c.occupation_universe);
    ini.path("inputs", "titles", c.titles);
    ini.path("inputs", "outcomes", c.outcome_table);
    ini.path("inputs", "covariates", c.covariates);
    ini.path("inputs", "job_zones", c.job_zones);
    ini.text("inputs", "embeddings", c.embeddings);
    if (c.embeddings != "test") c.embeddings = ini.resolve(c.embeddings).string();

    std::vector<std::string> countries;
    ini.list("corpus", "countries", countries);
    c.countries = country_set(countries);
    ini.integer("corpus", "first_year", c.years.first);
    ini.integer("corpus", "last_year", c.years.last);

    ini.number("scoring", "decay", c.decay);
    ini.integer("scoring", "end_year", c.end_year);

    ini.number("semlink", "quantile", c.quantile);
    ini.integer("semlink", "embedding_dim", c.embedding_dim);
    ini.integer("semlink", "embedding_seed", c.embedding_seed);

    ini.number("exposure", "importance_lo", c.taxonomy.importance.lo);
    ini.number("exposure", "importance_hi", c.taxonomy.importance.hi);
    ini.number("exposure", "level_lo", c.taxonomy.level.lo);
    ini.number("exposure", "level_hi", c.taxonomy.level.hi);

    ini.number("newwork", "threshold", c.threshold);
    ini.integer("newwork", "base_year", c.base_year);
    ini.integer("newwork", "last_year", c.last_year);
    ini.path("newwork", "gender_table", c.gender_table);
    ini.path("newwork", "plural_table", c.plural_table);

    ini.integer("panel", "first_year", c.panel_years.first);
    ini.integer("panel", "last_year", c.panel_years.last);
    if (auto w = ini.get("panel", "weights")) {
        try {
            c.weights = panel::WeightsSpec::parse(*w);
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("panel.weights: ") + e.what());
        }
    }
    if (auto s = ini.get("panel", "standardize")) {
        if (*s == "panel") c.standardize_on_panel = true;
        else if (*s == "all") c.standardize_on_panel = false;
        else throw ValidationError("panel.standardize: expected 'panel' or 'all', got '" + *s + "'");
    }

    ini.list("estimate", "outcomes", c.outcomes);
    ini.path("output", "dir", c.out_dir);

    ini.boolean("iv", "enabled", c.iv.enabled);
    c.iv.posts = c.posts;
    c.iv.tags = c.tags;
    c.iv.taxonomy = c.taxonomy;
    c.iv.occupation_universe = c.occupation_universe;
    ini.path("iv", "posts", c.iv.posts);
    ini.path("iv", "tags", c.iv.tags);
    std::vector<std::string> iv_countries;
    ini.list("iv", "countries", iv_countries);
    c.iv.countries = country_set(iv_countries);
    ini.integer("iv", "first_year", c.iv.years.first);
    ini.integer("iv", "last_year", c.iv.years.last);
    ini.integer("iv", "end_year", c.iv.end_year);
    ini.integer("iv", "lag", c.iv.lag);
    read_taxonomy(ini, "iv", c.iv.taxonomy);
    ini.path("iv", "occupation_universe", c.iv.occupation_universe);
    return c;
}

void RunConfig::validate() const {
    if (!(decay > 0.0 && decay < 1.0)) throw ValidationError("scoring.decay must lie in (0,1), got " + format_exact(decay));
    if (!(quantile > 0.0 && quantile <= 1.0))
        throw ValidationError("semlink.quantile must lie in (0,1], got " + format_exact(quantile));
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ValidationError("newwork.threshold must lie in (0,1], got " + format_exact(threshold));
    if (embedding_dim < 8) throw ValidationError("semlink.embedding_dim must be >= 8");
    if (countries.empty()) throw ValidationError("corpus.countries: empty country filter");
    if (years.empty()) throw ValidationError("corpus: first_year is after last_year");
    if (years.last > end_year) throw ValidationError("corpus.last_year must not exceed scoring.end_year");
    if (base_year >= last_year) throw ValidationError("newwork.base_year must precede newwork.last_year");
    if (panel_years.empty()) throw ValidationError("panel: first_year is after last_year");
    if (!(taxonomy.importance.hi > taxonomy.importance.lo)) throw ValidationError("exposure.importance bounds are empty");
    if (!(taxonomy.level.hi > taxonomy.level.lo)) throw ValidationError("exposure.level bounds are empty");
    if (outcomes.empty()) throw ValidationError("estimate.outcomes is empty");
    for (const auto& o : outcomes)
        if (o != "new_work_share" && o != "log_wage" && o != "log_emp")
            throw ValidationError("estimate.outcomes: unknown outcome '" + o + "'");

    require_file("inputs.posts", posts);
    require_file("inputs.tags", tags);
    require_file("inputs.abilities", taxonomy.abilities);
    require_file("inputs.ability_scores", taxonomy.ability_scores);
    require_file("inputs.microtitles", taxonomy.microtitles);
    if (taxonomy.occupation_crosswalk) require_file("inputs.occupation_crosswalk", *taxonomy.occupation_crosswalk);
    if (taxonomy.industry_crosswalk) require_file("inputs.industry_crosswalk", *taxonomy.industry_crosswalk);
    if (occupation_universe) require_file("inputs.occupation_universe", *occupation_universe);
    require_file("inputs.titles", titles);
    require_file("inputs.outcomes", outcome_table);
    require_file("inputs.covariates", covariates);
    if (job_zones) require_file("inputs.job_zones", *job_zones);
    if (embeddings != "test") require_file("inputs.embeddings", embeddings);
    if (gender_table || plural_table) {
        if (!gender_table || !plural_table)
            throw ValidationError("newwork: gender_table and plural_table must be given together");
        require_file("newwork.gender_table", *gender_table);
        require_file("newwork.plural_table", *plural_table);
    }

    if (iv.enabled) {
        if (iv.countries.empty()) throw ValidationError("iv.countries: empty country filter");
        if (iv.years.empty()) throw ValidationError("iv: first_year is after last_year");
        if (iv.years.last > iv.end_year) throw ValidationError("iv.last_year must not exceed iv.end_year");
        if (iv.lag < 0) throw ValidationError("iv.lag must be >= 0, got " + std::to_string(iv.lag));
        require_file("iv.posts", iv.posts);
        require_file("iv.tags", iv.tags);
        require_file("iv.abilities", iv.taxonomy.abilities);
        require_file("iv.ability_scores", iv.taxonomy.ability_scores);
        require_file("iv.microtitles", iv.taxonomy.microtitles);
        if (iv.taxonomy.occupation_crosswalk) require_file("iv.occupation_crosswalk", *iv.taxonomy.occupation_crosswalk);
        if (iv.taxonomy.industry_crosswalk) require_file("iv.industry_crosswalk", *iv.taxonomy.industry_crosswalk);
        if (iv.occupation_universe) require_file("iv.occupation_universe", *iv.occupation_universe);
    } else if (iv.lag < 0) {
        throw ValidationError("iv.lag must be >= 0, got " + std::to_string(iv.lag));
    }
}

std::map<std::string, std::string> RunConfig::settings() const {
    const auto base = source.parent_path();
    auto p = [&](const fs::path& path) { return path_setting(path, base); };
    auto po = [&](const std::optional<fs::path>& path) { return path ? p(*path) : std::string(); };
    auto set = [](const std::set<std::string>& s) { return join({s.begin(), s.end()}, ","); };
    std::map<std::string, std::string> s;
    s["inputs.posts"] = p(posts);
    s["inputs.tags"] = p(tags);
    s["inputs.abilities"] = p(taxonomy.abilities);
    s["inputs.ability_scores"] = p(taxonomy.ability_scores);
    s["inputs.microtitles"] = p(taxonomy.microtitles);
    s["inputs.occupation_crosswalk"] = po(taxonomy.occupation_crosswalk);
    s["inputs.industry_crosswalk"] = po(taxonomy.industry_crosswalk);
    s["inputs.occupation_universe"] = po(occupation_universe);
    s["inputs.titles"] = p(titles);
    s["inputs.outcomes"] = p(outcome_table);
    s["inputs.covariates"] = p(covariates);
    s["inputs.job_zones"] = po(job_zones);
    s["inputs.embeddings"] = embeddings == "test" ? embeddings : p(embeddings);
    s["corpus.countries"] = set(countries);
    s["corpus.first_year"] = std::to_string(years.first);
    s["corpus.last_year"] = std::to_string(years.last);
    s["scoring.decay"] = format_exact(decay);
    s["scoring.end_year"] = std::to_string(end_year);
    s["semlink.quantile"] = format_exact(quantile);
    s["semlink.embedding_dim"] = std::to_string(embedding_dim);
    s["semlink.embedding_seed"] = std::to_string(embedding_seed);
    s["exposure.importance_lo"] = format_exact(taxonomy.importance.lo);
    s["exposure.importance_hi"] = format_exact(taxonomy.importance.hi);
    s["exposure.level_lo"] = format_exact(taxonomy.level.lo);
    s["exposure.level_hi"] = format_exact(taxonomy.level.hi);
    s["newwork.threshold"] = format_exact(threshold);
    s["newwork.base_year"] = std::to_string(base_year);
    s["newwork.last_year"] = std::to_string(last_year);
    s["newwork.gender_table"] = po(gender_table);
    s["newwork.plural_table"] = po(plural_table);
    s["panel.first_year"] = std::to_string(panel_years.first);
    s["panel.last_year"] = std::to_string(panel_years.last);
    s["panel.weights"] = weights.to_string();
    s["panel.standardize"] = standardize_on_panel ? "panel" : "all";
    s["estimate.outcomes"] = join(outcomes, ",");
    s["iv.enabled"] = iv.enabled ? "true" : "false";
    if (iv.enabled) {
        s["iv.posts"] = p(iv.posts);
        s["iv.tags"] = p(iv.tags);
        s["iv.countries"] = set(iv.countries);
        s["iv.first_year"] = std::to_string(iv.years.first);
        s["iv.last_year"] = std::to_string(iv.years.last);
        s["iv.end_year"] = std::to_string(iv.end_year);
        s["iv.lag"] = std::to_string(iv.lag);
        s["iv.abilities"] = p(iv.taxonomy.abilities);
        s["iv.ability_scores"] = p(iv.taxonomy.ability_scores);
        s["iv.microtitles"] = p(iv.taxonomy.microtitles);
        s["iv.occupation_crosswalk"] = po(iv.taxonomy.occupation_crosswalk);
        s["iv.industry_crosswalk"] = po(iv.taxonomy.industry_crosswalk);
        s["iv.occupation_universe"] = po(iv.occupation_universe);
    }
    return s;
}

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::ingest: return "ingest";
        case Stage::scores: return "scores";
        case Stage::matrices: return "matrices";
        case Stage::exposure: return "exposure";
        case Stage::newwork: return "newwork";
        case Stage::panel: return "panel";
        case Stage::estimate: return "estimate";
        case Stage::all: return "all";
    }
    return "?";
}

Stage stage_from_string(std::string_view text) {
    for (auto s : {Stage::ingest, Stage::scores, Stage::matrices, Stage::exposure, Stage::newwork, Stage::panel,
                   Stage::estimate, Stage::all})
        if (to_string(s) == text) return s;
    throw ValidationError("unknown stage '" + std::string(text) +
                          "' (expected ingest, scores, matrices, exposure, newwork, panel, estimate or all)");
}

const std::vector<Stage>& stage_order() {
    static const std::vector<Stage> order = {Stage::ingest,   Stage::scores, Stage::matrices, Stage::exposure,
                                             Stage::newwork,  Stage::panel,  Stage::estimate};
    return order;
}

std::vector<StageOutcome> run(Stage stage, const RunConfig& config, const RunOptions& options) {
    config.validate();
    const Context ctx{config, config.out_dir, std::max(1u, options.threads)};
    fs::create_directories(ctx.out);

    // Upstream closure of the requested stage, in execution order.
    std::set<Stage> needed;
    std::function<void(Stage)> require = [&](Stage s) {
        if (!needed.insert(s).second) return;
        for (auto up : plan(s, config).upstream) require(up);
    };
    if (stage == Stage::all)
        for (auto s : stage_order()) needed.insert(s);
    else
        require(stage);

    std::vector<StageOutcome> outcomes;
    for (auto s : stage_order())
        if (needed.contains(s)) outcomes.push_back(execute(s, ctx, options));
    return outcomes;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw NumericalError("SHA-256 computation failed");
    return hex(digest, len);
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

}  // namespace exposurelab::pipeline
