#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "exposurelab/corpus.hpp"
#include "exposurelab/panel.hpp"

namespace exposurelab::pipeline {

/// Instrument-group run: same pipeline on another country set, corpus window
/// and descriptor vintage, shifted forward by `lag` years.
struct IvConfig {
    bool enabled = false;
    std::filesystem::path posts;
    std::filesystem::path tags;
    std::set<std::string> countries;
    corpus::YearRange years{2010, 2017};
    int end_year = 2017;
    int lag = 5;
    corpus::TaxonomyPaths taxonomy;
    std::optional<std::filesystem::path> occupation_universe;
};

struct RunConfig {
    std::filesystem::path source;  // the config file; relative paths resolve against its directory

    // [inputs]
    std::filesystem::path posts;
    std::filesystem::path tags;
    corpus::TaxonomyPaths taxonomy;
    std::optional<std::filesystem::path> occupation_universe;
    std::filesystem::path titles;
    std::filesystem::path outcome_table;
    std::filesystem::path covariates;
    std::optional<std::filesystem::path> job_zones;
    std::string embeddings = "test";  // "test" or a store file

    // [corpus]
    std::set<std::string> countries;
    corpus::YearRange years{2010, 2022};

    // [scoring]
    double decay = 0.5;
    int end_year = 2022;

    // [semlink]
    double quantile = 0.25;
    std::size_t embedding_dim = 64;
    std::uint64_t embedding_seed = 20240101;

    // [newwork]
    double threshold = 0.7;
    int base_year = 2015;
    int last_year = 2022;
    std::optional<std::filesystem::path> gender_table;
    std::optional<std::filesystem::path> plural_table;

    // [panel]
    corpus::YearRange panel_years{2015, 2022};
    panel::WeightsSpec weights;
    bool standardize_on_panel = true;

    // [estimate]
    std::vector<std::string> outcomes{"new_work_share", "log_wage", "log_emp"};

    // [output]
    std::filesystem::path out_dir = "out";

    IvConfig iv;

    /// Parses an INI file; unknown sections or keys are rejected.
    static RunConfig load(const std::filesystem::path& path);
    /// Range checks and input-path existence. Messages name the field.
    void validate() const;
    /// Every effective setting as "section.key" -> text, defaults included.
    std::map<std::string, std::string> settings() const;
};

enum class Stage { ingest, scores, matrices, exposure, newwork, panel, estimate, all };

std::string_view to_string(Stage stage);
Stage stage_from_string(std::string_view text);
/// The stages `all` expands to, in execution order.
const std::vector<Stage>& stage_order();

struct RunOptions {
    unsigned threads = 1;
    bool verbose = true;  // cache notices on stderr
};

struct StageOutcome {
    Stage stage = Stage::ingest;
    bool cache_hit = false;
    std::string reason;  // why the cache was not used
};

/// Runs `stage` and every stage before it; each is skipped when its manifest
/// still matches the config hash, input hashes and output hashes.
std::vector<StageOutcome> run(Stage stage, const RunConfig& config, const RunOptions& options = {});

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace exposurelab::pipeline
