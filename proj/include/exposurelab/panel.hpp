#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "exposurelab/corpus.hpp"
#include "exposurelab/exposure.hpp"
#include "exposurelab/newwork.hpp"

namespace exposurelab::panel {

/// One occupation x industry x year observation. Exposures are
/// standardized; instrument fields are NaN when the run has no instruments.
struct PanelCell {
    std::string occupation6;
    std::string industry4;
    std::string industry3;  // fixed-effect label: 3-digit prefix, 2-digit for coarser codes
    int year = 0;
    double log_wage = 0.0;
    double log_emp = 0.0;
    double new_work_share = 0.0;
    double auto_ai = 0.0;
    double augm_ai = 0.0;
    double auto_ai_iv = 0.0;
    double augm_ai_iv = 0.0;
    std::vector<double> covariates;
    double weight = 0.0;
};

class PanelFrame {
public:
    PanelFrame() = default;
    PanelFrame(std::vector<std::string> covariate_names, std::vector<PanelCell> cells, bool has_instruments);

    const std::vector<PanelCell>& cells() const { return cells_; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }
    bool has_instruments() const { return has_instruments_; }
    std::size_t size() const { return cells_.size(); }

    bool has_column(std::string_view name) const;
    /// Numeric column by name: the fixed fields or any covariate.
    std::vector<double> column(std::string_view name) const;
    /// Group labels: occ, ind, ind3, year, occ_ind, ind3_year, occ_year, ind_year.
    std::vector<std::string> factor(std::string_view name) const;

    /// Log employment or wage (whichever is not the outcome), log imports per
    /// capita, and every share column except the last level of each group.
    std::vector<std::string> default_controls(std::string_view outcome) const;

    PanelFrame subset(const std::vector<std::size_t>& rows) const;

private:
    std::vector<std::string> covariate_names_;
    std::vector<PanelCell> cells_;  // sorted by (occupation6, industry4, year)
    bool has_instruments_ = false;
};

struct WeightsSpec {
    enum class Kind { base_year, current };
    Kind kind = Kind::base_year;
    int year = 2015;

    /// "base_year:2015" or "current".
    static WeightsSpec parse(std::string_view text);
    std::string to_string() const;
};

struct PanelSources {
    const exposure::ExposureSeries* automation = nullptr;    // occupation6, raw
    const exposure::ExposureSeries* augmentation = nullptr;  // occ6 x ind4, raw
    const exposure::Instruments* instruments = nullptr;      // optional
    std::vector<newwork::ShareRow> shares;
    std::filesystem::path outcomes;    // occupation6,industry4,year,mean_hourly_wage,employment,deflator
    std::filesystem::path covariates;  // industry4,year,<columns>
};

struct PanelOptions {
    WeightsSpec weights;
    corpus::YearRange years{2015, 2022};
    /// Standardize exposures over the panel's cells (default) or over every
    /// cell of each series.
    bool standardize_on_panel = true;
};

struct PanelReport {
    std::size_t candidates = 0;
    std::map<std::string, std::size_t> dropped;  // reason -> count
    std::size_t kept = 0;
};

PanelFrame build_panel(const PanelSources& sources, const PanelOptions& options, PanelReport* report = nullptr);

/// Average ranks of tied values, divided by N.
std::vector<double> percentile_rank(const std::vector<double>& values);

enum class SkillGroup { low, middle, high };
std::string_view to_string(SkillGroup group);
/// Job zones 1-2 low, 3 middle, 4-5 high.
SkillGroup skill_group(int job_zone);

std::map<std::string, int> load_job_zones(const std::filesystem::path& path);

struct SkillPartition {
    PanelFrame low;
    PanelFrame middle;
    PanelFrame high;
};

SkillPartition skill_partition(const PanelFrame& panel, const std::map<std::string, int>& job_zones);

void write_panel(std::ostream& out, const PanelFrame& panel);
PanelFrame read_panel(const std::filesystem::path& path);

}  // namespace exposurelab::panel
