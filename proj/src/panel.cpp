#include "exposurelab/panel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"

namespace exposurelab::panel {

namespace {

using Key = std::tuple<std::string, std::string, int>;  // occupation6, industry4, year

constexpr const char* kImportsColumn = "imports_per_capita";
constexpr const char* kLogImportsColumn = "log_imports_pc";

double parse_number(const std::string& text, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError(where + ": bad number '" + text + "'");
    }
}

int parse_year(const std::string& text, const std::string& where) {
    try {
        return std::stoi(text);
    } catch (const std::exception&) {
        throw DataError(where + ": bad year '" + text + "'");
    }
}

void throw_duplicates(const std::filesystem::path& source, const std::vector<std::string>& offenders) {
    std::vector<std::string> head(offenders.begin(), offenders.begin() + std::min<std::size_t>(offenders.size(), 5));
    throw DataError(source.string() + ": duplicate keys: " + join(head, "; "));
}

std::string industry3_label(const std::string& industry4) {
    return industry4.size() >= 4 ? industry4.substr(0, 3) : industry4.substr(0, std::min<std::size_t>(2, industry4.size()));
}

struct OutcomeRow {
    double wage = 0.0;
    double employment = 0.0;
    double deflator = 1.0;
};

struct CovariateTable {
    std::vector<std::string> names;
    std::map<std::pair<std::string, int>, std::vector<double>> rows;
};

CovariateTable load_covariates(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_ind = table.column("industry4");
    const auto c_year = table.column("year");
    std::vector<std::size_t> cols;
    CovariateTable out;
    std::map<std::string, std::vector<std::size_t>> share_groups;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == c_ind || c == c_year) continue;
        const auto& name = table.header[c];
        const auto dot = name.find('.');
        if (dot != std::string::npos) share_groups[name.substr(0, dot)].push_back(out.names.size());
        out.names.push_back(name == kImportsColumn ? kLogImportsColumn : name);
        cols.push_back(c);
    }
    std::vector<std::string> dups;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto where = table.where(r);
        std::vector<double> values;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            double v = parse_number(row[cols[i]], where);
            if (table.header[cols[i]] == kImportsColumn) {
                if (v < 0.0) throw DataError(where + ": negative imports per capita");
                v = std::log1p(v);
            }
            values.push_back(v);
        }
        for (const auto& [group, members] : share_groups) {
            double total = 0.0;
            for (auto m : members) total += values[m];
            if (std::abs(total - 1.0) > 1e-6)
                throw DataError(where + ": shares of group '" + group + "' sum to " + format_exact(total));
        }
        const auto key = std::make_pair(trim(row[c_ind]), parse_year(row[c_year], where));
        if (!out.rows.emplace(key, std::move(values)).second) dups.push_back(key.first + "," + std::to_string(key.second));
    }
    if (!dups.empty()) throw_duplicates(path, dups);
    return out;
}

std::map<Key, OutcomeRow> load_outcomes(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_occ = table.column("occupation6");
    const auto c_ind = table.column("industry4");
    const auto c_year = table.column("year");
    const auto c_wage = table.column("mean_hourly_wage");
    const auto c_emp = table.column("employment");
    const bool has_deflator = table.has_column("deflator");
    std::map<Key, OutcomeRow> out;
    std::vector<std::string> dups;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto where = table.where(r);
        Key key{trim(row[c_occ]), trim(row[c_ind]), parse_year(row[c_year], where)};
        OutcomeRow o{parse_number(row[c_wage], where), parse_number(row[c_emp], where),
                     has_deflator ? parse_number(row[table.column("deflator")], where) : 1.0};
        if (!out.emplace(key, o).second)
            dups.push_back(std::get<0>(key) + "," + std::get<1>(key) + "," + std::to_string(std::get<2>(key)));
    }
    if (!dups.empty()) throw_duplicates(path, dups);
    return out;
}

}  // namespace

PanelFrame::PanelFrame(std::vector<std::string> covariate_names, std::vector<PanelCell> cells, bool has_instruments)
    : covariate_names_(std::move(covariate_names)), cells_(std::move(cells)), has_instruments_(has_instruments) {
    std::sort(cells_.begin(), cells_.end(), [](const PanelCell& a, const PanelCell& b) {
        return std::tie(a.occupation6, a.industry4, a.year) < std::tie(b.occupation6, b.industry4, b.year);
    });
    for (std::size_t i = 1; i < cells_.size(); ++i) {
        const auto& a = cells_[i - 1];
        const auto& b = cells_[i];
        if (a.occupation6 == b.occupation6 && a.industry4 == b.industry4 && a.year == b.year)
            throw DataError("duplicate panel key (" + b.occupation6 + ", " + b.industry4 + ", " +
                            std::to_string(b.year) + ")");
    }
    for (const auto& c : cells_) {
        if (c.covariates.size() != covariate_names_.size()) throw DataError("panel cell covariate count mismatch");
        if (!(c.weight > 0.0)) throw DataError("panel cell with non-positive weight");
    }
}

bool PanelFrame::has_column(std::string_view name) const {
    static const std::set<std::string_view> fixed = {"log_wage", "log_emp", "new_work_share", "auto_ai",
                                                     "augm_ai",  "weight",  "auto_ai_iv",     "augm_ai_iv"};
    if (fixed.contains(name)) return has_instruments_ || !name.ends_with("_iv");
    return std::find(covariate_names_.begin(), covariate_names_.end(), name) != covariate_names_.end();
}

std::vector<double> PanelFrame::column(std::string_view name) const {
    double PanelCell::*field = nullptr;
    if (name == "log_wage") field = &PanelCell::log_wage;
    else if (name == "log_emp") field = &PanelCell::log_emp;
    else if (name == "new_work_share") field = &PanelCell::new_work_share;
    else if (name == "auto_ai") field = &PanelCell::auto_ai;
    else if (name == "augm_ai") field = &PanelCell::augm_ai;
    else if (name == "auto_ai_iv") field = &PanelCell::auto_ai_iv;
    else if (name == "augm_ai_iv") field = &PanelCell::augm_ai_iv;
    else if (name == "weight") field = &PanelCell::weight;

    if (field && (has_instruments_ || !name.ends_with("_iv"))) {
        std::vector<double> out;
        out.reserve(cells_.size());
        for (const auto& c : cells_) out.push_back(c.*field);
        return out;
    }
    auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
    if (it == covariate_names_.end()) throw ValidationError("panel has no column '" + std::string(name) + "'");
    const auto idx = static_cast<std::size_t>(it - covariate_names_.begin());
    std::vector<double> out;
    out.reserve(cells_.size());
    for (const auto& c : cells_) out.push_back(c.covariates[idx]);
    return out;
}

std::vector<std::string> PanelFrame::factor(std::string_view name) const {
    std::vector<std::string> out;
    out.reserve(cells_.size());
    for (const auto& c : cells_) {
        const auto year = std::to_string(c.year);
        if (name == "occ") out.push_back(c.occupation6);
        else if (name == "ind") out.push_back(c.industry4);
        else if (name == "ind3") out.push_back(c.industry3);
        else if (name == "year") out.push_back(year);
        else if (name == "occ_ind") out.push_back(c.occupation6 + "|" + c.industry4);
        else if (name == "ind3_year") out.push_back(c.industry3 + "|" + year);
        else if (name == "occ_year") out.push_back(c.occupation6 + "|" + year);
        else if (name == "ind_year") out.push_back(c.industry4 + "|" + year);
        else throw ValidationError("unknown panel factor '" + std::string(name) + "'");
    }
    return out;
}

std::vector<std::string> PanelFrame::default_controls(std::string_view outcome) const {
    std::vector<std::string> out;
    if (outcome == "log_emp") out.emplace_back("log_wage");
    else out.emplace_back("log_emp");
    std::map<std::string, std::string> last_of_group;
    for (const auto& name : covariate_names_) {
        const auto dot = name.find('.');
        if (dot != std::string::npos) last_of_group[name.substr(0, dot)] = name;
    }
    for (const auto& name : covariate_names_) {
        const auto dot = name.find('.');
        if (dot != std::string::npos && last_of_group[name.substr(0, dot)] == name) continue;
        out.push_back(name);
    }
    return out;
}

PanelFrame PanelFrame::subset(const std::vector<std::size_t>& rows) const {
    std::vector<PanelCell> cells;
    cells.reserve(rows.size());
    for (auto r : rows) cells.push_back(cells_.at(r));
    return PanelFrame(covariate_names_, std::move(cells), has_instruments_);
}

WeightsSpec WeightsSpec::parse(std::string_view text) {
    const auto t = trim(text);
    if (t == "current") return {Kind::current, 0};
    if (t.rfind("base_year:", 0) == 0) {
        try {
            return {Kind::base_year, std::stoi(t.substr(10))};
        } catch (const std::exception&) {
        }
    }
    throw ValidationError("weights must be 'current' or 'base_year:<year>', got '" + t + "'");
}

std::string WeightsSpec::to_string() const {
    return kind == Kind::current ? "current" : "base_year:" + std::to_string(year);
}

PanelFrame build_panel(const PanelSources& sources, const PanelOptions& options, PanelReport* report) {
    if (!sources.automation || !sources.augmentation) throw ValidationError("panel needs both exposure series");
    const auto outcomes = load_outcomes(sources.outcomes);
    const auto covariates = load_covariates(sources.covariates);

    std::map<std::pair<std::string, int>, double> shares;
    std::vector<std::string> dups;
    for (const auto& s : sources.shares)
        if (!shares.emplace(std::make_pair(s.occupation6, s.year), s.share).second)
            dups.push_back(s.occupation6 + "," + std::to_string(s.year));
    if (!dups.empty()) throw_duplicates("shares", dups);

    const auto* iv = sources.instruments;
    PanelReport local;
    std::vector<PanelCell> cells;
    auto drop = [&](const char* reason) { ++local.dropped[reason]; };

    for (const auto& [key, row] : outcomes) {
        const auto& [occ, ind, year] = key;
        if (!options.years.contains(year)) continue;
        ++local.candidates;
        if (!(row.wage > 0.0 && row.employment > 0.0 && row.deflator > 0.0)) {
            drop("nonpositive_outcome");
            continue;
        }
        const auto cell = exposure::cell_key(occ, ind);
        if (!sources.automation->has(occ, year)) {
            drop("missing_automation");
            continue;
        }
        if (!sources.augmentation->has(cell, year)) {
            drop("missing_augmentation");
            continue;
        }
        if (iv && !(iv->automation.has(occ, year) && iv->augmentation.has(cell, year))) {
            drop("missing_instrument");
            continue;
        }
        auto share = shares.find({occ, year});
        if (share == shares.end()) {
            drop("missing_new_work_share");
            continue;
        }
        auto cov = covariates.rows.find({ind, year});
        if (cov == covariates.rows.end()) {
            drop("missing_covariates");
            continue;
        }
        double weight = row.employment;
        if (options.weights.kind == WeightsSpec::Kind::base_year) {
            auto base = outcomes.find(Key{occ, ind, options.weights.year});
            if (base == outcomes.end() || !(base->second.employment > 0.0)) {
                drop("missing_weight");
                continue;
            }
            weight = base->second.employment;
        }

        PanelCell c;
        c.occupation6 = occ;
        c.industry4 = ind;
        c.industry3 = industry3_label(ind);
        c.year = year;
        c.log_wage = std::log(row.wage / row.deflator);
        c.log_emp = std::log(row.employment);
        c.new_work_share = share->second;
        c.auto_ai = sources.automation->at(occ, year);
        c.augm_ai = sources.augmentation->at(cell, year);
        c.auto_ai_iv = iv ? iv->automation.at(occ, year) : std::numeric_limits<double>::quiet_NaN();
        c.augm_ai_iv = iv ? iv->augmentation.at(cell, year) : std::numeric_limits<double>::quiet_NaN();
        c.covariates = cov->second;
        c.weight = weight;
        cells.push_back(std::move(c));
    }
    if (cells.empty()) throw DataError("panel is empty after joining all sources");

    // Standardize each exposure with the moments of its own panel cells.
    std::set<std::pair<std::string, int>> occ_sample;
    std::set<std::pair<std::string, int>> cell_sample;
    for (const auto& c : cells) {
        occ_sample.emplace(c.occupation6, c.year);
        cell_sample.emplace(exposure::cell_key(c.occupation6, c.industry4), c.year);
    }
    auto moments = [&](const exposure::ExposureSeries& s, const std::set<std::pair<std::string, int>>& sample) {
        const auto m = options.standardize_on_panel ? exposure::sample_moments(s, sample)
                                                    : exposure::sample_moments(s, std::nullopt);
        if (!(m.sd > 1e-12 * std::max(1.0, std::abs(m.mean))))
            throw NumericalError("zero variance in " + std::string(exposure::to_string(s.level)) + " exposure sample");
        return m;
    };
    const auto m_auto = moments(*sources.automation, occ_sample);
    const auto m_augm = moments(*sources.augmentation, cell_sample);
    std::optional<exposure::Moments> m_auto_iv;
    std::optional<exposure::Moments> m_augm_iv;
    if (iv) {
        m_auto_iv = moments(iv->automation, occ_sample);
        m_augm_iv = moments(iv->augmentation, cell_sample);
    }
    for (auto& c : cells) {
        c.auto_ai = (c.auto_ai - m_auto.mean) / m_auto.sd;
        c.augm_ai = (c.augm_ai - m_augm.mean) / m_augm.sd;
        if (iv) {
            c.auto_ai_iv = (c.auto_ai_iv - m_auto_iv->mean) / m_auto_iv->sd;
            c.augm_ai_iv = (c.augm_ai_iv - m_augm_iv->mean) / m_augm_iv->sd;
        }
    }

    local.kept = cells.size();
    if (report) *report = local;
    return PanelFrame(covariates.names, std::move(cells), iv != nullptr);
}

std::vector<double> percentile_rank(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> out(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // ranks i+1..j+1 share their average
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) out[order[k]] = avg / static_cast<double>(n);
        i = j + 1;
    }
    return out;
}

std::string_view to_string(SkillGroup group) {
    switch (group) {
        case SkillGroup::low: return "low";
        case SkillGroup::middle: return "middle";
        case SkillGroup::high: return "high";
    }
    return "unknown";
}

SkillGroup skill_group(int job_zone) {
    switch (job_zone) {
        case 1:
        case 2: return SkillGroup::low;
        case 3: return SkillGroup::middle;
        case 4:
        case 5: return SkillGroup::high;
        default: throw DataError("job zone must be 1-5, got " + std::to_string(job_zone));
    }
}

std::map<std::string, int> load_job_zones(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_occ = table.column("occupation6");
    const auto c_zone = table.column("job_zone");
    std::map<std::string, int> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const int zone = parse_year(row[c_zone], table.where(r));
        skill_group(zone);
        if (!out.emplace(trim(row[c_occ]), zone).second)
            throw DataError(table.where(r) + ": duplicate occupation " + row[c_occ]);
    }
    return out;
}

SkillPartition skill_partition(const PanelFrame& panel, const std::map<std::string, int>& job_zones) {
    std::vector<std::size_t> low, middle, high;
    const auto& cells = panel.cells();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        auto it = job_zones.find(cells[i].occupation6);
        if (it == job_zones.end()) throw DataError("occupation " + cells[i].occupation6 + " has no job zone");
        switch (skill_group(it->second)) {
            case SkillGroup::low: low.push_back(i); break;
            case SkillGroup::middle: middle.push_back(i); break;
            case SkillGroup::high: high.push_back(i); break;
        }
    }
    return {panel.subset(low), panel.subset(middle), panel.subset(high)};
}

void write_panel(std::ostream& out, const PanelFrame& panel) {
    csv::Writer w(out);
    std::vector<std::string> header{"occupation6", "industry4", "industry3", "year",   "log_wage",
                                    "log_emp",     "new_work_share", "auto_ai", "augm_ai"};
    if (panel.has_instruments()) {
        header.emplace_back("auto_ai_iv");
        header.emplace_back("augm_ai_iv");
    }
    for (const auto& n : panel.covariate_names()) header.push_back(n);
    header.emplace_back("weight");
    w.row(header);
    for (const auto& c : panel.cells()) {
        std::vector<std::string> row{c.occupation6,          c.industry4,           c.industry3,
                                     std::to_string(c.year), format_sig9(c.log_wage), format_sig9(c.log_emp),
                                     format_sig9(c.new_work_share), format_sig9(c.auto_ai), format_sig9(c.augm_ai)};
        if (panel.has_instruments()) {
            row.push_back(format_sig9(c.auto_ai_iv));
            row.push_back(format_sig9(c.augm_ai_iv));
        }
        for (double v : c.covariates) row.push_back(format_sig9(v));
        row.push_back(format_sig9(c.weight));
        w.row(row);
    }
}

PanelFrame read_panel(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const bool has_iv = table.has_column("auto_ai_iv");
    const std::set<std::string> fixed = {"occupation6", "industry4",  "industry3",  "year",  "log_wage",
                                         "log_emp",     "new_work_share", "auto_ai", "augm_ai", "auto_ai_iv",
                                         "augm_ai_iv",  "weight"};
    std::vector<std::string> covariate_names;
    std::vector<std::size_t> covariate_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c)
        if (!fixed.contains(table.header[c])) {
            covariate_names.push_back(table.header[c]);
            covariate_cols.push_back(c);
        }
    std::vector<PanelCell> cells;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto where = table.where(r);
        auto num = [&](const char* name) { return parse_number(row[table.column(name)], where); };
        PanelCell c;
        c.occupation6 = row[table.column("occupation6")];
        c.industry4 = row[table.column("industry4")];
        c.industry3 = row[table.column("industry3")];
        c.year = parse_year(row[table.column("year")], where);
        c.log_wage = num("log_wage");
        c.log_emp = num("log_emp");
        c.new_work_share = num("new_work_share");
        c.auto_ai = num("auto_ai");
        c.augm_ai = num("augm_ai");
        c.auto_ai_iv = has_iv ? num("auto_ai_iv") : std::numeric_limits<double>::quiet_NaN();
        c.augm_ai_iv = has_iv ? num("augm_ai_iv") : std::numeric_limits<double>::quiet_NaN();
        for (auto col : covariate_cols) c.covariates.push_back(parse_number(row[col], where));
        c.weight = num("weight");
        cells.push_back(std::move(c));
    }
    return PanelFrame(std::move(covariate_names), std::move(cells), has_iv);
}

}  // namespace exposurelab::panel
