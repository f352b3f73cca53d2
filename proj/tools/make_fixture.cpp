// make-fixture: writes the synthetic input corpus used by the shipped
// configs, the end-to-end tests and the determinism check.
//
//   make-fixture <dir> [--seed N]

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"

namespace fs = std::filesystem;
using exposurelab::csv::Writer;

namespace {

struct TagDef {
    std::string id, name, description, alt_description;
    bool ai;
};

const std::vector<TagDef> kTags = {
    {"t01", "machine-learning", "Algorithms that learn patterns from data to make predictions",
     "Statistical models trained on examples to predict outcomes", true},
    {"t02", "deep-learning", "Neural networks with many layers trained on large data sets",
     "Multi-layer neural models learned end to end", true},
    {"t03", "nlp", "Natural language processing of written text and documents",
     "Computational analysis and generation of human language", true},
    {"t04", "computer-vision", "Recognizing objects, faces and scenes in images and video",
     "Automated visual perception from camera images", true},
    {"t05", "speech-recognition", "Converting spoken audio and speech into written text",
     "Transcribing voice recordings automatically", true},
    {"t06", "reinforcement-learning", "Agents learning decisions and control through rewards",
     "Trial and error learning for planning and control", true},
    {"t07", "chatbot", "Conversational agents answering customer questions in dialogue",
     "Automated assistants holding conversations with users", true},
    {"t08", "recommender-system", "Recommending products and content based on user behavior",
     "Personalized suggestions for sales and marketing", true},
    {"t09", "python", "General purpose programming language", "General purpose programming language", false},
    {"t10", "javascript", "Scripting language for web pages", "Scripting language for web pages", false},
    {"t11", "sql", "Query language for relational databases", "Query language for relational databases", false},
    {"t12", "css", "Style sheets for web page layout", "", false},
};

struct AbilityDef {
    std::string id, name, description;
};

const std::vector<AbilityDef> kAbilities = {
    {"1.A.1.a.1", "Oral Comprehension", "Listen to and understand spoken words and sentences"},
    {"1.A.1.a.2", "Written Comprehension", "Read and understand written text and documents"},
    {"1.A.1.a.3", "Oral Expression", "Communicate information and ideas in speaking so others understand"},
    {"1.A.1.b.4", "Deductive Reasoning", "Apply general rules to specific problems to produce answers that make sense"},
    {"1.A.1.b.5", "Inductive Reasoning", "Combine pieces of information to form general rules or conclusions from data"},
    {"1.A.1.e.1", "Speed of Closure", "Quickly make sense of and recognize patterns in information"},
    {"1.A.4.a.1", "Near Vision", "See details at close range such as images and objects"},
    {"1.A.4.a.2", "Far Vision", "See details at a distance, recognize faces and scenes"},
    {"1.A.4.b.4", "Speech Recognition", "Identify and understand the speech of another person"},
    {"1.A.2.a.2", "Manual Dexterity", "Quickly move your hand to grasp and manipulate objects"},
    {"1.A.3.a.1", "Static Strength", "Exert maximum muscle force to lift, push, pull or carry objects"},
    {"1.A.1.c.1", "Mathematical Reasoning", "Choose the right mathematical methods to solve a problem"},
};

struct OccupationDef {
    std::string code6;
    int job_zone;
    std::vector<std::string> titles;  // base-year alternate titles
    std::vector<std::string> micro;   // micro-occupation titles
};

const std::vector<OccupationDef> kOccupations = {
    {"151252", 4, {"Software Developer", "Application Programmer", "Software Engineer", "Systems Programmer"},
     {"Software developer", "Computer programmer, applications", "Software engineer"}},
    {"151211", 4, {"Systems Analyst", "Computer Systems Analyst", "Business Systems Analyst", "IT Analyst"},
     {"Computer systems analyst", "Data processing analyst"}},
    {"132011", 4, {"Accountant", "Certified Public Accountant", "Cost Accountant", "Tax Accountant"},
     {"Accountant", "Auditor, financial records", "Tax preparer, accountant"}},
    {"434051", 2, {"Customer Service Representative", "Call Center Agent", "Customer Care Agent", "Help Desk Clerk"},
     {"Customer service representative", "Call center operator", "Complaint clerk"}},
    {"533032", 2, {"Truck Driver", "Tractor-Trailer Driver", "Delivery Driver", "Long Haul Driver"},
     {"Truck driver, heavy", "Tractor trailer operator"}},
    {"292061", 3, {"Licensed Practical Nurse", "Vocational Nurse", "Charge Nurse", "Clinic Nurse"},
     {"Practical nurse, licensed", "Vocational nurse"}},
    {"411011", 3, {"Sales Supervisor", "Retail Store Supervisor", "Floor Manager", "Department Manager"},
     {"Sales supervisor, retail", "Store department manager"}},
    {"435071", 2, {"Shipping Clerk", "Receiving Clerk", "Warehouse Clerk", "Traffic Clerk"},
     {"Shipping and receiving clerk", "Warehouse records clerk"}},
    {"271024", 3, {"Graphic Designer", "Visual Designer", "Layout Artist", "Illustrator"},
     {"Graphic designer", "Commercial artist, layout", "Image retoucher"}},
    {"231011", 5, {"Lawyer", "Attorney", "Corporate Counsel", "Legal Counsel"},
     {"Lawyer", "Attorney at law", "Legal document reviewer"}},
    {"119111", 5, {"Health Services Manager", "Clinic Administrator", "Hospital Administrator", "Medical Records Manager"},
     {"Medical and health services manager", "Hospital administrator"}},
    {"537062", 1, {"Laborer", "Material Handler", "Stock Mover", "Freight Handler"},
     {"Laborer, freight and stock", "Material mover, hand"}},
};

// Later titles: (year, occupation, title). Renames differ only in form;
// insertions are new wording.
const std::vector<std::tuple<int, std::string, std::string>> kLaterTitles = {
    {2016, "151252", "Software Developers"},
    {2016, "434051", "Customer Service Representatives"},
    {2017, "151252", "Machine Learning Engineer"},
    {2017, "411011", "Saleswoman Supervisor"},
    {2017, "533032", "Truck  Drivers"},
    {2018, "151211", "Data Scientist"},
    {2018, "434051", "Chatbot Trainer"},
    {2018, "292061", "Nurse, Vocational"},
    {2019, "271024", "AI Image Prompt Designer"},
    {2019, "132011", "Accountants"},
    {2019, "435071", "Inventory Robot Coordinator"},
    {2020, "119111", "Telehealth Program Director"},
    {2020, "231011", "E-Discovery Specialist"},
    {2020, "537062", "Laborers"},
    {2021, "151211", "MLOps Analyst"},
    {2021, "533032", "Autonomous Truck Monitor"},
    {2021, "292061", "Remote Patient Monitoring Nurse"},
    {2022, "151252", "Prompt Engineer"},
    {2022, "411011", "E-Commerce Floor Manager"},
    {2022, "434051", "Conversational AI Specialist"},
};

const std::vector<std::pair<std::string, std::string>> kIndustryTitles = {
    {"511110", "Newspaper publishers"},          {"511120", "Periodical publishers"},
    {"511210", "Software publishers"},           {"511211", "Computer game publishers"},
    {"541110", "Offices of lawyers"},            {"541191", "Title abstract and settlement offices"},
    {"541511", "Custom computer programming services"}, {"541512", "Computer systems design services"},
    {"522110", "Commercial banking"},            {"522130", "Credit unions"},
    {"522320", "Financial transactions processing"}, {"522390", "Loan servicing"},
    {"621111", "Offices of physicians"},         {"621112", "Offices of physicians, mental health"},
    {"621491", "HMO medical centers"},           {"621498", "Outpatient care centers"},
    {"441110", "New car dealers"},               {"441120", "Used car dealers"},
    {"441310", "Automotive parts and accessories stores"}, {"441320", "Tire dealers"},
};

const std::vector<std::string> kIndustries = {"5111", "5112", "5411", "5415", "5221",
                                              "5223", "6211", "6214", "4411", "4413"};

struct CountryDef {
    std::string code;
    double share;
};

const std::vector<CountryDef> kCountries = {
    {"US", 0.36}, {"CA", 0.06}, {"GB", 0.08}, {"DE", 0.07}, {"FR", 0.03},
    {"CN", 0.10}, {"IN", 0.16}, {"BR", 0.05}, {"RU", 0.03}, {"JP", 0.03}, {"KR", 0.02}, {"ZZ", 0.01},
};

void write(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

template <typename F>
void write_csv(const fs::path& path, F&& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    Writer w(out);
    body(w);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Write the synthetic fixture inputs"};
    fs::path dir;
    std::uint64_t seed = 20230907;
    app.add_option("dir", dir, "output directory")->required();
    app.add_option("--seed", seed, "random seed");
    CLI11_PARSE(app, argc, argv);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    fs::create_directories(dir);

    // tags
    for (bool alt : {false, true})
        write_csv(dir / (alt ? "tags_alt.csv" : "tags.csv"), [&](Writer& w) {
            w.row({"id", "name", "description", "is_ai"});
            for (const auto& t : kTags) w.row({t.id, t.name, alt ? t.alt_description : t.description, t.ai ? "1" : "0"});
        });

    // posts
    {
        std::ofstream out(dir / "posts.jsonl", std::ios::binary);
        std::vector<double> cum;
        double acc = 0.0;
        for (const auto& c : kCountries) cum.push_back(acc += c.share);
        int id = 1;
        for (int i = 0; i < 1400; ++i) {
            const int year = 2008 + static_cast<int>(unif(rng) * 15.0);
            const double u = unif(rng) * acc;
            const auto& country = kCountries[static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin())].code;
            const int ntags = 1 + static_cast<int>(unif(rng) * 5.0);
            std::vector<std::string> tags;
            // AI tags are drawn more often in later years.
            const double ai_bias = 0.25 + 0.04 * (year - 2008);
            while (static_cast<int>(tags.size()) < ntags) {
                const bool ai = unif(rng) < ai_bias;
                const std::size_t pick = ai ? static_cast<std::size_t>(unif(rng) * 8.0) : 8 + static_cast<std::size_t>(unif(rng) * 4.0);
                if (std::find(tags.begin(), tags.end(), kTags[pick].id) == tags.end()) tags.push_back(kTags[pick].id);
            }
            const int votes = static_cast<int>(std::floor(std::exp(1.2 + 1.1 * normal(rng)))) - 2;
            nlohmann::ordered_json j;
            char pid[16];
            std::snprintf(pid, sizeof pid, "q%05d", id++);
            j["id"] = pid;
            j["year"] = year;
            j["votes"] = votes;
            j["tags"] = tags;
            j["country"] = country;
            out << j.dump() << '\n';
        }
    }

    // abilities and requirements (two vintages)
    write_csv(dir / "abilities.csv", [&](Writer& w) {
        w.row({"ability_id", "name", "description"});
        for (const auto& a : kAbilities) w.row({a.id, a.name, a.description});
    });
    for (const auto& [file, shift] : std::vector<std::pair<std::string, double>>{{"ability_scores.csv", 0.0},
                                                                                {"ability_scores_2010.csv", 0.3}}) {
        std::mt19937_64 local(seed + static_cast<std::uint64_t>(shift * 10));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        write_csv(dir / file, [&](Writer& w) {
            w.row({"occupation8", "ability_id", "importance", "level"});
            for (const auto& occ : kOccupations) {
                if (occ.code6 == "537062") continue;  // imputed from its major group
                std::vector<std::string> codes{occ.code6 + "00"};
                if (occ.code6 == "533032" || occ.code6 == "151252") codes.push_back(occ.code6 + "01");
                for (const auto& code : codes)
                    for (const auto& a : kAbilities) {
                        const double imp = std::clamp(1.0 + 4.0 * u01(local) + shift * (u01(local) - 0.5), 1.0, 5.0);
                        const double lvl = std::clamp(7.0 * u01(local) + shift * (u01(local) - 0.5), 0.0, 7.0);
                        w.row({code, a.id, fixed(imp, 2), fixed(lvl, 2)});
                    }
            }
        });
    }
    write_csv(dir / "occupation_universe.csv", [&](Writer& w) {
        w.row({"occupation8"});
        for (const auto& occ : kOccupations) {
            w.row({occ.code6 + "00"});
            if (occ.code6 == "533032" || occ.code6 == "151252") w.row({occ.code6 + "01"});
        }
        w.row({"53303203"});  // no requirements: imputed from its 6-digit siblings
    });

    // micro-titles
    write_csv(dir / "microtitles.csv", [&](Writer& w) {
        w.row({"title", "kind", "code", "vintage"});
        for (const auto& occ : kOccupations)
            for (const auto& t : occ.micro) w.row({t, "occupation", occ.code6, "2016"});
        for (const auto& [code, title] : kIndustryTitles) w.row({title, "industry", code, "2016"});
    });

    // alternate titles per year
    write_csv(dir / "alt_titles.csv", [&](Writer& w) {
        w.row({"occupation6", "year", "title"});
        std::map<std::string, std::vector<std::string>> current;
        for (const auto& occ : kOccupations) current[occ.code6] = occ.titles;
        for (int year = 2015; year <= 2022; ++year) {
            for (const auto& [y, code, title] : kLaterTitles)
                if (y == year) current[code].push_back(title);
            for (const auto& [code, titles] : current)
                for (const auto& t : titles) w.row({code, std::to_string(year), t});
        }
    });

    // outcomes
    write_csv(dir / "outcomes.csv", [&](Writer& w) {
        w.row({"occupation6", "industry4", "year", "mean_hourly_wage", "employment", "deflator"});
        std::map<std::string, double> occ_level, ind_level;
        for (const auto& occ : kOccupations) occ_level[occ.code6] = 2.6 + 0.5 * normal(rng);
        for (const auto& ind : kIndustries) ind_level[ind] = 0.3 * normal(rng);
        for (const auto& occ : kOccupations)
            for (const auto& ind : kIndustries) {
                if (unif(rng) < 0.15) continue;  // cell not observed
                const double size = std::exp(6.0 + 1.2 * normal(rng));
                const double growth = 0.02 * normal(rng);
                for (int year = 2014; year <= 2022; ++year) {
                    const double t = year - 2014;
                    const double deflator = 1.0 + 0.021 * t;
                    double wage = std::exp(occ_level[occ.code6] + ind_level[ind] + 0.01 * t + 0.05 * normal(rng)) * deflator;
                    double emp = std::round(size * std::exp(growth * t + 0.05 * normal(rng)));
                    if (unif(rng) < 0.005) wage = 0.0;  // suppressed estimate
                    w.row({occ.code6, ind, std::to_string(year), fixed(wage, 2), fixed(std::max(emp, 1.0), 0),
                           fixed(deflator, 3)});
                }
            }
    });

    // industry covariates
    write_csv(dir / "covariates.csv", [&](Writer& w) {
        w.row({"industry4", "year", "imports_per_capita", "education.less_hs", "education.hs", "education.college",
               "age.under40", "age.over40"});
        for (const auto& ind : kIndustries) {
            const double base_imports = std::exp(5.0 + normal(rng));
            const double college = 0.2 + 0.4 * unif(rng);
            const double young = 0.3 + 0.4 * unif(rng);
            for (int year = 2014; year <= 2022; ++year) {
                // shares are rounded before the complement so each group sums to 1
                const double lhs = std::stod(fixed(0.05 + 0.1 * unif(rng), 4));
                const double col = std::stod(fixed(std::clamp(college + 0.01 * (year - 2014) + 0.02 * normal(rng), 0.05, 0.8), 4));
                const double hs = 1.0 - lhs - col;
                const double y = std::stod(fixed(std::clamp(young + 0.03 * normal(rng), 0.1, 0.9), 4));
                const double imports = base_imports * std::exp(0.05 * (year - 2014) + 0.1 * normal(rng));
                w.row({ind, std::to_string(year), fixed(imports, 2), fixed(lhs, 4), fixed(hs, 4), fixed(col, 4),
                       fixed(y, 4), fixed(1.0 - y, 4)});
            }
        }
    });

    write_csv(dir / "job_zones.csv", [&](Writer& w) {
        w.row({"occupation6", "job_zone"});
        for (const auto& occ : kOccupations) w.row({occ.code6, std::to_string(occ.job_zone)});
    });

    std::cout << "fixture written to " << dir.string() << '\n';
    return 0;
}
