#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

namespace testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("exposurelab-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    return path;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Weighted two-way fixed-effect panel without singleton groups. Every level
/// of the first factor meets level 0 of the second, so the dummy design is
/// connected and the dense oracle is full rank.
struct TwoWayPanel {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    Eigen::VectorXd w;
    std::vector<std::vector<std::size_t>> factors;  // two factors
    std::vector<std::size_t> clusters;              // = first factor
};

inline TwoWayPanel two_way_panel(std::uint64_t seed, int n, int k) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int l1 = std::max(5, n / 8);
    const int l2 = 4 + static_cast<int>(unif(rng) * 8.0);

    std::vector<std::size_t> g1(static_cast<std::size_t>(n)), g2(static_cast<std::size_t>(n));
    std::vector<bool> seen(static_cast<std::size_t>(l1), false);
    for (int i = 0; i < n; ++i) {
        // round-robin guarantees at least n / l1 >= 2 rows per first-factor level
        const auto a = static_cast<std::size_t>(i % l1);
        g1[static_cast<std::size_t>(i)] = a;
        g2[static_cast<std::size_t>(i)] = seen[a] ? static_cast<std::size_t>(unif(rng) * l2) : 0;
        seen[a] = true;
    }
    // drop rows in singleton second-factor levels (first-factor levels have >= 2 rows)
    std::map<std::size_t, int> count2;
    for (auto b : g2) ++count2[b];
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
        if (count2[g2[static_cast<std::size_t>(i)]] > 1) keep.push_back(i);

    const auto m = static_cast<Eigen::Index>(keep.size());
    std::vector<double> alpha(static_cast<std::size_t>(l1)), gamma(static_cast<std::size_t>(l2));
    for (auto& a : alpha) a = 2.0 * normal(rng);
    for (auto& g : gamma) g = normal(rng);

    TwoWayPanel p;
    p.X.resize(m, k);
    p.y.resize(m);
    p.w.resize(m);
    p.factors.assign(2, {});
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto i = static_cast<std::size_t>(keep[static_cast<std::size_t>(r)]);
        const double a = alpha[g1[i]];
        const double g = gamma[g2[i]];
        double yv = a + g + normal(rng);
        for (Eigen::Index j = 0; j < k; ++j) {
            p.X(r, j) = 0.5 * a - 0.3 * g + normal(rng) * (1.0 + 0.5 * static_cast<double>(j));
            yv += (0.3 - 0.2 * static_cast<double>(j)) * p.X(r, j);
        }
        p.y(r) = yv;
        p.w(r) = 0.25 + 2.0 * unif(rng);
        p.factors[0].push_back(g1[i]);
        p.factors[1].push_back(g2[i]);
        p.clusters.push_back(g1[i]);
    }
    return p;
}

inline std::vector<std::string> labels(const std::vector<std::size_t>& codes) {
    std::vector<std::string> out;
    for (auto c : codes) out.push_back(std::to_string(c));
    return out;
}

}  // namespace testing
