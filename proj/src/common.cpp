#include "exposurelab/common.hpp"

#include <cctype>
#include <atomic>
#include <cstdio>
#include <iostream>

namespace exposurelab {

namespace {

constexpr std::size_t kPairwiseBlock = 8;

double pairwise_sum_impl(const double* data, std::size_t n) {
    if (n <= kPairwiseBlock) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += data[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum_impl(data, half) + pairwise_sum_impl(data + half, n - half);
}

std::string format_with(const char* fmt, double value) {
    char buf[64];
    const int len = std::snprintf(buf, sizeof(buf), fmt, value);
    return std::string(buf, static_cast<std::size_t>(len));
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
    return pairwise_sum_impl(values.data(), values.size());
}

std::string format_exact(double value) {
    if (value == 0.0) return "0";
    return format_with("%.17g", value);
}

std::string format_sig9(double value) {
    // Avoid "-0" in published files.
    if (value == 0.0) return "0";
    return format_with("%.9g", value);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(text.substr(start));
            break;
        }
        out.emplace_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string trim(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    return std::string(text.substr(b, e - b));
}

bool is_digits(std::string_view text) {
    if (text.empty()) return false;
    for (char c : text)
        if (c < '0' || c > '9') return false;
    return true;
}

namespace {
std::atomic<bool> g_warnings{true};
}

void warn(std::string_view message) {
    if (g_warnings.load()) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

}  // namespace exposurelab
