#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace exposurelab {

// Error taxonomy. The CLI maps each kind onto its exit code.
enum class ErrorKind { validation, data, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on thread count.
double pairwise_sum(std::span<const double> values);

/// Shortest round-trippable text for a double ("%.17g").
std::string format_exact(double value);

/// Fixed significant-digit text used by the published CSV artifacts.
std::string format_sig9(double value);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::vector<std::string> split(std::string_view text, char sep);

std::string trim(std::string_view text);

bool is_digits(std::string_view text);

/// Warnings go to stderr unless silenced (tests silence them).
void warn(std::string_view message);
void set_warnings_enabled(bool enabled);

}  // namespace exposurelab
