#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace exposurelab::csv {

// RFC-4180 table: first record is the header.
struct Table {
    std::filesystem::path source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;  // 1-based line where each row starts

    /// Column index by name; throws DataError naming the file if absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
    std::string where(std::size_t row) const;
};

Table parse(std::string_view text, const std::filesystem::path& source = {});
Table read(const std::filesystem::path& path);

std::string quote(std::string_view field);

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

}  // namespace exposurelab::csv
