#include "exposurelab/csv.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "exposurelab/common.hpp"

namespace exposurelab::csv {

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw DataError(source.string() + ": missing column '" + std::string(name) + "'");
}

bool Table::has_column(std::string_view name) const {
    for (const auto& h : header)
        if (h == name) return true;
    return false;
}

std::string Table::where(std::size_t row) const {
    return source.string() + ":" + std::to_string(lines.at(row));
}

Table parse(std::string_view text, const std::filesystem::path& source) {
    Table table;
    table.source = source;

    std::vector<std::vector<std::string>> records;
    std::vector<std::size_t> starts;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;
    std::size_t record_line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // Skip blank lines entirely.
        if (!(record.size() == 1 && record[0].empty())) {
            records.push_back(std::move(record));
            starts.push_back(record_line);
        }
        record.clear();
    };

    std::size_t i = 0;
    // Tolerate a UTF-8 byte-order mark.
    if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started)
                    throw DataError(source.string() + ":" + std::to_string(line) +
                                    ": stray quote inside unquoted field");
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                ++line;
                record_line = line;
                break;
            default:
                field += c;
                field_started = true;
        }
    }
    if (in_quotes)
        throw DataError(source.string() + ":" + std::to_string(record_line) + ": unterminated quoted field");
    if (field_started || !record.empty()) end_record();

    if (records.empty()) throw DataError(source.string() + ": empty CSV (no header)");
    table.header = std::move(records.front());
    for (auto& h : table.header) h = trim(h);
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size())
            throw DataError(source.string() + ":" + std::to_string(starts[r]) + ": expected " +
                            std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(records[r].size()));
        table.rows.push_back(std::move(records[r]));
        table.lines.push_back(starts[r]);
    }
    return table;
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
}

std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void Writer::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << quote(fields[i]);
    }
    out_ << '\n';
}

}  // namespace exposurelab::csv
