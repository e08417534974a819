#include "adaptkan/csv.hpp"

#include "adaptkan/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace adaptkan {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        const auto first = cell.find_first_not_of(" \t\r");
        const auto last = cell.find_last_not_of(" \t\r");
        cells.push_back(first == std::string::npos ? "" : cell.substr(first, last - first + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_real(const std::string& text, const std::string& path, std::size_t line) {
    if (text == "inf" || text == "+inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    if (text == "nan") return NAN;
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw IoError(path + ":" + std::to_string(line) + ": cannot parse '" + text + "' as a number");
    }
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

void write_header(std::ostream& out, const std::vector<std::string>& header) {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
}

}  // namespace

Eigen::Index CsvTable::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) return static_cast<Eigen::Index>(c);
    }
    throw ConfigError("csv has no column '" + name + "'");
}

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
    table.header = split(line);
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::vector<std::string> cells = split(line);
        if (cells.size() != table.header.size()) {
            throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(table.header.size()) + " cells, got " +
                          std::to_string(cells.size()));
        }
        std::vector<double>& row = rows.emplace_back();
        for (const std::string& c : cells) row.push_back(parse_real(c, path, lineno));
    }
    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return table;
}

void write_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& values) {
    if (static_cast<std::size_t>(values.cols()) != header.size()) {
        throw ConfigError("csv header has " + std::to_string(header.size()) + " names for " +
                          std::to_string(values.cols()) + " columns");
    }
    std::ofstream out = open_out(path);
    write_header(out, header);
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            out << (c ? "," : "") << format_real(values(r, c));
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

void write_csv_rows(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out = open_out(path);
    write_header(out, header);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
        out << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace adaptkan
