#pragma once

#include "adaptkan/network.hpp"

#include <string>
#include <vector>

namespace adaptkan {

/// Numeric CSV with a one-line header.
struct CsvTable {
    std::vector<std::string> header;
    Matrix values;

    /// Throws ConfigError when the column is missing.
    Eigen::Index column(const std::string& name) const;
};

/// Shortest text that parses back to exactly `v`; "inf", "-inf", "nan"
/// for non-finite values.
std::string format_real(double v);

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& values);

/// Rows of already formatted cells.
void write_csv_rows(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

}  // namespace adaptkan
