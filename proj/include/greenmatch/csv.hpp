#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace greenmatch {

/// Floating-point cell formatted with 17 significant digits (lossless for double).
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const;
    Eigen::VectorXd column_values(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

/// Writes header + numeric rows; every float printed via format_double.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace greenmatch
