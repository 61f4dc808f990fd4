#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcu/error.hpp"

namespace mcu::io {

struct CsvMatrix {
  std::vector<std::string> header;  // empty when the file had none
  Eigen::MatrixXd values;
};

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);
double parse_double(const std::string& text);

/// One sample per row. A first row containing any non-numeric field is
/// taken as a header. Ragged rows are rejected.
CsvMatrix read_csv(const std::string& path);
std::string csv_text(const Eigen::MatrixXd& values, const std::vector<std::string>& header = {});
void write_csv(const std::string& path, const Eigen::MatrixXd& values, const std::vector<std::string>& header = {});

/// Writes to a sibling temporary file, then renames over `path`.
void atomic_write(const std::string& path, const std::string& contents);
std::string read_text(const std::string& path);
bool exists(const std::string& path);
bool is_directory(const std::string& path);

}  // namespace mcu::io
