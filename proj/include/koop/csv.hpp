#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace koop {

// All numeric output uses 17 significant digits so that files round-trip
// doubles exactly.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;  // one row per record

  int cols() const { return static_cast<int>(header.size()); }
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

void ensure_directory(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace koop
