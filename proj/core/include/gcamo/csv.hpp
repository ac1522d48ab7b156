#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gcamo::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::size_t column(const std::string& name) const;
};

/// Comma-separated, no quoting. Ragged rows are a ValidationError naming the
/// file and line.
Table read(const std::filesystem::path& path);

double to_double(const std::string& cell, const std::filesystem::path& path, std::size_t line);
int to_int(const std::string& cell, const std::filesystem::path& path, std::size_t line);

/// Shortest decimal text that round-trips the double.
std::string format(double v);

}  // namespace gcamo::csv
