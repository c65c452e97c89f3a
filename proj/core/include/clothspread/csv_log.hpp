#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace clothspread::harness {

// Headered CSV with floats at 17 significant digits, enough to round-trip
// doubles exactly for bitwise replay comparisons.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);

  void write_row(const std::vector<std::string>& cells);

  static std::string num(double v);
  static std::string num(long v);
  static std::string num(unsigned long long v);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace clothspread::harness
