#pragma once

// RFC-4180 CSV output: header row, CRLF-free lines, fields quoted only when
// they contain a comma, quote or line break.

#include <filesystem>
#include <string>
#include <vector>

namespace nfem::csv {

std::string quote(const std::string& field);
/// Shortest round-trip decimal form (%.17g); NaN rendered as an empty cell.
std::string number(double value);

class Table {
 public:
  explicit Table(std::vector<std::string> header);

  void add_row(std::vector<std::string> row);
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace nfem::csv
