#include <cmath>
#include <cstdio>
#include <fstream>

#include "nfem/csv.hpp"
#include "nfem/error.hpp"

namespace nfem::csv {

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string number(double value) {
  if (std::isnan(value)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

Table::Table(std::vector<std::string> header) : header_(std::move(header)) {}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size())
    throw InvalidArgument("csv", "row has " + std::to_string(row.size()) + " fields, header has " +
                                     std::to_string(header_.size()));
  rows_.push_back(std::move(row));
}

std::string Table::str() const {
  std::string out;
  const auto line = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + quote(fields[i]);
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void Table::write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("csv", "cannot write " + path.string());
  os << str();
  if (!os) throw IoError("csv", "write failed for " + path.string());
}

}  // namespace nfem::csv
