#pragma once

#include <optional>
#include <string>
#include <vector>

namespace riskdid {

// Minimal CSV support: comma-separated, UTF-8, double quotes for fields that
// contain commas/quotes/newlines, first row is the header.
struct csv_table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // index of a header column, or nullopt
  std::optional<std::size_t> column(const std::string& name) const;
};

csv_table read_csv(const std::string& path);
void write_csv(const std::string& path, const csv_table& table);

std::string csv_escape(const std::string& field);

// full-precision double formatting so files round-trip exactly
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

}  // namespace riskdid
