#pragma once

// Minimal delimiter-separated text helpers shared by the ingest and report
// stages. Quoted fields follow RFC 4180 ("" escapes a quote inside quotes).

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace teamprod::csv {

std::vector<std::string> split_line(std::string_view line, char delim = ',');

// Quotes the field only when it contains the delimiter, a quote or a newline.
std::string escape_field(std::string_view field, char delim = ',');

std::string join_line(const std::vector<std::string>& fields, char delim = ',');

// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

// Strict full-string parses; return false on any trailing garbage.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::string_view trim(std::string_view text);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const Table&) const = default;
};

void write_table(std::ostream& out, const Table& table, char delim = ',');
Table read_table(std::istream& in, char delim = ',');

}  // namespace teamprod::csv
