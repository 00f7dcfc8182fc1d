#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace synthctl::csv {

/// A parsed CSV file: header plus string rows. Quoted fields and CRLF are handled.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string source;  // file name, for error messages

  // Index of a header column; throws MalformedCsv if absent.
  std::size_t column(std::string_view name) const;
};

Table read(std::istream& in, std::string source = "<stream>");
Table read_file(const std::filesystem::path& path);

// Parses a floating-point field. Empty, "NA" and "NaN" become NaN.
double parse_double(std::string_view field, const std::string& context);

// 17 significant digits; NaN is written as an empty field.
std::string format_double(double value);

std::string escape(std::string_view field);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  Writer& row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

}  // namespace synthctl::csv
