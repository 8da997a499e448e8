#pragma once

// Plain-text record files shared by the network, case, manifest, dataset and
// experiment-config formats.
//
//   # comment until end of line
//   [section]
//   key=value key=value ...
//
// Spaces around '=' are ignored, so `key = value` is one pair. A record is
// one non-empty line; values never contain whitespace.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridvc {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Record {
  std::string section;
  int line = 0;
  std::vector<std::pair<std::string, std::string>> fields;

  bool has(std::string_view key) const;
  const std::string& get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key) const;
  double get_double_or(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;
};

struct RecordFile {
  // Value of the `# <magic> v<version>` first line, if any.
  std::string header;
  std::vector<Record> records;

  std::vector<const Record*> section(std::string_view name) const;
  const Record& single(std::string_view name) const;
};

RecordFile parse_records(std::istream& in, const std::string& source_name);
RecordFile read_record_file(const std::filesystem::path& path);

// Checks that the first line reads `# <magic> v<version>`.
void require_header(const RecordFile& file, std::string_view magic, int version,
                    const std::string& source_name);

double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);
std::vector<double> parse_double_list(std::string_view text, std::string_view what);
std::vector<std::string> split(std::string_view text, char sep);

// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);
std::string format_double_list(const std::vector<double>& values);
// Exact hexadecimal float text ("%a"), comma separated.
std::string format_hex_list(const double* data, std::size_t n);

}  // namespace gridvc
