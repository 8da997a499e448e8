#include "gridvc/records.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gridvc {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Collapses whitespace around '=' so "a = b" tokenizes as "a=b".
std::string normalize_assignments(std::string_view line) {
  std::string out;
  out.reserve(line.size());
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '=') {
      while (!out.empty() && (out.back() == ' ' || out.back() == '\t')) out.pop_back();
      out.push_back('=');
      while (i + 1 < line.size() && (line[i + 1] == ' ' || line[i + 1] == '\t')) ++i;
    } else {
      out.push_back(line[i]);
    }
  }
  return out;
}

}  // namespace

bool Record::has(std::string_view key) const {
  for (const auto& [k, v] : fields)
    if (k == key) return true;
  return false;
}

const std::string& Record::get(std::string_view key) const {
  for (const auto& [k, v] : fields)
    if (k == key) return v;
  throw FormatError("line " + std::to_string(line) + ": [" + section + "] record missing key '" +
                    std::string(key) + "'");
}

std::string Record::get_or(std::string_view key, std::string fallback) const {
  for (const auto& [k, v] : fields)
    if (k == key) return v;
  return fallback;
}

double Record::get_double(std::string_view key) const { return parse_double(get(key), key); }

double Record::get_double_or(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t Record::get_int(std::string_view key) const { return parse_int(get(key), key); }

std::vector<double> Record::get_doubles(std::string_view key) const {
  return parse_double_list(get(key), key);
}

std::vector<const Record*> RecordFile::section(std::string_view name) const {
  std::vector<const Record*> out;
  for (const auto& r : records)
    if (r.section == name) out.push_back(&r);
  return out;
}

const Record& RecordFile::single(std::string_view name) const {
  auto rs = section(name);
  if (rs.size() != 1)
    throw FormatError("expected exactly one record in [" + std::string(name) + "], found " +
                      std::to_string(rs.size()));
  return *rs.front();
}

RecordFile parse_records(std::istream& in, const std::string& source_name) {
  RecordFile file;
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (line_no == 1 && line.starts_with("#")) {
      file.header = std::string(trim(line.substr(1)));
      continue;
    }
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw FormatError(source_name + ":" + std::to_string(line_no) + ": bad section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    Record rec;
    rec.section = section;
    rec.line = line_no;
    std::istringstream tokens(normalize_assignments(line));
    std::string tok;
    while (tokens >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0)
        throw FormatError(source_name + ":" + std::to_string(line_no) + ": expected key=value, got '" +
                          tok + "'");
      rec.fields.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    }
    file.records.push_back(std::move(rec));
  }
  return file;
}

RecordFile read_record_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_records(in, path.string());
}

void require_header(const RecordFile& file, std::string_view magic, int version,
                    const std::string& source_name) {
  const std::string expected = std::string(magic) + " v" + std::to_string(version);
  if (file.header != expected)
    throw FormatError(source_name + ": expected header '# " + expected + "', got '# " + file.header +
                      "'");
}

double parse_double(std::string_view text, std::string_view what) {
  // strtod handles hex floats and inf/nan spellings that from_chars on older
  // toolchains may not.
  std::string buf(text);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size())
    throw FormatError("bad number for '" + std::string(what) + "': '" + buf + "'");
  return v;
}

std::int64_t parse_int(std::string_view text, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError("bad integer for '" + std::string(what) + "': '" + std::string(text) + "'");
  return v;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    out.emplace_back(trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<double> parse_double_list(std::string_view text, std::string_view what) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_double(part, what));
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_double_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(',');
    out += format_double(values[i]);
  }
  return out;
}

std::string format_hex_list(const double* data, std::size_t n) {
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%a", data[i]);
    if (i) out.push_back(',');
    out += buf;
  }
  return out;
}

}  // namespace gridvc
