#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mad4ag/core.hpp"

namespace mad4ag::csv {

/// Splits one CSV record. Double quotes delimit fields that contain commas;
/// a doubled quote inside a quoted field is a literal quote.
inline std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  /// Column index by name, or -1.
  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline Table parse(std::string_view text) {
  Table t;
  std::size_t pos = 0, line_no = 0;
  bool have_header = false;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!have_header) {
      t.header = split_record(line);
      have_header = true;
    } else {
      t.rows.push_back(split_record(line));
      t.line_numbers.push_back(line_no);
    }
  }
  return t;
}

inline Table read(const std::filesystem::path& path) { return parse(read_file(path)); }

/// Throws SchemaMismatch (a data error) unless every required column is present.
inline void require_columns(const Table& t, const std::vector<std::string>& required,
                            const std::string& what) {
  for (const auto& name : required) {
    if (t.column(name) < 0) {
      std::string got;
      for (const auto& h : t.header) got += (got.empty() ? "" : ",") + h;
      throw data_error("schema mismatch in " + what + ": missing column '" + name + "' (header: " + got + ")");
    }
  }
}

inline bool to_double(std::string_view s, double& out) noexcept {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

inline bool to_int(std::string_view s, std::int64_t& out) noexcept {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec == std::errc{} && p == s.data() + s.size()) return true;
  double d = 0.0;
  if (to_double(s, d) && d == std::floor(d) && std::abs(d) < 9.0e15) {
    out = static_cast<std::int64_t>(d);
    return true;
  }
  return false;
}

/// Shortest round-trip representation; stable across runs.
inline std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string fmt(double v, int precision) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  return std::string(buf, p);
}

inline std::string quote(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

/// Accumulates a CSV document in memory and writes it in one go.
class Writer {
 public:
  explicit Writer(const std::vector<std::string>& header) { row(header); }

  template <typename... Fields>
  void add(const Fields&... fields) {
    bool first = true;
    ((append(first, fields)), ...);
    buf_.push_back('\n');
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) buf_.push_back(',');
      buf_ += quote(fields[i]);
    }
    buf_.push_back('\n');
  }

  const std::string& str() const noexcept { return buf_; }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write " + path.string());
    out << buf_;
  }

 private:
  template <typename T>
  void append(bool& first, const T& v) {
    if (!first) buf_.push_back(',');
    first = false;
    if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, std::string_view>) {
      buf_ += quote(v);
    } else if constexpr (std::is_convertible_v<T, const char*>) {
      buf_ += quote(std::string_view(v));
    } else if constexpr (std::is_same_v<T, bool>) {
      buf_ += v ? "1" : "0";
    } else if constexpr (std::is_floating_point_v<T>) {
      buf_ += fmt(static_cast<double>(v));
    } else {
      buf_ += std::to_string(v);
    }
  }

  std::string buf_;
};

}  // namespace mad4ag::csv
