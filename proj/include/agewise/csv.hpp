#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace agewise::csv {

inline bool needs_quoting(const std::string& field) {
  return field.find_first_of(",\"\n\r") != std::string::npos;
}

inline std::string quote(const std::string& field) {
  if (!needs_quoting(field)) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Cell {
  std::string text;
  Cell(std::string s) : text(std::move(s)) {}
  Cell(const char* s) : text(s) {}
  Cell(double v) : text(format_number(v)) {}
  Cell(long long v) : text(std::to_string(v)) {}
  Cell(unsigned long long v) : text(std::to_string(v)) {}
  Cell(int v) : text(std::to_string(v)) {}
  Cell(std::size_t v) : text(std::to_string(v)) {}
};

using Row = std::vector<Cell>;

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<Row>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("csv: cannot open " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out << ',';
    out << quote(header[i]);
  }
  out << '\n';
  for (const Row& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ',';
      out << quote(row[i].text);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("csv: write failed for " + path);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Reads a CSV file with quoted-field support; the first record is the
// header.
inline Table read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  Table table;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  const auto end_field = [&] {
    record.push_back(field);
    field.clear();
  };
  const auto end_record = [&] {
    end_field();
    if (!any) {
      table.header = record;
      any = true;
    } else {
      table.rows.push_back(record);
    }
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_record();
    } else {
      field += c;
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quote in " + path);
  if (!field.empty() || !record.empty()) end_record();
  return table;
}

}  // namespace agewise::csv
