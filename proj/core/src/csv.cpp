#include "dissect/csv.hpp"

#include "dissect/errors.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dissect {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error("invalid-csv", "no column named '" + name + "'");
}

namespace {

double parse_number(const std::string& cell) {
  if (cell.empty()) throw Error("invalid-csv", "empty numeric cell");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(cell.c_str(), &end);
  // Underflow to a subnormal or zero is a valid result; only overflow is rejected.
  if (end != cell.c_str() + cell.size() || (errno == ERANGE && std::isinf(v))) {
    throw Error("invalid-csv", "'" + cell + "' is not a number");
  }
  return v;
}

bool needs_quotes(const std::string& cell) { return cell.find_first_of(",\"\n\r") != std::string::npos; }

void append_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    if (needs_quotes(row[i])) {
      out += '"';
      for (char c : row[i]) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    } else {
      out += row[i];
    }
  }
  out += '\n';
}

}  // namespace

Matrix CsvTable::numeric() const {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      m(static_cast<Index>(r), static_cast<Index>(c)) = parse_number(rows[r][c]);
    }
  }
  return m;
}

Vector CsvTable::numeric_column(const std::string& name) const {
  const std::size_t c = column(name);
  Vector v(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) v(static_cast<Index>(r)) = parse_number(rows[r][c]);
  return v;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false, in_quotes = false, any = false;
  auto end_cell = [&] {
    row.push_back(cell);
    cell.clear();
    quoted = false;
  };
  auto end_row = [&] {
    end_cell();
    records.push_back(std::move(row));
    row.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"' && cell.empty() && !quoted) {
      in_quotes = quoted = any = true;
    } else if (c == ',') {
      end_cell();
      any = true;
    } else if (c == '\n') {
      end_row();
    } else if (c != '\r') {
      cell += c;
      any = true;
    }
  }
  if (in_quotes) throw Error("invalid-csv", "unterminated quoted cell");
  if (any || !cell.empty() || !row.empty()) end_row();
  if (records.empty()) throw Error("invalid-csv", "missing header row");
  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw Error("invalid-csv", "row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                                     " cells, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& r : table.rows) append_row(out, r);
  return out;
}

CsvTable numeric_table(const std::vector<std::string>& header, const Matrix& values) {
  if (static_cast<Index>(header.size()) != values.cols()) throw DimensionMismatch("header does not match columns");
  CsvTable t;
  t.header = header;
  for (Index r = 0; r < values.rows(); ++r) {
    std::vector<std::string> row;
    for (Index c = 0; c < values.cols(); ++c) row.push_back(format_number(values(r, c)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("file-not-found", "file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

void write_csv(const std::string& path, const CsvTable& table) { write_file_atomic(path, to_csv(table)); }

}  // namespace dissect
