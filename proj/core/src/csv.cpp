#include "bivlmm/csv.hpp"

#include <fstream>
#include <sstream>

#include "bivlmm/types.hpp"

namespace bivlmm {

namespace {

// Splits one physical line. Quotes may wrap any field; "" inside quotes is a
// literal quote. Embedded newlines are not supported.
std::vector<std::string> split_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cell;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  if (in_quotes) {
    throw CsvParseError("line " + std::to_string(line_no) + ": unterminated quoted field");
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!have_header) {
      table.header = split_line(line, line_no);
      have_header = true;
      continue;
    }
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line, line_no);
    if (cells.size() != table.header.size()) {
      throw CsvParseError("line " + std::to_string(line_no) + ": expected " +
                          std::to_string(table.header.size()) + " fields, got " +
                          std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw CsvParseError("line 1: missing header row");
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file: " + path);
  return read_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto write_cell = [&out](const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) {
      out << cell;
      return;
    }
    out << '"';
    for (char ch : cell) {
      if (ch == '"') out << "\"\"";
      else out << ch;
    }
    out << '"';
  };
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    write_cell(header[i]);
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      write_cell(row[i]);
    }
    out << '\n';
  }
}

}  // namespace bivlmm
