// Minimal CSV support: header row required, double-quoted fields allowed.
#ifndef BIVLMM_CSV_HPP
#define BIVLMM_CSV_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace bivlmm {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // each row has header.size() cells
  std::vector<std::size_t> line_numbers;       // 1-based source line per row

  // Column index by name; -1 if absent.
  int column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace bivlmm

#endif  // BIVLMM_CSV_HPP
