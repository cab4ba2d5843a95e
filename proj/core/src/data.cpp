#include "bivlmm/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "bivlmm/csv.hpp"

namespace bivlmm {

namespace {

constexpr double kGridRelTol = 1e-6;

std::string fmt_time(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

// Anchor of the occasion grid. When the earliest time is a whole number of
// spacings (the usual case: a study clock starting at 0), occasion indices
// count from time 0 even if early visits are absent from the file.
double grid_origin_for(double min_time, double spacing) {
  return min_time - spacing * std::floor(min_time / spacing + 1e-9);
}

int occasion_for(double time, double origin, double spacing, const std::string& subject) {
  const double k = (time - origin) / spacing;
  const long rounded = std::lround(k);
  if (rounded < 0 || std::fabs(time - (origin + rounded * spacing)) > kGridRelTol * spacing) {
    throw GridViolationError("subject " + subject + ": time " + fmt_time(time) +
                             " is not on the occasion grid (spacing " + fmt_time(spacing) + ")");
  }
  return static_cast<int>(rounded);
}

void check_response(double value, const std::string& subject) {
  if (!std::isfinite(value)) {
    throw DataError("subject " + subject + ": non-finite response value");
  }
}

// Groups records by subject (first-appearance order), assigns occasions,
// sorts canonically, and rejects duplicate (marker, occasion) pairs.
StackedDataset assemble(std::vector<LongRecord> records, double occasion_spacing) {
  if (!(occasion_spacing > 0.0)) {
    throw std::invalid_argument("occasion_spacing must be positive");
  }
  StackedDataset out;
  out.occasion_spacing = occasion_spacing;
  if (records.empty()) return out;

  double min_time = records.front().time;
  for (const auto& r : records) {
    if (r.time < 0.0) throw DataError("subject " + r.subject_id + ": negative time");
    check_response(r.response, r.subject_id);
    min_time = std::min(min_time, r.time);
  }
  out.grid_origin = grid_origin_for(min_time, occasion_spacing);

  std::map<std::string, std::size_t> index;
  for (auto& r : records) {
    r.occasion = occasion_for(r.time, out.grid_origin, occasion_spacing, r.subject_id);
    auto [it, inserted] = index.try_emplace(r.subject_id, out.subjects.size());
    if (inserted) out.subjects.push_back(SubjectData{r.subject_id, {}});
    out.subjects[it->second].records.push_back(std::move(r));
  }

  for (auto& subj : out.subjects) {
    std::sort(subj.records.begin(), subj.records.end(), [](const LongRecord& a, const LongRecord& b) {
      if (a.marker != b.marker) return a.marker < b.marker;
      return a.occasion < b.occasion;
    });
    for (std::size_t i = 1; i < subj.records.size(); ++i) {
      const auto& prev = subj.records[i - 1];
      const auto& cur = subj.records[i];
      if (prev.marker == cur.marker && prev.occasion == cur.occasion) {
        throw DuplicateObservationError("subject " + subj.id + ": duplicate observation for " +
                                        std::string(to_string(cur.marker)) + " at occasion " +
                                        std::to_string(cur.occasion));
      }
    }
  }
  return out;
}

}  // namespace

std::size_t StackedDataset::n_records() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.records.size();
  return n;
}

const char* to_string(TimeTerm t) {
  switch (t) {
    case TimeTerm::Time: return "T";
    case TimeTerm::PiecePre: return "T1";
    default: return "T2";
  }
}

void DesignSpec::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("DesignSpec: tau must be positive");
  for (const auto& marker_terms : terms) {
    std::set<TimeTerm> seen;
    for (TimeTerm t : marker_terms) {
      if (!seen.insert(t).second) {
        throw std::invalid_argument("DesignSpec: duplicate term " + std::string(to_string(t)));
      }
    }
  }
}

int DesignSpec::columns_per_marker(Marker m) const {
  return static_cast<int>(terms[static_cast<int>(m)].size()) + (include_intercept ? 1 : 0);
}

std::pair<double, double> piecewise_time(double t, double tau) {
  if (t < 0.0) throw std::invalid_argument("piecewise_time: t must be >= 0");
  if (!(tau > 0.0)) throw std::invalid_argument("piecewise_time: tau must be positive");
  return {std::min(t, tau), std::max(t - tau, 0.0)};
}

StackedDataset stack_wide(const std::vector<WideRow>& rows, double occasion_spacing) {
  std::vector<LongRecord> records;
  records.reserve(rows.size() * 2);
  for (const auto& row : rows) {
    if (row.m1) records.push_back({row.subject_id, Marker::M1, row.time, 0, *row.m1});
    if (row.m2) records.push_back({row.subject_id, Marker::M2, row.time, 0, *row.m2});
  }
  return assemble(std::move(records), occasion_spacing);
}

StackedDataset stack_long(const std::vector<LongRecord>& records, double occasion_spacing) {
  return assemble(records, occasion_spacing);
}

std::vector<WideRow> unstack(const StackedDataset& data) {
  std::vector<WideRow> rows;
  for (const auto& subj : data.subjects) {
    std::map<int, WideRow> by_occasion;
    for (const auto& r : subj.records) {
      auto [it, inserted] = by_occasion.try_emplace(r.occasion);
      if (inserted) {
        it->second.subject_id = subj.id;
        it->second.time = r.time;
      }
      if (r.marker == Marker::M1) it->second.m1 = r.response;
      else it->second.m2 = r.response;
    }
    for (auto& [occ, row] : by_occasion) rows.push_back(std::move(row));
  }
  return rows;
}

BaselineDiffResult baseline_difference(const StackedDataset& data) {
  BaselineDiffResult out;
  out.data.occasion_spacing = data.occasion_spacing;
  out.data.grid_origin = data.grid_origin;
  for (const auto& subj : data.subjects) {
    std::array<std::optional<double>, 2> baseline;
    std::array<bool, 2> has_post = {false, false};
    for (const auto& r : subj.records) {
      const int k = static_cast<int>(r.marker);
      if (r.occasion == 0) baseline[k] = r.response;
      else has_post[k] = true;
    }
    bool excluded = false;
    for (int k = 0; k < 2; ++k) {
      if (has_post[k] && !baseline[k]) excluded = true;
    }
    if (excluded) {
      out.excluded_subjects.push_back(subj.id);
      continue;
    }
    SubjectData diffed{subj.id, {}};
    for (const auto& r : subj.records) {
      if (r.occasion == 0) continue;
      LongRecord rec = r;
      rec.response = r.response - *baseline[static_cast<int>(r.marker)];
      diffed.records.push_back(std::move(rec));
    }
    if (!diffed.records.empty()) out.data.subjects.push_back(std::move(diffed));
  }
  return out;
}

std::vector<SubjectDesign> build_design(const StackedDataset& data, const DesignSpec& spec,
                                        Scope scope) {
  spec.validate();
  std::vector<SubjectDesign> designs;
  designs.reserve(data.subjects.size());

  // Column offsets per marker within the block design.
  std::array<int, 2> col_offset = {0, 0};
  int p = 0;
  for (int k = 0; k < 2; ++k) {
    const Marker m = static_cast<Marker>(k);
    if (!scope_has(scope, m)) continue;
    col_offset[k] = p;
    p += spec.columns_per_marker(m);
  }

  for (const auto& subj : data.subjects) {
    std::vector<const LongRecord*> rows;
    for (const auto& r : subj.records) {
      if (scope_has(scope, r.marker)) rows.push_back(&r);
    }
    if (rows.empty()) continue;
    // Input is already canonical per subject, but do not rely on it.
    std::sort(rows.begin(), rows.end(), [](const LongRecord* a, const LongRecord* b) {
      if (a->marker != b->marker) return a->marker < b->marker;
      return a->occasion < b->occasion;
    });

    SubjectDesign d;
    d.subject_id = subj.id;
    const int n = static_cast<int>(rows.size());
    d.y.resize(n);
    d.X = Eigen::MatrixXd::Zero(n, p);
    d.marker_of_row.reserve(n);
    d.occasion_of_row.reserve(n);
    d.time_of_row.reserve(n);

    for (int i = 0; i < n; ++i) {
      const LongRecord& r = *rows[i];
      d.y[i] = r.response;
      d.marker_of_row.push_back(r.marker);
      d.occasion_of_row.push_back(r.occasion);
      d.time_of_row.push_back(r.time);

      int col = col_offset[static_cast<int>(r.marker)];
      if (spec.include_intercept) d.X(i, col++) = 1.0;
      const auto [t1, t2] = piecewise_time(r.time, spec.tau);
      for (TimeTerm term : spec.terms[static_cast<int>(r.marker)]) {
        switch (term) {
          case TimeTerm::Time: d.X(i, col++) = r.time; break;
          case TimeTerm::PiecePre: d.X(i, col++) = t1; break;
          case TimeTerm::PiecePost: d.X(i, col++) = t2; break;
        }
      }
    }
    d.Z = d.X;
    designs.push_back(std::move(d));
  }
  return designs;
}

std::vector<std::string> fixed_effect_names(const DesignSpec& spec, Scope scope) {
  std::vector<std::string> names;
  for (int k = 0; k < 2; ++k) {
    const Marker m = static_cast<Marker>(k);
    if (!scope_has(scope, m)) continue;
    const std::string prefix = std::string(to_string(m)) + ":";
    if (spec.include_intercept) names.push_back(prefix + "1");
    for (TimeTerm term : spec.terms[k]) names.push_back(prefix + to_string(term));
  }
  return names;
}

namespace {

bool cell_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "." || cell == "nan";
}

double parse_double(const std::string& cell, std::size_t line_no, const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw CsvParseError("line " + std::to_string(line_no) + ": bad number '" + cell +
                        "' in column " + col);
  }
}

int require_column(const CsvTable& table, const std::string& name) {
  const int idx = table.column(name);
  if (idx < 0) throw CsvParseError("line 1: missing required column '" + name + "'");
  return idx;
}

}  // namespace

std::vector<WideRow> read_wide_csv(std::istream& in, const WideSchema& schema) {
  const CsvTable table = read_csv(in);
  const int id_col = require_column(table, schema.subject_col);
  const int time_col = require_column(table, schema.time_col);
  const int m1_col = require_column(table, schema.marker_cols[0]);
  const int m2_col = require_column(table, schema.marker_cols[1]);

  std::vector<WideRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cells = table.rows[i];
    WideRow row;
    row.subject_id = cells[id_col];
    row.time = parse_double(cells[time_col], table.line_numbers[i], schema.time_col);
    if (!cell_missing(cells[m1_col])) {
      row.m1 = parse_double(cells[m1_col], table.line_numbers[i], schema.marker_cols[0]);
    }
    if (!cell_missing(cells[m2_col])) {
      row.m2 = parse_double(cells[m2_col], table.line_numbers[i], schema.marker_cols[1]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<LongRecord> read_long_csv(std::istream& in, const LongSchema& schema) {
  const CsvTable table = read_csv(in);
  const int id_col = require_column(table, schema.subject_col);
  const int marker_col = require_column(table, schema.marker_col);
  const int time_col = require_column(table, schema.time_col);
  const int resp_col = require_column(table, schema.response_col);

  std::vector<LongRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cells = table.rows[i];
    const std::size_t line_no = table.line_numbers[i];
    LongRecord rec;
    rec.subject_id = cells[id_col];
    const std::string& mv = cells[marker_col];
    if (mv == "0") rec.marker = Marker::M1;
    else if (mv == "1") rec.marker = Marker::M2;
    else {
      throw CsvParseError("line " + std::to_string(line_no) + ": marker indicator must be 0 or 1, got '" +
                          mv + "'");
    }
    rec.time = parse_double(cells[time_col], line_no, schema.time_col);
    rec.response = parse_double(cells[resp_col], line_no, schema.response_col);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_wide_csv(std::ostream& out, const StackedDataset& data, const WideSchema& schema) {
  std::vector<std::vector<std::string>> rows;
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  for (const auto& row : unstack(data)) {
    rows.push_back({row.subject_id, row.m1 ? fmt(*row.m1) : std::string(),
                    row.m2 ? fmt(*row.m2) : std::string(), fmt(row.time)});
  }
  write_csv(out, {schema.subject_col, schema.marker_cols[0], schema.marker_cols[1], schema.time_col},
            rows);
}

}  // namespace bivlmm
