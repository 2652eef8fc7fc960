#include "cdml/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cdml/error.hpp"

namespace cdml {

std::string_view to_string(ValidationMode mode) noexcept {
  return mode == ValidationMode::strict ? "strict" : "synthetic";
}

ValidationMode parse_validation_mode(std::string_view text) {
  if (text == "strict") return ValidationMode::strict;
  if (text == "synthetic") return ValidationMode::synthetic;
  fail(ErrorKind::InvalidArgument, "unknown validation mode '" + std::string(text) + "'");
}

namespace {

std::optional<double> parse_number(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> line_numbers;
};

RawTable read_table(std::istream& in) {
  RawTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
          static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
        line.erase(0, 3);
      }
      table.header = split_fields(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != table.header.size()) {
      fail(ErrorKind::InvalidValue, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(table.header.size()) + " fields, found " +
                                        std::to_string(fields.size()));
    }
    table.cells.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) fail(ErrorKind::EmptyDataset, "input has no header row");
  return table;
}

class ColumnIndex {
 public:
  explicit ColumnIndex(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (!positions_.emplace(header[i], i).second) {
        fail(ErrorKind::InvalidValue, "duplicate column '" + header[i] + "'");
      }
    }
  }

  std::size_t require(const std::string& name) const {
    const auto it = positions_.find(name);
    if (it == positions_.end()) fail(ErrorKind::MissingColumn, "missing required column '" + name + "'");
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::size_t> positions_;
};

struct PrefixedColumns {
  std::vector<std::string> names;     // without prefix
  std::vector<std::size_t> positions;
};

PrefixedColumns prefixed(const std::vector<std::string>& header, std::string_view prefix) {
  PrefixedColumns out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].size() > prefix.size() && header[i].starts_with(prefix)) {
      out.names.push_back(header[i].substr(prefix.size()));
      out.positions.push_back(i);
    }
  }
  return out;
}

std::string where(const RawTable& t, std::size_t r) {
  return "line " + std::to_string(t.line_numbers[r]);
}

double numeric_cell(const RawTable& t, std::size_t r, std::size_t col) {
  const std::string& text = t.cells[r][col];
  if (text.empty()) fail(ErrorKind::InvalidValue, where(t, r) + ": missing value in column '" + t.header[col] + "'");
  const auto value = parse_number(text);
  if (!value) {
    fail(ErrorKind::InvalidValue, where(t, r) + ": non-numeric value '" + text + "' in column '" +
                                      t.header[col] + "'");
  }
  return *value;
}

// Columns and structure shared by the single- and two-party schemas.
struct CommonPart {
  std::vector<std::string> w_names;
  std::vector<std::string> z_names;
  std::vector<Contest> contests;
  std::vector<std::size_t> row_cluster;
  std::vector<std::string> precinct_ids;
  std::vector<std::vector<double>> w_values;
};

CommonPart parse_common(const RawTable& t) {
  const ColumnIndex index(t.header);
  const std::size_t contest_col = index.require("contest_id");
  const std::size_t precinct_col = index.require("precinct_id");
  const std::size_t t_col = index.require("t");
  const PrefixedColumns w = prefixed(t.header, "w_");
  const PrefixedColumns z = prefixed(t.header, "z_");

  if (t.cells.empty()) fail(ErrorKind::EmptyDataset, "input has a header but no data rows");

  // A z column is categorical when any of its cells is non-numeric.
  std::vector<bool> z_categorical(z.positions.size(), false);
  for (std::size_t j = 0; j < z.positions.size(); ++j) {
    for (std::size_t r = 0; r < t.cells.size(); ++r) {
      const std::string& text = t.cells[r][z.positions[j]];
      if (text.empty()) {
        fail(ErrorKind::InvalidValue, where(t, r) + ": missing value in column 'z_" + z.names[j] + "'");
      }
      if (!parse_number(text)) {
        z_categorical[j] = true;
        break;
      }
    }
  }

  CommonPart out;
  out.w_names = w.names;
  out.z_names = z.names;
  std::unordered_map<std::string, std::size_t> cluster_of;
  out.row_cluster.reserve(t.cells.size());
  for (std::size_t r = 0; r < t.cells.size(); ++r) {
    const auto& row = t.cells[r];
    const std::string& contest_id = row[contest_col];
    if (contest_id.empty()) fail(ErrorKind::InvalidValue, where(t, r) + ": empty contest_id");

    const std::string& t_text = row[t_col];
    int treatment = 0;
    if (t_text == "1") {
      treatment = 1;
    } else if (t_text != "0") {
      fail(ErrorKind::InvalidValue, where(t, r) + ": treatment must be 0 or 1, found '" + t_text + "'");
    }

    std::vector<CovariateValue> zv;
    zv.reserve(z.positions.size());
    for (std::size_t j = 0; j < z.positions.size(); ++j) {
      const std::string& text = row[z.positions[j]];
      if (z_categorical[j]) {
        zv.emplace_back(text);
      } else {
        zv.emplace_back(*parse_number(text));
      }
    }

    auto [it, inserted] = cluster_of.emplace(contest_id, out.contests.size());
    if (inserted) {
      out.contests.push_back(Contest{contest_id, treatment, std::move(zv)});
    } else {
      const Contest& existing = out.contests[it->second];
      if (existing.treatment != treatment) {
        fail(ErrorKind::TreatmentInconsistent,
             where(t, r) + ": contest '" + contest_id + "' has both t=0 and t=1");
      }
      for (std::size_t j = 0; j < zv.size(); ++j) {
        if (existing.covariates[j] != zv[j]) {
          fail(ErrorKind::ZInconsistent, where(t, r) + ": column 'z_" + z.names[j] +
                                             "' is not constant within contest '" + contest_id + "'");
        }
      }
    }
    out.row_cluster.push_back(it->second);
    out.precinct_ids.push_back(row[precinct_col]);

    std::vector<double> wv;
    wv.reserve(w.positions.size());
    for (std::size_t pos : w.positions) wv.push_back(numeric_cell(t, r, pos));
    out.w_values.push_back(std::move(wv));
  }
  return out;
}

void check_share(double value, std::string_view column, ValidationMode mode, std::size_t row) {
  if (!std::isfinite(value)) {
    fail(ErrorKind::InvalidValue, "row " + std::to_string(row) + ": non-finite " + std::string(column));
  }
  if (mode == ValidationMode::strict && (value < 0.0 || value > 1.0)) {
    fail(ErrorKind::RangeViolation, "row " + std::to_string(row) + ": " + std::string(column) + " = " +
                                        format_number(value) + " outside [0, 1]");
  }
}

void write_header(std::ostream& out, const std::vector<std::string>& w_names,
                  const std::vector<std::string>& z_names, std::initializer_list<std::string_view> shares) {
  out << "contest_id,precinct_id";
  for (auto s : shares) out << ',' << s;
  out << ",t";
  for (const auto& n : w_names) out << ",w_" << n;
  for (const auto& n : z_names) out << ",z_" << n;
  out << '\n';
}

void write_covariates(std::ostream& out, const std::vector<double>& w, const Contest& contest) {
  for (double v : w) out << ',' << format_number(v);
  for (const auto& z : contest.covariates) {
    out << ',';
    if (const double* d = std::get_if<double>(&z)) {
      out << format_number(*d);
    } else {
      out << std::get<std::string>(z);
    }
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

PanelDataset PanelDataset::build(std::vector<std::string> w_names, std::vector<std::string> z_names,
                                 std::vector<Contest> contests, std::vector<PrecinctRow> rows,
                                 ValidationMode mode) {
  if (contests.empty() || rows.empty()) fail(ErrorKind::EmptyDataset, "dataset has no rows");

  std::set<std::string> seen_ids;
  for (const Contest& c : contests) {
    if (!seen_ids.insert(c.id).second) fail(ErrorKind::InvalidValue, "duplicate contest_id '" + c.id + "'");
    if (c.treatment != 0 && c.treatment != 1) {
      fail(ErrorKind::InvalidValue, "contest '" + c.id + "': treatment must be 0 or 1");
    }
    if (c.covariates.size() != z_names.size()) {
      fail(ErrorKind::InvalidValue, "contest '" + c.id + "': covariate count does not match z columns");
    }
  }
  for (std::size_t j = 0; j < z_names.size(); ++j) {
    const bool numeric = std::holds_alternative<double>(contests.front().covariates[j]);
    for (const Contest& c : contests) {
      if (std::holds_alternative<double>(c.covariates[j]) != numeric) {
        fail(ErrorKind::InvalidValue, "column 'z_" + z_names[j] + "' mixes numeric and categorical values");
      }
    }
  }

  std::vector<std::size_t> counts(contests.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const PrecinctRow& r = rows[i];
    if (r.cluster >= contests.size()) {
      fail(ErrorKind::InvalidValue, "row " + std::to_string(i) + " references an unknown contest");
    }
    if (r.covariates.size() != w_names.size()) {
      fail(ErrorKind::InvalidValue, "row " + std::to_string(i) + ": covariate count does not match w columns");
    }
    for (double w : r.covariates) {
      if (!std::isfinite(w)) fail(ErrorKind::InvalidValue, "row " + std::to_string(i) + ": non-finite covariate");
    }
    check_share(r.outcome, "outcome", mode, i);
    check_share(r.modifier, "modifier", mode, i);
    ++counts[r.cluster];
  }
  for (std::size_t c = 0; c < contests.size(); ++c) {
    if (counts[c] == 0) fail(ErrorKind::InvalidValue, "contest '" + contests[c].id + "' has no precincts");
  }

  PanelDataset ds;
  ds.offsets_.assign(contests.size() + 1, 0);
  for (std::size_t c = 0; c < contests.size(); ++c) ds.offsets_[c + 1] = ds.offsets_[c] + counts[c];
  std::vector<std::size_t> cursor(ds.offsets_.begin(), ds.offsets_.end() - 1);
  ds.rows_.resize(rows.size());
  for (auto& r : rows) {
    const std::size_t slot = cursor[r.cluster]++;
    ds.rows_[slot] = std::move(r);
  }
  ds.w_names_ = std::move(w_names);
  ds.z_names_ = std::move(z_names);
  ds.contests_ = std::move(contests);
  ds.mode_ = mode;
  return ds;
}

Eigen::VectorXd PanelDataset::outcomes() const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t i = 0; i < rows_.size(); ++i) y[static_cast<Eigen::Index>(i)] = rows_[i].outcome;
  return y;
}

Eigen::VectorXd PanelDataset::modifiers() const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t i = 0; i < rows_.size(); ++i) x[static_cast<Eigen::Index>(i)] = rows_[i].modifier;
  return x;
}

PanelDataset PanelDataset::with_outcomes(const Eigen::VectorXd& y) const {
  require(static_cast<std::size_t>(y.size()) == rows_.size(), ErrorKind::InvalidArgument,
          "outcome vector length does not match the dataset");
  PanelDataset copy = *this;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    copy.rows_[i].outcome = y[static_cast<Eigen::Index>(i)];
    check_share(copy.rows_[i].outcome, "outcome", mode_, i);
  }
  return copy;
}

PanelDataset ingest_csv(std::istream& in, ValidationMode mode) {
  const RawTable table = read_table(in);
  const ColumnIndex index(table.header);
  const std::size_t y_col = index.require("y");
  const std::size_t x_col = index.require("x");
  CommonPart common = parse_common(table);

  std::vector<PrecinctRow> rows;
  rows.reserve(table.cells.size());
  for (std::size_t r = 0; r < table.cells.size(); ++r) {
    rows.push_back(PrecinctRow{common.row_cluster[r], std::move(common.precinct_ids[r]),
                               numeric_cell(table, r, y_col), numeric_cell(table, r, x_col),
                               std::move(common.w_values[r])});
  }
  return PanelDataset::build(std::move(common.w_names), std::move(common.z_names),
                             std::move(common.contests), std::move(rows), mode);
}

PanelDataset ingest_csv(const std::filesystem::path& path, ValidationMode mode) {
  auto in = open_input(path);
  return ingest_csv(in, mode);
}

void write_csv(const PanelDataset& ds, std::ostream& out) {
  write_header(out, ds.w_names(), ds.z_names(), {"y", "x"});
  for (const PrecinctRow& r : ds.rows()) {
    const Contest& contest = ds.contests()[r.cluster];
    out << contest.id << ',' << r.precinct_id << ',' << format_number(r.outcome) << ','
        << format_number(r.modifier) << ',' << contest.treatment;
    write_covariates(out, r.covariates, contest);
    out << '\n';
  }
}

void write_csv(const PanelDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  write_csv(ds, out);
}

DesignSummary validate_design(const PanelDataset& ds) {
  DesignSummary s;
  s.clusters = ds.cluster_count();
  s.rows = ds.row_count();
  for (const Contest& c : ds.contests()) (c.treatment == 1 ? s.treated : s.control)++;
  if (s.clusters == 0) fail(ErrorKind::EmptyDataset, "dataset has no clusters");
  if (s.treated == 0 || s.control == 0) {
    fail(ErrorKind::DegenerateTreatment,
         s.treated == 0 ? "no treated clusters; the final stage is unidentified"
                        : "all clusters treated; the final stage is unidentified");
  }
  s.treated_share = static_cast<double>(s.treated) / static_cast<double>(s.clusters);
  s.small_cluster_warning = s.clusters < kSmallClusterCount;
  return s;
}

TwoPartyPanel ingest_two_party_csv(std::istream& in, ValidationMode mode) {
  const RawTable table = read_table(in);
  const ColumnIndex index(table.header);
  const std::size_t yd = index.require("y_d");
  const std::size_t yr = index.require("y_r");
  const std::size_t xd = index.require("x_d");
  const std::size_t xr = index.require("x_r");
  CommonPart common = parse_common(table);

  TwoPartyPanel panel;
  panel.mode = mode;
  panel.rows.reserve(table.cells.size());
  for (std::size_t r = 0; r < table.cells.size(); ++r) {
    TwoPartyRow row{common.row_cluster[r],        std::move(common.precinct_ids[r]),
                    numeric_cell(table, r, yd),   numeric_cell(table, r, yr),
                    numeric_cell(table, r, xd),   numeric_cell(table, r, xr),
                    std::move(common.w_values[r])};
    check_share(row.y_d, "y_d", mode, r);
    check_share(row.y_r, "y_r", mode, r);
    check_share(row.x_d, "x_d", mode, r);
    check_share(row.x_r, "x_r", mode, r);
    panel.rows.push_back(std::move(row));
  }
  panel.w_names = std::move(common.w_names);
  panel.z_names = std::move(common.z_names);
  panel.contests = std::move(common.contests);
  return panel;
}

TwoPartyPanel ingest_two_party_csv(const std::filesystem::path& path, ValidationMode mode) {
  auto in = open_input(path);
  return ingest_two_party_csv(in, mode);
}

void write_two_party_csv(const TwoPartyPanel& panel, std::ostream& out) {
  write_header(out, panel.w_names, panel.z_names, {"y_d", "y_r", "x_d", "x_r"});
  for (const TwoPartyRow& r : panel.rows) {
    const Contest& contest = panel.contests[r.cluster];
    out << contest.id << ',' << r.precinct_id << ',' << format_number(r.y_d) << ','
        << format_number(r.y_r) << ',' << format_number(r.x_d) << ',' << format_number(r.x_r) << ','
        << contest.treatment;
    write_covariates(out, r.covariates, contest);
    out << '\n';
  }
}

std::pair<PanelDataset, PanelDataset> split_by_party(const TwoPartyPanel& panel) {
  std::vector<PrecinctRow> d_rows;
  std::vector<PrecinctRow> r_rows;
  d_rows.reserve(panel.rows.size());
  r_rows.reserve(panel.rows.size());
  for (const TwoPartyRow& row : panel.rows) {
    d_rows.push_back(PrecinctRow{row.cluster, row.precinct_id, row.y_d, row.x_d, row.covariates});
    r_rows.push_back(PrecinctRow{row.cluster, row.precinct_id, row.y_r, row.x_r, row.covariates});
  }
  return {PanelDataset::build(panel.w_names, panel.z_names, panel.contests, std::move(d_rows), panel.mode),
          PanelDataset::build(panel.w_names, panel.z_names, panel.contests, std::move(r_rows), panel.mode)};
}

FeatureMatrix design_features(const PanelDataset& ds) {
  const auto& contests = ds.contests();
  const std::size_t nz = ds.z_names().size();

  // Levels of each categorical column, sorted; the first is the reference.
  std::vector<std::vector<std::string>> levels(nz);
  std::vector<bool> categorical(nz, false);
  for (std::size_t j = 0; j < nz; ++j) {
    if (std::holds_alternative<std::string>(contests.front().covariates[j])) {
      categorical[j] = true;
      std::set<std::string> uniq;
      for (const Contest& c : contests) uniq.insert(std::get<std::string>(c.covariates[j]));
      levels[j].assign(uniq.begin(), uniq.end());
    }
  }

  FeatureMatrix fm;
  fm.names.push_back("x");
  for (const auto& n : ds.w_names()) fm.names.push_back("w_" + n);
  for (std::size_t j = 0; j < nz; ++j) {
    if (!categorical[j]) fm.names.push_back("z_" + ds.z_names()[j]);
  }
  for (std::size_t j = 0; j < nz; ++j) {
    if (!categorical[j]) continue;
    for (std::size_t l = 1; l < levels[j].size(); ++l) {
      fm.names.push_back("z_" + ds.z_names()[j] + "=" + levels[j][l]);
    }
  }

  const auto n = static_cast<Eigen::Index>(ds.row_count());
  fm.values.setZero(n, static_cast<Eigen::Index>(fm.names.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const PrecinctRow& r = ds.rows()[static_cast<std::size_t>(i)];
    const Contest& contest = contests[r.cluster];
    Eigen::Index col = 0;
    fm.values(i, col++) = r.modifier;
    for (double w : r.covariates) fm.values(i, col++) = w;
    for (std::size_t j = 0; j < nz; ++j) {
      if (!categorical[j]) fm.values(i, col++) = std::get<double>(contest.covariates[j]);
    }
    for (std::size_t j = 0; j < nz; ++j) {
      if (!categorical[j]) continue;
      const auto& level = std::get<std::string>(contest.covariates[j]);
      for (std::size_t l = 1; l < levels[j].size(); ++l, ++col) {
        if (levels[j][l] == level) fm.values(i, col) = 1.0;
      }
    }
  }
  return fm;
}

}  // namespace cdml
