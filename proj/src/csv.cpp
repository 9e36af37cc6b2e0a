#include "bgate/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace bgate {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw DataError("non-numeric value '" + cell + "' at row " + std::to_string(row) +
                    ", column '" + column + "'");
  }
  if (!std::isfinite(value)) {
    throw DataError("non-finite value at row " + std::to_string(row) + ", column '" + column +
                    "'");
  }
  return value;
}

std::vector<int> recode(const std::vector<double>& raw, std::vector<double>& levels,
                        const std::string& what) {
  levels = raw;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.size() < 2) throw DataError(what + " has a single level");
  std::vector<int> codes(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    codes[i] = static_cast<int>(std::lower_bound(levels.begin(), levels.end(), raw[i]) -
                                levels.begin());
  }
  return codes;
}

int lookup_code(const std::vector<double>& levels, double original, const char* what) {
  for (std::size_t c = 0; c < levels.size(); ++c) {
    if (levels[c] == original) return static_cast<int>(c);
  }
  std::ostringstream msg;
  msg << what << " value " << original << " does not occur in the data";
  throw DataError(msg.str());
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int CsvData::treatment_code(double original) const {
  return lookup_code(treatment_values, original, "treatment");
}

int CsvData::moderator_code(double original) const {
  return lookup_code(moderator_values, original, "moderator");
}

CsvData load_csv(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_line(line);
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < header.size(); ++c) index[header[c]] = c;

  auto column = [&](const std::string& name, const char* role) {
    if (name.empty()) throw DataError(std::string("no column given for the ") + role);
    auto it = index.find(name);
    if (it == index.end()) {
      throw DataError(std::string("missing ") + role + " column '" + name + "'");
    }
    return it->second;
  };
  const auto y_col = column(roles.outcome, "outcome");
  const auto d_col = column(roles.treatment, "treatment");
  const auto z_col = column(roles.moderator, "moderator");

  std::vector<std::string> covariates = roles.covariates;
  if (covariates.empty()) {
    for (const auto& name : header) {
      if (name != roles.outcome && name != roles.treatment && name != roles.moderator) {
        covariates.push_back(name);
      }
    }
  }
  std::vector<std::size_t> x_cols;
  for (const auto& name : covariates) x_cols.push_back(column(name, "covariate"));

  std::vector<int> w_cols;
  for (const auto& name : roles.balance) {
    auto it = std::find(covariates.begin(), covariates.end(), name);
    if (it == covariates.end()) {
      throw DataError("balancing column '" + name + "' is not among the covariates");
    }
    w_cols.push_back(static_cast<int>(it - covariates.begin()));
  }

  std::vector<double> y, d_raw, z_raw;
  std::vector<std::vector<double>> x_rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    y.push_back(parse_cell(cells[y_col], row, header[y_col]));
    d_raw.push_back(parse_cell(cells[d_col], row, header[d_col]));
    z_raw.push_back(parse_cell(cells[z_col], row, header[z_col]));
    std::vector<double> xr;
    xr.reserve(x_cols.size());
    for (auto c : x_cols) xr.push_back(parse_cell(cells[c], row, header[c]));
    x_rows.push_back(std::move(xr));
  }
  if (y.empty()) throw DataError("'" + path + "' has no data rows");

  CsvData out;
  out.roles = roles;
  out.roles.covariates = covariates;
  auto d = recode(d_raw, out.treatment_values, "treatment");
  auto z = recode(z_raw, out.moderator_values, "moderator");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(x_cols.size()));
  for (std::size_t i = 0; i < x_rows.size(); ++i) {
    for (std::size_t c = 0; c < x_cols.size(); ++c) x(i, c) = x_rows[i][c];
  }
  out.data = make_dataset(Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())),
                          std::move(d), std::move(z), std::move(x), std::move(w_cols), covariates);
  return out;
}

void write_csv(const std::string& path, const CsvData& csv,
               const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const auto& data = csv.data;
  out << csv.roles.outcome << ',' << csv.roles.treatment << ',' << csv.roles.moderator;
  for (int c = 0; c < data.p(); ++c) {
    out << ',' << (data.covariate_names.empty() ? "x" + std::to_string(c) : data.covariate_names[c]);
  }
  for (const auto& [name, values] : extra) {
    if (values.size() != static_cast<std::size_t>(data.n())) {
      throw DataError("extra column '" + name + "' has the wrong length");
    }
    out << ',' << name;
  }
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    out << format_double(data.y[i]) << ',' << format_double(csv.treatment_values[data.d[i]]) << ','
        << format_double(csv.moderator_values[data.z[i]]);
    for (int c = 0; c < data.p(); ++c) out << ',' << format_double(data.x(i, c));
    for (const auto& col : extra) out << ',' << format_double(col.second[i]);
    out << '\n';
  }
}

CsvData as_csv_data(const Dataset& data) {
  CsvData csv;
  csv.data = data;
  if (csv.data.covariate_names.empty()) {
    for (int c = 0; c < data.p(); ++c) csv.data.covariate_names.push_back("x" + std::to_string(c));
  }
  for (int level = 0; level < data.treat_levels; ++level) csv.treatment_values.push_back(level);
  for (int level = 0; level < data.moderator_levels; ++level) csv.moderator_values.push_back(level);
  csv.roles.outcome = "y";
  csv.roles.treatment = "d";
  csv.roles.moderator = "z";
  csv.roles.covariates = csv.data.covariate_names;
  for (int c : data.w_cols) csv.roles.balance.push_back(csv.data.covariate_names[c]);
  return csv;
}

}  // namespace bgate
