#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bgate/dataset.hpp"

namespace bgate {

/// Which CSV columns play which role. Empty `covariates` means "every column
/// not used as outcome, treatment or moderator". `balance` names must be
/// covariates.
struct ColumnRoles {
  std::string outcome;
  std::string treatment;
  std::string moderator;
  std::vector<std::string> covariates;
  std::vector<std::string> balance;
};

/// A dataset read from CSV plus the original values behind the level codes.
/// `treatment_values[c]` is the original value coded as c (sorted ascending).
struct CsvData {
  Dataset data;
  std::vector<double> treatment_values;
  std::vector<double> moderator_values;
  ColumnRoles roles;

  int treatment_code(double original) const;
  int moderator_code(double original) const;
};

/// Reads a UTF-8 CSV with a header row. Throws DataError naming the row and
/// column on missing columns, non-numeric or non-finite cells, and when the
/// treatment or moderator has a single level.
CsvData load_csv(const std::string& path, const ColumnRoles& roles);

/// Writes a dataset using original level values and the given column names.
/// Extra columns (name, values) are appended after the covariates. Doubles are
/// written with 17 significant digits so a reload is bit-exact.
void write_csv(const std::string& path, const CsvData& csv,
               const std::vector<std::pair<std::string, std::vector<double>>>& extra = {});

/// Convenience for simulated data: columns y, d, z, x0..x{p-1}.
CsvData as_csv_data(const Dataset& data);

}  // namespace bgate
