#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sensaipw/csv.hpp"
#include "sensaipw/dataset.hpp"
#include "sensaipw/glmfit.hpp"

namespace sensaipw {

struct ColumnRoles {
  std::string treatment;
  std::string outcome;
  std::vector<std::string> covariates;   // in design order
  std::vector<std::string> categorical;  // subset of covariates to one-hot encode
};

struct IngestSummary {
  Index rows_read = 0;
  Index rows_dropped = 0;  // missing value in a used column
  std::vector<std::string> warnings;
};

/// Builds the analysis sample from a CSV table. Numeric covariates taking
/// only the values 0 and 1 become Binary indicators; categorical covariates
/// are one-hot encoded with the lexicographically first level dropped. Rows
/// with a missing value in any used column are dropped and counted.
/// Throws DataError for missing columns, non-numeric values in numeric
/// columns, a treatment that is not 0/1 (naming the offending values) or an
/// empty result.
Dataset ingest(const CsvTable& table, const ColumnRoles& roles, IngestSummary* summary = nullptr);
Dataset ingest(const std::filesystem::path& path, const ColumnRoles& roles,
               IngestSummary* summary = nullptr);

/// Covariate expansion. Numeric monomials up to `degree`; indicators
/// (Binary columns and categorical dummies); numeric powers times
/// indicators; products of indicators from different variables.
struct ExpansionSpec {
  int degree = 1;                   // total degree of numeric monomials, 1..3
  int numeric_dummy_degree = 0;     // numeric powers times categorical dummies
  int numeric_binary_degree = 0;    // numeric powers times 0/1 columns
  bool dummy_interactions = false;  // indicator x indicator across variables

  void validate() const;
};

/// Column order: base numerics, pure powers, numeric cross products (by
/// total degree), indicators, numeric-power x indicator products (by power,
/// then numeric, then indicator), indicator pairs. Names read "age^2",
/// "age:visits", "educ=hs", "age^2:married", "educ=hs:married". The result
/// has an intercept column. Throws ConfigError on duplicate names.
DesignMatrix expand_covariates(const Dataset& data, const ExpansionSpec& spec);

}  // namespace sensaipw
