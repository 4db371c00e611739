#include "sensaipw/ingest.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "sensaipw/errors.hpp"

namespace sensaipw {

Index Dataset::treated_count() const {
  Index count = 0;
  for (Index i = 0; i < treatment.size(); ++i) count += treatment(i) == 1.0 ? 1 : 0;
  return count;
}

namespace {

bool is_missing(const std::string& field) {
  std::string_view f = field;
  while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
  while (!f.empty() && f.back() == ' ') f.remove_suffix(1);
  return f.empty() || f == "NA" || f == "NaN" || f == "nan" || f == ".";
}

std::size_t require_column(const CsvTable& table, const std::string& name, const char* role) {
  if (name.empty()) throw ConfigError(std::string("no ") + role + " column given");
  const auto j = table.column(name);
  if (!j) throw DataError(std::string(role) + " column '" + name + "' not found in the input");
  return *j;
}

std::string trimmed(const std::string& s) {
  const auto a = s.find_first_not_of(' ');
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(' ');
  return s.substr(a, b - a + 1);
}

}  // namespace

Dataset ingest(const CsvTable& table, const ColumnRoles& roles, IngestSummary* summary) {
  const std::size_t jt = require_column(table, roles.treatment, "treatment");
  const std::size_t jy = require_column(table, roles.outcome, "outcome");
  if (roles.covariates.empty()) throw ConfigError("no covariate columns given");
  std::set<std::string> seen;
  std::vector<std::size_t> jx;
  for (const auto& c : roles.covariates) {
    if (!seen.insert(c).second) throw ConfigError("covariate '" + c + "' listed twice");
    if (c == roles.treatment || c == roles.outcome) {
      throw ConfigError("column '" + c + "' cannot be both a covariate and treatment/outcome");
    }
    jx.push_back(require_column(table, c, "covariate"));
  }
  for (const auto& c : roles.categorical) {
    if (std::find(roles.covariates.begin(), roles.covariates.end(), c) == roles.covariates.end()) {
      throw ConfigError("categorical column '" + c + "' is not among the covariates");
    }
  }
  auto is_categorical = [&](const std::string& c) {
    return std::find(roles.categorical.begin(), roles.categorical.end(), c) != roles.categorical.end();
  };

  IngestSummary local;
  IngestSummary& info = summary != nullptr ? *summary : local;
  info = {};
  info.rows_read = static_cast<Index>(table.rows.size());
  if (table.rows.empty()) throw DataError("input has a header but no rows");

  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    bool missing = is_missing(row[jt]) || is_missing(row[jy]);
    for (std::size_t j : jx) missing = missing || is_missing(row[j]);
    if (!missing) keep.push_back(r);
  }
  info.rows_dropped = info.rows_read - static_cast<Index>(keep.size());
  if (info.rows_dropped > 0) {
    info.warnings.push_back(std::to_string(info.rows_dropped) + " rows with missing values dropped");
  }
  if (keep.empty()) throw DataError("no complete rows remain after dropping missing values");
  const Index n = static_cast<Index>(keep.size());

  Dataset data;
  data.treatment.resize(n);
  data.outcome.resize(n);
  std::set<std::string> bad_treatment;
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[keep[static_cast<std::size_t>(i)]];
    double t = -1.0;
    try {
      t = *parse_number(row[jt]);
    } catch (const DataError&) {
    }
    if (t != 0.0 && t != 1.0) {
      bad_treatment.insert(trimmed(row[jt]));
    }
    data.treatment(i) = t;
    try {
      data.outcome(i) = *parse_number(row[jy]);
    } catch (const DataError& e) {
      throw DataError("outcome column '" + roles.outcome + "': " + e.what());
    }
  }
  if (!bad_treatment.empty()) {
    std::string list;
    int shown = 0;
    for (const auto& v : bad_treatment) {
      if (shown++ == 5) {
        list += ", ...";
        break;
      }
      list += (list.empty() ? "'" : ", '") + v + "'";
    }
    throw DataError("treatment column '" + roles.treatment + "' must be coded 0/1; found " + list);
  }

  std::vector<Eigen::VectorXd> cols;
  for (std::size_t k = 0; k < roles.covariates.size(); ++k) {
    const std::string& name = roles.covariates[k];
    const std::size_t j = jx[k];
    if (is_categorical(name)) {
      std::set<std::string> levels;
      for (std::size_t r : keep) levels.insert(trimmed(table.rows[r][j]));
      if (levels.size() < 2) {
        info.warnings.push_back("categorical column '" + name + "' has a single level; no indicators made");
        continue;
      }
      auto it = levels.begin();
      for (++it; it != levels.end(); ++it) {
        Eigen::VectorXd v(n);
        for (Index i = 0; i < n; ++i) {
          v(i) = trimmed(table.rows[keep[static_cast<std::size_t>(i)]][j]) == *it ? 1.0 : 0.0;
        }
        cols.push_back(std::move(v));
        data.columns.push_back({name + "=" + *it, name, CovariateKind::Dummy});
      }
      continue;
    }
    Eigen::VectorXd v(n);
    bool zero_one = true;
    for (Index i = 0; i < n; ++i) {
      try {
        v(i) = *parse_number(table.rows[keep[static_cast<std::size_t>(i)]][j]);
      } catch (const DataError& e) {
        throw DataError("covariate '" + name + "': " + e.what() + " (declare it categorical?)");
      }
      zero_one = zero_one && (v(i) == 0.0 || v(i) == 1.0);
    }
    const bool both = zero_one && v.maxCoeff() == 1.0 && v.minCoeff() == 0.0;
    cols.push_back(std::move(v));
    data.columns.push_back({name, name, both ? CovariateKind::Binary : CovariateKind::Numeric});
  }
  data.covariates.resize(n, static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) data.covariates.col(static_cast<Index>(k)) = cols[k];
  return data;
}

Dataset ingest(const std::filesystem::path& path, const ColumnRoles& roles, IngestSummary* summary) {
  return ingest(read_csv(path), roles, summary);
}

}  // namespace sensaipw
