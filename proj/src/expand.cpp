#include "sensaipw/ingest.hpp"

#include <functional>
#include <set>

#include "sensaipw/errors.hpp"

namespace sensaipw {

void ExpansionSpec::validate() const {
  if (degree < 1 || degree > 3) throw ConfigError("expansion degree must be 1, 2 or 3");
  if (numeric_dummy_degree < 0 || numeric_dummy_degree > 3 || numeric_binary_degree < 0 ||
      numeric_binary_degree > 3) {
    throw ConfigError("numeric-by-indicator degrees must lie in 0..3");
  }
}

namespace {

std::string power_name(const std::string& var, int k) {
  return k == 1 ? var : var + "^" + std::to_string(k);
}

// Exponent vectors of the given total degree over m variables, first
// variable's exponent descending.
void exponents(int m, int total, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  const int pos = static_cast<int>(cur.size());
  if (pos == m - 1) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int k = total; k >= 0; --k) {
    cur.push_back(k);
    exponents(m, total - k, cur, out);
    cur.pop_back();
  }
}

}  // namespace

DesignMatrix expand_covariates(const Dataset& data, const ExpansionSpec& spec) {
  spec.validate();
  const Index n = data.covariates.rows();
  if (static_cast<Index>(data.columns.size()) != data.covariates.cols()) {
    throw std::invalid_argument("covariate metadata does not match the covariate matrix");
  }

  std::vector<Index> numeric;
  std::vector<Index> indicator;
  for (Index j = 0; j < data.covariates.cols(); ++j) {
    (data.columns[static_cast<std::size_t>(j)].kind == CovariateKind::Numeric ? numeric : indicator).push_back(j);
  }

  std::vector<Eigen::VectorXd> cols;
  std::vector<std::string> names;
  std::set<std::string> used;
  auto add = [&](Eigen::VectorXd v, std::string name) {
    if (!used.insert(name).second) throw ConfigError("expansion produces the column name '" + name + "' twice");
    cols.push_back(std::move(v));
    names.push_back(std::move(name));
  };
  auto col = [&](Index j) { return data.covariates.col(j); };
  auto name_of = [&](Index j) -> const std::string& { return data.columns[static_cast<std::size_t>(j)].name; };
  auto power = [&](Index j, int k) -> Eigen::VectorXd { return col(j).array().pow(k); };

  for (Index j : numeric) add(col(j), name_of(j));
  for (int k = 2; k <= spec.degree; ++k) {
    for (Index j : numeric) add(power(j, k), power_name(name_of(j), k));
  }
  const int m = static_cast<int>(numeric.size());
  for (int total = 2; total <= spec.degree && m >= 2; ++total) {
    std::vector<std::vector<int>> all;
    std::vector<int> cur;
    exponents(m, total, cur, all);
    for (const auto& e : all) {
      int distinct = 0;
      for (int k : e) distinct += k > 0 ? 1 : 0;
      if (distinct < 2) continue;
      Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
      std::string name;
      for (int a = 0; a < m; ++a) {
        if (e[static_cast<std::size_t>(a)] == 0) continue;
        v.array() *= power(numeric[static_cast<std::size_t>(a)], e[static_cast<std::size_t>(a)]).array();
        if (!name.empty()) name += ':';
        name += power_name(name_of(numeric[static_cast<std::size_t>(a)]), e[static_cast<std::size_t>(a)]);
      }
      add(std::move(v), std::move(name));
    }
  }

  for (Index j : indicator) add(col(j), name_of(j));

  const int max_power = std::max(spec.numeric_dummy_degree, spec.numeric_binary_degree);
  for (int k = 1; k <= max_power; ++k) {
    for (Index j : numeric) {
      for (Index d : indicator) {
        const bool binary = data.columns[static_cast<std::size_t>(d)].kind == CovariateKind::Binary;
        if (k > (binary ? spec.numeric_binary_degree : spec.numeric_dummy_degree)) continue;
        add(power(j, k).cwiseProduct(col(d)), power_name(name_of(j), k) + ":" + name_of(d));
      }
    }
  }

  if (spec.dummy_interactions) {
    for (std::size_t a = 0; a < indicator.size(); ++a) {
      for (std::size_t b = a + 1; b < indicator.size(); ++b) {
        const auto& ca = data.columns[static_cast<std::size_t>(indicator[a])];
        const auto& cb = data.columns[static_cast<std::size_t>(indicator[b])];
        if (ca.variable == cb.variable) continue;
        add(col(indicator[a]).cwiseProduct(col(indicator[b])), ca.name + ":" + cb.name);
      }
    }
  }

  Eigen::MatrixXd values(n, static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) values.col(static_cast<Index>(k)) = cols[k];
  return DesignMatrix::with_intercept(values, names);
}

}  // namespace sensaipw
