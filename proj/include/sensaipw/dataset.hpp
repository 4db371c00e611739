#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace sensaipw {

enum class CovariateKind {
  Numeric,  // continuous numeric column
  Binary,   // numeric column taking only the values 0 and 1
  Dummy,    // indicator for one non-reference level of a categorical column
};

struct CovariateInfo {
  std::string name;      // column label, e.g. "age" or "educ=hs"
  std::string variable;  // source variable, e.g. "educ"
  CovariateKind kind = CovariateKind::Numeric;
};

/// Observed sample: raw covariates (no intercept), binary treatment and
/// outcome. Outcomes of the arm not targeted may be NaN in simulated data.
struct Dataset {
  Eigen::MatrixXd covariates;
  Eigen::VectorXd treatment;
  Eigen::VectorXd outcome;
  std::vector<CovariateInfo> columns;

  Eigen::Index rows() const { return treatment.size(); }
  Eigen::Index treated_count() const;
};

}  // namespace sensaipw
