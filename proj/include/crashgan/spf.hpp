#pragma once

// Negative binomial safety performance functions
//   mu = exp(b0 + sum_j b_j * f_j(x_j)),   f_j = ln or identity,
// fitted in two steps: Poisson maximum likelihood for the coefficients, then
// the auxiliary OLS regression (no constant) for the dispersion alpha.

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crashgan/dataset.hpp"

namespace crashgan::spf {

// Which dataset features enter the SPF, and which enter as ln(x).
struct Formula {
  std::vector<std::string> features;
  std::vector<bool> log_flags;

  static Formula linear(const std::vector<std::string>& names);
  static Formula logged(const std::vector<std::string>& names);
  void validate() const;
};

struct PoissonFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;  // inverse Fisher information
  int iterations = 0;
};

// Poisson log-link maximum likelihood by IRLS. `design` already contains the
// intercept column. Stops when max |delta beta| < 1e-8; fails after 100
// iterations.
PoissonFit fit_poisson(const Eigen::MatrixXd& design, std::span<const CrashCount> counts);

// alpha_hat = sum mu_i z_i / sum mu_i^2 with z_i = ((y_i - mu_i)^2 - y_i) / mu_i,
// floored at zero.
double estimate_dispersion(std::span<const CrashCount> counts, const Eigen::VectorXd& mu);

struct SpfModel {
  std::vector<std::string> feature_names;
  std::vector<bool> log_flags;
  Eigen::VectorXd coefficients;  // intercept first
  double dispersion = 0.0;
  Eigen::MatrixXd covariance;

  std::vector<std::string> coefficient_names() const;
};

SpfModel fit_spf(const Dataset& data, const Formula& formula);

// Rows of [1, f_1(x_1), ...] for the model's features, looked up by name.
Eigen::MatrixXd design_matrix(const Dataset& data, const std::vector<std::string>& features,
                              const std::vector<bool>& log_flags);

// `row` holds the model's features in model order (raw, untransformed).
double predict(const SpfModel& model, std::span<const double> row);
Eigen::VectorXd predict(const SpfModel& model, const Dataset& data);

// Weight placement in the EB blend:
//   Classical: EB = mu / (1 + alpha mu) + y * alpha mu / (1 + alpha mu)
//   Swapped:   EB = y / (1 + alpha mu) + mu * alpha mu / (1 + alpha mu)
enum class EbWeighting { Classical, Swapped };

std::string_view to_string(EbWeighting w);
EbWeighting parse_eb_weighting(std::string_view name);

struct EbEstimate {
  std::size_t site_id = 0;
  double mu = 0.0;
  CrashCount observed = 0;
  double eb = 0.0;
  double weight = 1.0;  // weight on mu
};

EbEstimate eb_estimate(double mu, CrashCount observed, double alpha,
                       EbWeighting weighting = EbWeighting::Classical, std::size_t site_id = 0);

std::vector<EbEstimate> eb_estimates(const SpfModel& model, const Dataset& data,
                                     EbWeighting weighting = EbWeighting::Classical);

struct CoefficientTest {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  bool defined = true;  // false when the standard error is zero
};

// Wald z tests with two-sided normal p-values.
std::vector<CoefficientTest> coefficient_significance(const SpfModel& model);

void write_spf(std::ostream& out, const SpfModel& model);
SpfModel read_spf(std::istream& in);

}  // namespace crashgan::spf
