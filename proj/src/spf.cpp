#include "crashgan/spf.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "crashgan/error.hpp"
#include "crashgan/format.hpp"

namespace crashgan::spf {

namespace {

constexpr double kTolerance = 1e-8;
constexpr int kMaxIterations = 100;
constexpr int kMaxHalvings = 30;

double poisson_deviance(std::span<const CrashCount> y, const Eigen::VectorXd& mu) {
  double d = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double yi = static_cast<double>(y[i]);
    const double mi = mu(static_cast<Eigen::Index>(i));
    d += (yi > 0.0 ? yi * std::log(yi / mi) : 0.0) - (yi - mi);
  }
  return 2.0 * d;
}

}  // namespace

Formula Formula::linear(const std::vector<std::string>& names) {
  return {names, std::vector<bool>(names.size(), false)};
}

Formula Formula::logged(const std::vector<std::string>& names) {
  return {names, std::vector<bool>(names.size(), true)};
}

void Formula::validate() const {
  if (features.size() != log_flags.size()) throw ValidationError("formula: one log flag per feature required");
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      if (features[i] == features[j]) throw ValidationError("formula: duplicate feature '" + features[i] + "'");
    }
  }
}

PoissonFit fit_poisson(const Eigen::MatrixXd& design, std::span<const CrashCount> counts) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (static_cast<std::size_t>(n) != counts.size()) throw DimensionError("fit_poisson: design rows != counts");
  if (p < 1) throw DimensionError("fit_poisson: empty design");
  if (n < p + 2) {
    throw ValidationError("fit_poisson: need at least " + std::to_string(p + 2) + " rows, got " + std::to_string(n));
  }
  Eigen::VectorXd y(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = static_cast<double>(counts[static_cast<std::size_t>(i)]);
    total += y(i);
  }
  if (total == 0.0) throw DegenerateResponse("fit_poisson: all counts are zero");

  // Start from the intercept-only mean (column 0 is the intercept).
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta(0) = std::log(total / static_cast<double>(n) + 0.1);
  Eigen::VectorXd eta = design * beta;
  Eigen::VectorXd mu = eta.array().exp();
  double deviance = poisson_deviance(counts, mu);

  std::ostringstream trace;
  for (int iter = 1; iter <= kMaxIterations; ++iter) {
    const Eigen::VectorXd sw = mu.array().sqrt();
    const Eigen::VectorXd z = eta.array() + (y - mu).array() / mu.array();
    const Eigen::MatrixXd wx = sw.asDiagonal() * design;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(wx);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      throw CollinearFeatures("fit_poisson: weighted design has rank " + std::to_string(qr.rank()) + " < " +
                              std::to_string(p));
    }
    Eigen::VectorXd candidate = qr.solve(Eigen::VectorXd(sw.cwiseProduct(z)));

    // Step halving keeps the deviance from increasing.
    Eigen::VectorXd step = candidate - beta;
    Eigen::VectorXd new_eta, new_mu;
    double new_dev = 0.0;
    int halvings = 0;
    while (true) {
      new_eta = design * (beta + step);
      new_mu = new_eta.array().exp();
      new_dev = poisson_deviance(counts, new_mu);
      if ((std::isfinite(new_dev) && new_mu.allFinite() && new_dev <= deviance * (1.0 + 1e-12) + 1e-12) ||
          halvings >= kMaxHalvings) {
        break;
      }
      step *= 0.5;
      ++halvings;
    }
    if (!std::isfinite(new_dev) || !new_mu.allFinite()) {
      throw ConvergenceError("fit_poisson: non-finite fitted means at iteration " + std::to_string(iter));
    }
    const double change = step.cwiseAbs().maxCoeff();
    trace << " " << iter << ":" << change;
    beta += step;
    eta = std::move(new_eta);
    mu = std::move(new_mu);
    deviance = new_dev;
    if (change < kTolerance) {
      const Eigen::MatrixXd info = design.transpose() * mu.asDiagonal() * design;
      PoissonFit fit;
      fit.coefficients = beta;
      fit.covariance = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
      fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose());
      fit.iterations = iter;
      return fit;
    }
  }
  throw ConvergenceError("fit_poisson: no convergence in " + std::to_string(kMaxIterations) +
                         " iterations; max |delta beta| trace:" + trace.str());
}

double estimate_dispersion(std::span<const CrashCount> counts, const Eigen::VectorXd& mu) {
  if (counts.empty()) throw ValidationError("estimate_dispersion: empty input");
  if (static_cast<std::size_t>(mu.size()) != counts.size()) throw DimensionError("estimate_dispersion: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double m = mu(static_cast<Eigen::Index>(i));
    if (!(m > 0.0)) throw ValidationError("estimate_dispersion: fitted means must be > 0");
    const double yi = static_cast<double>(counts[i]);
    const double z = ((yi - m) * (yi - m) - yi) / m;
    num += m * z;
    den += m * m;
  }
  return std::max(0.0, num / den);
}

std::vector<std::string> SpfModel::coefficient_names() const {
  std::vector<std::string> names{"(intercept)"};
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    names.push_back(log_flags[j] ? "ln(" + feature_names[j] + ")" : feature_names[j]);
  }
  return names;
}

Eigen::MatrixXd design_matrix(const Dataset& data, const std::vector<std::string>& features,
                              const std::vector<bool>& log_flags) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(features.size()) + 1);
  x.col(0).setOnes();
  for (std::size_t j = 0; j < features.size(); ++j) {
    const auto src = static_cast<Eigen::Index>(data.feature_index(features[j]));
    const auto dst = static_cast<Eigen::Index>(j) + 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = data.features(i, src);
      if (log_flags[j]) {
        if (!(v > 0.0)) {
          throw ValidationError("feature '" + features[j] + "' is log-transformed but row " + std::to_string(i) +
                                " has non-positive value " + format_double(v));
        }
        x(i, dst) = std::log(v);
      } else {
        x(i, dst) = v;
      }
    }
  }
  return x;
}

SpfModel fit_spf(const Dataset& data, const Formula& formula) {
  formula.validate();
  data.validate();
  const Eigen::MatrixXd x = design_matrix(data, formula.features, formula.log_flags);
  const auto fit = fit_poisson(x, data.counts);
  const Eigen::VectorXd mu = (x * fit.coefficients).array().exp();
  SpfModel m;
  m.feature_names = formula.features;
  m.log_flags = formula.log_flags;
  m.coefficients = fit.coefficients;
  m.covariance = fit.covariance;
  m.dispersion = estimate_dispersion(data.counts, mu);
  return m;
}

double predict(const SpfModel& model, std::span<const double> row) {
  if (row.size() != model.feature_names.size()) {
    throw DimensionError("predict: expected " + std::to_string(model.feature_names.size()) + " features, got " +
                         std::to_string(row.size()));
  }
  double eta = model.coefficients(0);
  for (std::size_t j = 0; j < row.size(); ++j) {
    double v = row[j];
    if (model.log_flags[j]) {
      if (!(v > 0.0)) {
        throw ValidationError("predict: feature '" + model.feature_names[j] + "' needs a positive value");
      }
      v = std::log(v);
    }
    eta += model.coefficients(static_cast<Eigen::Index>(j) + 1) * v;
  }
  return std::exp(eta);
}

Eigen::VectorXd predict(const SpfModel& model, const Dataset& data) {
  const Eigen::MatrixXd x = design_matrix(data, model.feature_names, model.log_flags);
  return (x * model.coefficients).array().exp();
}

std::string_view to_string(EbWeighting w) {
  return w == EbWeighting::Classical ? "classical" : "swapped";
}

EbWeighting parse_eb_weighting(std::string_view name) {
  if (name == "classical") return EbWeighting::Classical;
  if (name == "swapped") return EbWeighting::Swapped;
  throw ValidationError("unknown EB weighting '" + std::string(name) + "' (classical | swapped)");
}

EbEstimate eb_estimate(double mu, CrashCount observed, double alpha, EbWeighting weighting, std::size_t site_id) {
  if (!(mu > 0.0)) throw ValidationError("eb_estimate: mu must be > 0");
  if (observed < 0) throw ValidationError("eb_estimate: observed count must be >= 0");
  if (!(alpha >= 0.0)) throw ValidationError("eb_estimate: alpha must be >= 0");
  const double am = alpha * mu;
  const double w = 1.0 / (1.0 + am);
  const double rest = am / (1.0 + am);
  const double y = static_cast<double>(observed);
  EbEstimate e;
  e.site_id = site_id;
  e.mu = mu;
  e.observed = observed;
  if (weighting == EbWeighting::Classical) {
    e.weight = w;
    e.eb = w * mu + rest * y;
  } else {
    e.weight = rest;
    e.eb = rest * mu + w * y;
  }
  return e;
}

std::vector<EbEstimate> eb_estimates(const SpfModel& model, const Dataset& data, EbWeighting weighting) {
  const Eigen::VectorXd mu = predict(model, data);
  std::vector<EbEstimate> out;
  out.reserve(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    out.push_back(eb_estimate(mu(static_cast<Eigen::Index>(i)), data.counts[i], model.dispersion, weighting, i));
  }
  return out;
}

std::vector<CoefficientTest> coefficient_significance(const SpfModel& model) {
  const auto names = model.coefficient_names();
  if (model.covariance.rows() != model.coefficients.size() || model.covariance.cols() != model.coefficients.size()) {
    throw DimensionError("coefficient_significance: covariance unavailable");
  }
  std::vector<CoefficientTest> out;
  for (Eigen::Index j = 0; j < model.coefficients.size(); ++j) {
    CoefficientTest t;
    t.name = names[static_cast<std::size_t>(j)];
    t.estimate = model.coefficients(j);
    const double var = model.covariance(j, j);
    t.std_error = var > 0.0 ? std::sqrt(var) : 0.0;
    if (t.std_error > 0.0) {
      t.z = t.estimate / t.std_error;
      t.p_value = std::erfc(std::abs(t.z) / std::numbers::sqrt2);
    } else {
      t.defined = false;
      t.z = 0.0;
      t.p_value = std::nan("");
    }
    out.push_back(t);
  }
  return out;
}

void write_spf(std::ostream& out, const SpfModel& model) {
  out << "spf v1\n";
  out << "features " << model.feature_names.size() << '\n';
  for (std::size_t j = 0; j < model.feature_names.size(); ++j) {
    out << "feature " << model.feature_names[j] << ' ' << (model.log_flags[j] ? "log" : "linear") << '\n';
  }
  const auto names = model.coefficient_names();
  out << "coefficients " << model.coefficients.size() << '\n';
  for (Eigen::Index j = 0; j < model.coefficients.size(); ++j) {
    out << "coef " << names[static_cast<std::size_t>(j)] << ' ' << format_double(model.coefficients(j)) << '\n';
  }
  out << "dispersion " << format_double(model.dispersion) << '\n';
  out << "covariance " << model.covariance.rows() << '\n';
  for (Eigen::Index r = 0; r < model.covariance.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.covariance.cols(); ++c) out << (c ? " " : "") << format_double(model.covariance(r, c));
    out << '\n';
  }
}

SpfModel read_spf(std::istream& in) {
  auto line_words = [&in]() {
    std::string line;
    while (std::getline(in, line)) {
      if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw ParseError("spf: unexpected end of input");
    std::istringstream ss(line);
    std::vector<std::string> w;
    for (std::string s; ss >> s;) w.push_back(s);
    return w;
  };
  auto keyed = [&](const std::string& key) {
    const auto w = line_words();
    if (w.size() != 2 || w[0] != key) throw ParseError("spf: expected '" + key + " <value>'");
    return w[1];
  };
  const auto header = line_words();
  if (header.size() != 2 || header[0] != "spf" || header[1] != "v1") throw ParseError("spf: bad header");
  SpfModel m;
  const auto nf = parse_int(keyed("features"));
  for (long long j = 0; j < nf; ++j) {
    const auto w = line_words();
    if (w.size() != 3 || w[0] != "feature" || (w[2] != "log" && w[2] != "linear")) {
      throw ParseError("spf: expected 'feature <name> log|linear'");
    }
    m.feature_names.push_back(w[1]);
    m.log_flags.push_back(w[2] == "log");
  }
  const auto nc = parse_int(keyed("coefficients"));
  if (nc != nf + 1) throw ParseError("spf: coefficient count must be feature count + 1");
  m.coefficients.resize(nc);
  for (long long j = 0; j < nc; ++j) {
    const auto w = line_words();
    if (w.size() != 3 || w[0] != "coef") throw ParseError("spf: expected 'coef <name> <value>'");
    m.coefficients(j) = parse_double(w[2]);
  }
  m.dispersion = parse_double(keyed("dispersion"));
  if (!(m.dispersion >= 0.0)) throw ParseError("spf: dispersion must be >= 0");
  const auto nv = parse_int(keyed("covariance"));
  if (nv != nc) throw ParseError("spf: covariance dimension mismatch");
  m.covariance.resize(nv, nv);
  for (long long r = 0; r < nv; ++r) {
    const auto w = line_words();
    if (static_cast<long long>(w.size()) != nv) throw ParseError("spf: covariance row length mismatch");
    for (long long c = 0; c < nv; ++c) m.covariance(r, c) = parse_double(w[static_cast<std::size_t>(c)]);
  }
  return m;
}

}  // namespace crashgan::spf
