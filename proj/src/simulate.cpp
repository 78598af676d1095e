#include "crashgan/simulate.hpp"

#include <cmath>
#include <limits>

#include "crashgan/error.hpp"

namespace crashgan::simulate {

void SimConfig::validate() const {
  if (!(dispersion > 0.0) || !std::isfinite(dispersion)) {
    throw ValidationError("dispersion must be > 0");
  }
  if (sample_size < 1) throw ValidationError("sample size must be >= 1");
  if (coefficients.empty()) throw ValidationError("at least one coefficient is required");
  if (!std::isfinite(beta0)) throw ValidationError("intercept must be finite");
  for (double b : coefficients) {
    if (!std::isfinite(b)) throw ValidationError("coefficients must be finite");
  }
}

double sample_gamma(double shape, double scale, Rng& rng) {
  if (!(shape > 0.0) || !(scale > 0.0)) throw ValidationError("gamma: shape and scale must be > 0");
  if (shape < 1.0) {
    const double u = uniform01(rng);
    return sample_gamma(shape + 1.0, scale, rng) * std::pow(1.0 - u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0, v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

double sample_gamma_heterogeneity(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ValidationError("gamma heterogeneity: alpha must be > 0");
  return sample_gamma(1.0 / alpha, alpha, rng);
}

CrashCount sample_poisson(double lambda, Rng& rng) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("poisson: lambda must be finite and >= 0");
  if (lambda == 0.0) return 0;
  if (lambda < 10.0) {
    const double u = uniform01(rng);
    double p = std::exp(-lambda);
    double cdf = p;
    CrashCount k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= lambda / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }
  // Hoermann (1993), PTRS.
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  while (true) {
    const double u = uniform01(rng) - 0.5;
    const double v = uniform01(rng);
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<CrashCount>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<CrashCount>(k);
    }
  }
}

SimDataset gen_dataset(const SimConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const auto n = static_cast<Eigen::Index>(config.sample_size);
  const auto fs = static_cast<Eigen::Index>(config.feature_count());
  SimDataset out;
  out.config = config;
  out.data.feature_names = default_feature_names(config.feature_count());
  out.data.features.resize(n, fs);
  out.data.counts.resize(config.sample_size);
  Eigen::VectorXd lambda(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double eta = config.beta0;
    for (Eigen::Index j = 0; j < fs; ++j) {
      const double x = uniform01(rng);
      out.data.features(i, j) = x;
      eta += config.coefficients[static_cast<std::size_t>(j)] * x;
    }
    lambda(i) = std::exp(eta) * sample_gamma_heterogeneity(config.dispersion, rng);
    out.data.counts[static_cast<std::size_t>(i)] = sample_poisson(lambda(i), rng);
  }
  out.data.true_means = std::move(lambda);
  return out;
}

ExperimentSuite gen_experiment_suite(const SimConfig& config, std::size_t n_ns, std::size_t n_pred) {
  config.validate();
  if (n_ns < 1 || n_pred < 1) throw ValidationError("suite needs at least one NS and one prediction set");
  ExperimentSuite suite;
  suite.config = config;
  auto with_seed = [&](std::string_view label, std::size_t i) {
    SimConfig c = config;
    c.seed = derive_seed(config.seed, label, i);
    return gen_dataset(c);
  };
  suite.cgan_train = with_seed("cgan_train", 0);
  suite.ns_test.reserve(n_ns);
  for (std::size_t i = 0; i < n_ns; ++i) suite.ns_test.push_back(with_seed("ns_test", i));
  suite.prediction_test.reserve(n_pred);
  for (std::size_t i = 0; i < n_pred; ++i) suite.prediction_test.push_back(with_seed("prediction_test", i));
  return suite;
}

Dataset gen_intersection_standin(std::size_t rows, std::uint64_t seed) {
  if (rows < 1) throw ValidationError("stand-in needs at least one row");
  Rng rng = make_rng(seed, "intersection_standin");
  constexpr double kIntercept = -5.69;
  constexpr double kMajor = 0.42;
  constexpr double kMinor = 0.20;
  constexpr double kDispersion = 0.5;
  Dataset d;
  d.feature_names = {"aadt_major", "aadt_minor"};
  d.features.resize(static_cast<Eigen::Index>(rows), 2);
  d.counts.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double ln_major = std::log(9000.0) + 0.45 * standard_normal(rng);
    const double ln_minor = std::log(900.0) + 0.70 * standard_normal(rng);
    d.features(r, 0) = std::round(std::exp(ln_major));
    d.features(r, 1) = std::round(std::exp(ln_minor));
    const double mu = std::exp(kIntercept + kMajor * std::log(d.features(r, 0)) + kMinor * std::log(d.features(r, 1)));
    d.counts[i] = sample_poisson(mu * sample_gamma_heterogeneity(kDispersion, rng), rng);
  }
  return d;
}

}  // namespace crashgan::simulate
